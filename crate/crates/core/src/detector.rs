//! Cross-epoch inconsistency counting and noisy-label removal.
//!
//! Each sample carries two counters: `cic`, the length of its current run of
//! consecutive inconsistent epochs, and `tic`, the total number of
//! inconsistent epochs seen so far. A sample is flagged as noisy when either
//! counter strictly exceeds its threshold, and is then removed for good.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CecError, Result};
use crate::taxonomy::SampleClass;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounter {
    pub cic: u32,
    pub tic: u32,
    pub removed: bool,
    pub removal_epoch: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub tau_cic: u32,
    pub tau_tic: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            tau_cic: 25,
            tau_tic: 95,
        }
    }
}

impl DetectorConfig {
    pub fn new(tau_cic: u32, tau_tic: u32) -> Result<Self> {
        let c = Self { tau_cic, tau_tic };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_cic == 0 || self.tau_tic == 0 {
            return Err(CecError::InvalidConfig(format!(
                "tau_cic and tau_tic must be positive (got {} and {})",
                self.tau_cic, self.tau_tic
            )));
        }
        if self.tau_cic >= self.tau_tic {
            return Err(CecError::InvalidConfig(format!(
                "tau_cic must be less than tau_tic (got tau_cic={} tau_tic={})",
                self.tau_cic, self.tau_tic
            )));
        }
        Ok(())
    }
}

/// Which counter(s) tripped when a sample was removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trigger {
    #[serde(rename = "CIC")]
    Cic,
    #[serde(rename = "TIC")]
    Tic,
    #[serde(rename = "both")]
    Both,
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trigger::Cic => "CIC",
            Trigger::Tic => "TIC",
            Trigger::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalEvent {
    pub sample_id: usize,
    pub epoch: u32,
    pub trigger: Trigger,
    pub cic: u32,
    pub tic: u32,
}

pub fn update_counter(counter: SampleCounter, cls: SampleClass) -> Result<SampleCounter> {
    if counter.removed {
        return Err(CecError::ContractViolation(
            "cannot update the counter of a removed sample".into(),
        ));
    }
    Ok(match cls {
        SampleClass::Inconsistent => SampleCounter {
            cic: counter.cic + 1,
            tic: counter.tic + 1,
            ..counter
        },
        SampleClass::Easy | SampleClass::Hard => SampleCounter { cic: 0, ..counter },
    })
}

pub fn is_noisy(counter: &SampleCounter, config: &DetectorConfig) -> bool {
    counter.cic > config.tau_cic || counter.tic > config.tau_tic
}

/// Which counters are allowed to remove samples. Counting itself always runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterToggles {
    pub cic: bool,
    pub tic: bool,
}

impl Default for CounterToggles {
    fn default() -> Self {
        Self { cic: true, tic: true }
    }
}

fn trigger_for(counter: &SampleCounter, config: &DetectorConfig, on: CounterToggles) -> Option<Trigger> {
    let cic = on.cic && counter.cic > config.tau_cic;
    let tic = on.tic && counter.tic > config.tau_tic;
    match (cic, tic) {
        (true, true) => Some(Trigger::Both),
        (true, false) => Some(Trigger::Cic),
        (false, true) => Some(Trigger::Tic),
        (false, false) => None,
    }
}

/// Applies one epoch of classifications to the registry and removes newly
/// flagged samples. Returns exactly the ids removed at `epoch`.
///
/// The registry is left untouched if any classification refers to an
/// unknown or already-removed sample.
pub fn end_of_epoch<I>(
    registry: &mut BTreeMap<usize, SampleCounter>,
    classifications: I,
    config: &DetectorConfig,
    epoch: u32,
) -> Result<BTreeSet<usize>>
where
    I: IntoIterator<Item = (usize, SampleClass)>,
{
    let events = apply_epoch(registry, classifications, config, CounterToggles::default(), epoch)?;
    Ok(events.into_iter().map(|e| e.sample_id).collect())
}

fn apply_epoch<I>(
    registry: &mut BTreeMap<usize, SampleCounter>,
    classifications: I,
    config: &DetectorConfig,
    toggles: CounterToggles,
    epoch: u32,
) -> Result<Vec<RemovalEvent>>
where
    I: IntoIterator<Item = (usize, SampleClass)>,
{
    let mut classes: BTreeMap<usize, SampleClass> = BTreeMap::new();
    for (id, cls) in classifications {
        match registry.get(&id) {
            None => {
                return Err(CecError::ContractViolation(format!(
                    "classification for unknown sample {id}"
                )))
            }
            Some(c) if c.removed => {
                return Err(CecError::ContractViolation(format!(
                    "classification for sample {id} removed at epoch {}",
                    c.removal_epoch.unwrap_or_default()
                )))
            }
            Some(_) => {}
        }
        if classes.insert(id, cls).is_some() {
            return Err(CecError::ContractViolation(format!(
                "sample {id} classified twice in epoch {epoch}"
            )));
        }
    }

    let mut events = Vec::new();
    for (id, cls) in classes {
        let slot = registry.get_mut(&id).expect("validated above");
        let mut next = update_counter(*slot, cls)?;
        if let Some(trigger) = trigger_for(&next, config, toggles) {
            next.removed = true;
            next.removal_epoch = Some(epoch);
            events.push(RemovalEvent {
                sample_id: id,
                epoch,
                trigger,
                cic: next.cic,
                tic: next.tic,
            });
        }
        *slot = next;
    }
    Ok(events)
}

/// Counter registry for a whole training set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Detector {
    config: DetectorConfig,
    toggles: CounterToggles,
    registry: BTreeMap<usize, SampleCounter>,
}

impl Detector {
    pub fn new<I: IntoIterator<Item = usize>>(
        config: DetectorConfig,
        toggles: CounterToggles,
        sample_ids: I,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            toggles,
            registry: sample_ids.into_iter().map(|id| (id, SampleCounter::default())).collect(),
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn toggles(&self) -> CounterToggles {
        self.toggles
    }

    pub fn registry(&self) -> &BTreeMap<usize, SampleCounter> {
        &self.registry
    }

    pub fn counter(&self, id: usize) -> Option<&SampleCounter> {
        self.registry.get(&id)
    }

    pub fn is_live(&self, id: usize) -> bool {
        self.registry.get(&id).is_some_and(|c| !c.removed)
    }

    pub fn live_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.registry.iter().filter(|(_, c)| !c.removed).map(|(&id, _)| id)
    }

    pub fn live_count(&self) -> usize {
        self.registry.values().filter(|c| !c.removed).count()
    }

    pub fn removed_ids(&self) -> BTreeSet<usize> {
        self.registry
            .iter()
            .filter(|(_, c)| c.removed)
            .map(|(&id, _)| id)
            .collect()
    }

    /// Events are returned in ascending sample id order.
    pub fn end_of_epoch<I>(&mut self, classifications: I, epoch: u32) -> Result<Vec<RemovalEvent>>
    where
        I: IntoIterator<Item = (usize, SampleClass)>,
    {
        apply_epoch(&mut self.registry, classifications, &self.config, self.toggles, epoch)
    }
}
