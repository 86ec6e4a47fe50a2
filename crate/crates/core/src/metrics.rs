//! Detection scores against ground truth, and verification equal error rate.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aam_loss::{dot, norm};
use crate::error::{CecError, Result};

/// Confusion counts with "flagged as noisy" as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    /// Nothing was flagged; precision is reported as 0.
    pub flagged_empty: bool,
    /// The ground truth holds no noisy samples; recall is reported as 0.
    pub truth_empty: bool,
}

pub fn detection_metrics(flagged: &BTreeSet<usize>, truth: &[bool]) -> Result<DetectionReport> {
    if let Some(&id) = flagged.iter().find(|&&id| id >= truth.len()) {
        return Err(CecError::InvalidInput(format!(
            "flagged sample {id} outside dataset of {} samples",
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (i, &noisy) in truth.iter().enumerate() {
        match (flagged.contains(&i), noisy) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(DetectionReport {
        precision,
        recall,
        f1,
        accuracy: ratio(tp + tn, truth.len()),
        tp,
        fp,
        tn,
        fn_,
        flagged_empty: tp + fp == 0,
        truth_empty: tp + fn_ == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub score: f64,
    pub is_target: bool,
}

/// Verification trials. Needs at least one target and one non-target for
/// [`eer`] to be defined.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialSet {
    pub trials: Vec<Trial>,
}

impl TrialSet {
    pub fn from_scores(targets: &[f64], nontargets: &[f64]) -> Self {
        let trials = targets
            .iter()
            .map(|&score| Trial { score, is_target: true })
            .chain(nontargets.iter().map(|&score| Trial { score, is_target: false }))
            .collect();
        Self { trials }
    }
}

/// Equal error rate by threshold sweep.
///
/// A trial is accepted when `score >= threshold`. Thresholds run over the
/// sorted unique scores plus `+inf`; the crossing of FAR and FRR is linearly
/// interpolated between the two operating points that bracket it.
pub fn eer(trials: &TrialSet) -> Result<f64> {
    let mut tar: Vec<f64> = Vec::new();
    let mut non: Vec<f64> = Vec::new();
    for t in &trials.trials {
        if !t.score.is_finite() {
            return Err(CecError::InvalidInput(format!("non-finite trial score {}", t.score)));
        }
        if t.is_target {
            tar.push(t.score);
        } else {
            non.push(t.score);
        }
    }
    if tar.is_empty() || non.is_empty() {
        return Err(CecError::UndefinedMetric(format!(
            "EER needs target and non-target trials (got {} and {})",
            tar.len(),
            non.len()
        )));
    }
    tar.sort_by(f64::total_cmp);
    non.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = tar.iter().chain(&non).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let (nt, nn) = (tar.len() as f64, non.len() as f64);
    // sorted arrays: number below t is the partition point
    let point = |t: f64| {
        let far = (non.len() - non.partition_point(|&s| s < t)) as f64 / nn;
        let frr = tar.partition_point(|&s| s < t) as f64 / nt;
        (far, frr)
    };

    let mut prev = point(thresholds[0]);
    if prev.0 - prev.1 <= 0.0 {
        return Ok(prev.0);
    }
    for &t in &thresholds[1..] {
        let cur = point(t);
        let d_cur = cur.0 - cur.1;
        if d_cur == 0.0 {
            return Ok(cur.0);
        }
        if d_cur < 0.0 {
            let d_prev = prev.0 - prev.1;
            let alpha = d_prev / (d_prev - d_cur);
            let far = prev.0 + alpha * (cur.0 - prev.0);
            let frr = prev.1 + alpha * (cur.1 - prev.1);
            return Ok(0.5 * (far + frr));
        }
        prev = cur;
    }
    unreachable!("FAR - FRR is -1 at the +inf threshold")
}

/// Equal numbers of same-class and different-class pairs, scored by cosine.
///
/// Pairs are sampled with a seed-determined stream. Classes with fewer than
/// two members cannot supply target pairs.
pub fn verification_trials(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    pairs_per_kind: usize,
    seed: u64,
) -> Result<TrialSet> {
    if embeddings.len() != labels.len() {
        return Err(CecError::InvalidInput("embeddings and labels differ in length".into()));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let with_pairs: Vec<usize> = (0..classes).filter(|&c| members[c].len() >= 2).collect();
    let populated: Vec<usize> = (0..classes).filter(|&c| !members[c].is_empty()).collect();
    if with_pairs.is_empty() || populated.len() < 2 {
        return Err(CecError::UndefinedMetric(
            "need one class with two samples and two populated classes for trials".into(),
        ));
    }

    let cosine = |a: usize, b: usize| {
        let (ea, eb) = (&embeddings[a], &embeddings[b]);
        dot(ea, eb) / (norm(ea) * norm(eb))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut targets = Vec::with_capacity(pairs_per_kind);
    let mut nontargets = Vec::with_capacity(pairs_per_kind);
    for _ in 0..pairs_per_kind {
        let c = with_pairs[rng.random_range(0..with_pairs.len())];
        let m = &members[c];
        let a = rng.random_range(0..m.len());
        let mut b = rng.random_range(0..m.len() - 1);
        if b >= a {
            b += 1;
        }
        targets.push(cosine(m[a], m[b]));
    }
    for _ in 0..pairs_per_kind {
        let ca = rng.random_range(0..populated.len());
        let mut cb = rng.random_range(0..populated.len() - 1);
        if cb >= ca {
            cb += 1;
        }
        let (ma, mb) = (&members[populated[ca]], &members[populated[cb]]);
        let a = ma[rng.random_range(0..ma.len())];
        let b = mb[rng.random_range(0..mb.len())];
        nontargets.push(cosine(a, b));
    }
    Ok(TrialSet::from_scores(&targets, &nontargets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn perfect_detection() {
        let truth = [false, true, false, true];
        let r = detection_metrics(&ids(&[1, 3]), &truth).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn nothing_flagged() {
        let truth = [false, true, false];
        let r = detection_metrics(&BTreeSet::new(), &truth).unwrap();
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.precision, 0.0);
        assert!(r.flagged_empty);
        assert!(!r.truth_empty);
    }

    #[test]
    fn hand_confusion_matrix() {
        // 10 samples, noisy = {0,1,2,3}; flagged 3 true (0,1,2) + 2 false (5,6)
        let truth: Vec<bool> = (0..10).map(|i| i < 4).collect();
        let r = detection_metrics(&ids(&[0, 1, 2, 5, 6]), &truth).unwrap();
        assert_eq!((r.tp, r.fp, r.tn, r.fn_), (3, 2, 4, 1));
        assert!((r.precision - 0.6).abs() < 1e-15);
        assert!((r.recall - 0.75).abs() < 1e-15);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.accuracy - 0.7).abs() < 1e-15);
    }

    #[test]
    fn flagged_out_of_range() {
        assert!(detection_metrics(&ids(&[4]), &[true, false]).is_err());
    }

    #[test]
    fn eer_perfect_separation() {
        let t = TrialSet::from_scores(&[0.9; 5], &[0.1; 5]);
        assert_eq!(eer(&t).unwrap(), 0.0);
    }

    #[test]
    fn eer_identical_distributions() {
        let s = [0.2, 0.5, 0.5, 0.7];
        assert!((eer(&TrialSet::from_scores(&s, &s)).unwrap() - 0.5).abs() < 1e-12);
        assert!((eer(&TrialSet::from_scores(&[0.3], &[0.3])).unwrap() - 0.5).abs() < 1e-12);
    }

    /// Exhaustive sweep over every midpoint threshold: the EER is the FAR at a
    /// threshold where FAR equals FRR.
    fn sweep_oracle(tar: &[f64], non: &[f64]) -> Option<f64> {
        let mut all: Vec<f64> = tar.iter().chain(non).copied().collect();
        all.sort_by(f64::total_cmp);
        let mut cands = vec![all[0] - 1.0];
        cands.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        cands.push(all[all.len() - 1] + 1.0);
        cands.into_iter().find_map(|t| {
            let far = non.iter().filter(|&&s| s >= t).count() as f64 / non.len() as f64;
            let frr = tar.iter().filter(|&&s| s < t).count() as f64 / tar.len() as f64;
            (far == frr).then_some(far)
        })
    }

    #[test]
    fn eer_hand_example() {
        let tar = [0.8, 0.6, 0.4];
        let non = [0.7, 0.3, 0.2];
        let want = sweep_oracle(&tar, &non).unwrap();
        assert!((want - 1.0 / 3.0).abs() < 1e-15);
        let got = eer(&TrialSet::from_scores(&tar, &non)).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn eer_degenerate() {
        assert!(matches!(
            eer(&TrialSet::from_scores(&[0.3, 0.4], &[])),
            Err(CecError::UndefinedMetric(_))
        ));
        assert!(eer(&TrialSet::default()).is_err());
    }

    #[test]
    fn trials_are_balanced_and_seeded() {
        let emb: Vec<Vec<f64>> = (0..12).map(|i| vec![(i % 3) as f64 + 1.0, (i % 5) as f64 - 2.0]).collect();
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let a = verification_trials(&emb, &labels, 50, 7).unwrap();
        let b = verification_trials(&emb, &labels, 50, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials.iter().filter(|t| t.is_target).count(), 50);
        assert_eq!(a.trials.len(), 100);
        assert!(verification_trials(&emb[..1], &labels[..1], 5, 0).is_err());
    }

    proptest! {
        #[test]
        fn eer_rank_invariant(tar in prop::collection::vec(-1.0f64..1.0, 1..30),
                              non in prop::collection::vec(-1.0f64..1.0, 1..30),
                              a in 0.1f64..5.0, b in -3.0f64..3.0) {
            let base = eer(&TrialSet::from_scores(&tar, &non)).unwrap();
            let f = |v: &Vec<f64>| v.iter().map(|x| (a * x + b).exp()).collect::<Vec<_>>();
            let moved = eer(&TrialSet::from_scores(&f(&tar), &f(&non))).unwrap();
            prop_assert!((base - moved).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&base));
        }

        #[test]
        fn eer_matches_oracle_when_exact(tar in prop::collection::vec(0usize..20, 1..15),
                                         non in prop::collection::vec(0usize..20, 1..15)) {
            let tar: Vec<f64> = tar.into_iter().map(|v| v as f64).collect();
            let non: Vec<f64> = non.into_iter().map(|v| v as f64).collect();
            let got = eer(&TrialSet::from_scores(&tar, &non)).unwrap();
            if let Some(want) = sweep_oracle(&tar, &non) {
                prop_assert!((got - want).abs() < 1e-12, "got {} oracle {}", got, want);
            }
        }

        #[test]
        fn dominated_scores_stay_below_half(tar in prop::collection::vec(0.0f64..1.0, 1..30), shift in 0.0f64..1.0) {
            let non: Vec<f64> = tar.iter().map(|x| x - shift).collect();
            let e = eer(&TrialSet::from_scores(&tar, &non)).unwrap();
            prop_assert!(e <= 0.5 + 1e-12);
        }

        #[test]
        fn confusion_counts_partition(truth in prop::collection::vec(any::<bool>(), 1..60),
                                      flags in prop::collection::vec(any::<bool>(), 60)) {
            let flagged: BTreeSet<usize> = (0..truth.len()).filter(|&i| flags[i]).collect();
            let r = detection_metrics(&flagged, &truth).unwrap();
            prop_assert_eq!(r.tp + r.fp + r.tn + r.fn_, truth.len());
            for v in [r.precision, r.recall, r.f1, r.accuracy] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
