//! Step-by-step trace of a tiny run, re-derived from the public contracts.
//!
//! With a single batch per epoch every forward pass in an epoch sees the
//! weights from the end of the previous one, so the readout of every sample
//! can be recomputed from a snapshot of the network.

use std::collections::BTreeMap;

use cec_core::*;

fn tiny() -> LabeledDataset {
    let ds = generate(&SyntheticSpec {
        clean_classes: 3,
        samples_per_class: 5,
        dim: 4,
        cluster_spread: 0.3,
        extra_classes: 1,
        // round(0.13 * 15) = 2 noisy samples
        ncr: 0.13,
        seed: 11,
        heldout_per_class: 2,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(ds.len(), 17);
    assert_eq!(ds.noise_total(), 2);
    ds
}

fn config() -> TrainConfig {
    TrainConfig {
        epochs: 10,
        batch_size: 64,
        model: ModelKind::LinearHead,
        detector: DetectorConfig::new(2, 4).unwrap(),
        schedule: CurriculumSchedule::new(2, 4, 8, 0.6, 1.0).unwrap(),
        record_samples: true,
        seed: 5,
        ..Default::default()
    }
}

#[test]
fn every_epoch_matches_hand_replay() {
    let ds = tiny();
    let cfg = config();
    let mut trainer = Trainer::new(cfg.clone(), &ds).unwrap();
    let mut counters: BTreeMap<usize, SampleCounter> = (0..ds.len()).map(|i| (i, SampleCounter::default())).collect();
    let mut live: Vec<usize> = (0..ds.len()).collect();
    let mut saw = (false, false, false);
    let mut removed_total = 0;

    for m in 1..=cfg.epochs {
        let before = trainer.network().clone();
        let report = trainer.train_epoch(m).unwrap();
        let traces = report.samples.as_ref().unwrap();
        assert_eq!(report.live, live.len());
        assert_eq!(traces.iter().map(|t| t.sample_id).collect::<Vec<_>>(), live);

        let mut participating = 0;
        let mut removed_now = Vec::new();
        for t in traces {
            let id = t.sample_id;
            let cos = before.forward(&ds.row_f64(id)).unwrap().cosines;
            let obs = derive_observation(&cos, ds.observed_labels[id], id, m).unwrap();
            assert_eq!((t.predicted_label, t.s_p, t.s_n), (obs.predicted_label, obs.s_p, obs.s_n), "epoch {m} sample {id}");

            let cls = classify_sample(&obs, &cfg.thresholds);
            assert_eq!(t.class, cls);
            let mask = if m <= cfg.schedule.e1 {
                true
            } else {
                match cls {
                    SampleClass::Easy => true,
                    SampleClass::Inconsistent => false,
                    SampleClass::Hard => 1.0 - obs.s_p < retention_threshold(m, &cfg.schedule),
                }
            };
            assert_eq!(t.participated, mask, "epoch {m} sample {id} {cls:?}");
            participating += usize::from(mask);

            let c = counters.get_mut(&id).unwrap();
            if cls == SampleClass::Inconsistent {
                c.cic += 1;
                c.tic += 1;
            } else {
                c.cic = 0;
            }
            if c.cic > 2 || c.tic > 4 {
                removed_now.push(id);
            }
            match cls {
                SampleClass::Easy => saw.0 = true,
                SampleClass::Hard => saw.1 = true,
                SampleClass::Inconsistent => saw.2 = true,
            }
        }
        assert_eq!(report.participating, participating);
        let reported: Vec<usize> = report.removals.iter().map(|e| e.sample_id).collect();
        assert_eq!(reported, removed_now, "epoch {m}");
        for ev in &report.removals {
            let c = counters[&ev.sample_id];
            assert_eq!((ev.cic, ev.tic, ev.epoch), (c.cic, c.tic, m));
        }
        removed_total += removed_now.len();
        live.retain(|id| !removed_now.contains(id));
    }

    assert!(saw.0 && saw.1 && saw.2, "trace should exercise every class");
    assert!(removed_total > 0, "trace should include removals");
    let final_live: Vec<usize> = trainer.detector().live_ids().collect();
    assert_eq!(final_live, live);
}
