//! Ablation over the counting and curriculum toggles on one synthetic dataset.
//!
//! cargo run --release -p cec-core --example ablation -- [ncr] [seeds]

use std::thread;

use cec_core::{generate, run, ModelKind, SyntheticSpec, Toggles, TrainConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let ncr: f64 = args.next().map_or(0.05, |a| a.parse().expect("ncr"));
    let seeds: u64 = args.next().map_or(5, |a| a.parse().expect("seeds"));

    let variants = [
        ("baseline", Toggles::baseline()),
        ("w/o CIC", Toggles { enable_cic: false, ..Toggles::default() }),
        ("w/o TIC", Toggles { enable_tic: false, ..Toggles::default() }),
        ("w/o CL", Toggles { enable_curriculum: false, ..Toggles::default() }),
        ("CEC", Toggles::default()),
    ];

    println!("{:<10} {:>4} {:>8} {:>8} {:>8} {:>8} {:>8} {:>7}", "variant", "seed", "recall", "prec", "f1", "eer", "resid", "first");
    for seed in 0..seeds {
        let ds = generate(&SyntheticSpec { ncr, seed, ..Default::default() }).expect("dataset");
        let results: Vec<_> = thread::scope(|s| {
            let handles: Vec<_> = variants
                .iter()
                .map(|(name, toggles)| {
                    let ds = &ds;
                    s.spawn(move || {
                        let cfg = TrainConfig {
                            seed,
                            toggles: *toggles,
                            model: ModelKind::Mlp { hidden: 64, embedding_dim: 32 },
                            ..Default::default()
                        };
                        (*name, run(&cfg, ds).expect("run"))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for (name, log) in results {
            let s = &log.summary;
            let first = s.removals.iter().map(|e| e.epoch).min().unwrap_or(0);
            println!(
                "{:<10} {:>4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>7}",
                name,
                seed,
                s.detection.recall,
                s.detection.precision,
                s.detection.f1,
                s.eer.unwrap_or(f64::NAN),
                log.residual_noise_fraction(),
                first
            );
        }
    }
}
