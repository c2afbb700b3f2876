//! Run every variant on one benchmark, sharing the filter and warm-up, and
//! print a final-accuracy table.
//!
//! ```text
//! cargo run --release --example ablation_sweep -- [noise_ratio] [seed]
//! ```

use anyhow::Result;
use rayon::prelude::*;
use splitnet::harness::{build_benchmark, run_on, warm_start, ExperimentConfig, Variant};
use splitnet::training::DumpOptions;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let base = ExperimentConfig {
        noise_ratio: args.next().map_or(Ok(0.5), |s| s.parse())?,
        seed: args.next().map_or(Ok(0), |s| s.parse())?,
        ..Default::default()
    };
    let bench = build_benchmark(&base)?;
    let warm = warm_start(&base, &bench)?;
    println!("filtered set {} samples", warm.filtered.len());

    let variants = [
        Variant::Full,
        Variant::NoSplitNet,
        Variant::NoWarmup,
        Variant::NoHedging,
        Variant::FixedThreshold(0.5),
        Variant::FixedThreshold(0.75),
        Variant::FixedThreshold(0.95),
        Variant::PlainCe,
    ];
    let rows: Vec<_> = variants
        .par_iter()
        .map(|&variant| {
            let cfg = ExperimentConfig {
                variant,
                ..base.clone()
            };
            run_on(&cfg, &bench, Some(&warm), &DumpOptions::default()).map(|r| (variant, r.summary))
        })
        .collect::<Result<_, _>>()?;
    println!("{:<22} {:>8} {:>8} {:>8}", "variant", "best", "last", "split F1");
    for (variant, s) in rows {
        let f1 = s.best_split_f1.map_or("-".to_string(), |f| format!("{f:.4}"));
        println!(
            "{:<22} {:>8.4} {:>8.4} {:>8}",
            variant.to_string(),
            s.best_test_acc,
            s.last_test_acc,
            f1
        );
    }
    Ok(())
}
