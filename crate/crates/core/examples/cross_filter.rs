//! K-fold cross-filtering on a noisy benchmark: how big and how clean the
//! admitted set is for a few fold counts.
//!
//! ```text
//! cargo run --release --example cross_filter -- [noise_ratio]
//! ```

use anyhow::Result;
use splitnet::harness::{build_benchmark, ExperimentConfig};
use splitnet::metrics::Evaluator;
use splitnet::rng::{stage_seed, Stage};
use splitnet::warmup::{cross_filter, kfold_partition};

fn main() -> Result<()> {
    let cfg = ExperimentConfig {
        noise_ratio: std::env::args().nth(1).map_or(Ok(0.5), |s| s.parse())?,
        ..Default::default()
    };
    let bench = build_benchmark(&cfg)?;
    let view = bench.train.train_view();
    let eval = Evaluator::new(bench.train.ground_truth(), &bench.test);
    println!("clean fraction {:.3}", eval.clean_fraction());
    for k in [2, 4, 8] {
        let plan = kfold_partition(view.len(), k, stage_seed(cfg.seed, Stage::Folds))?;
        let out = cross_filter(view, &plan, &cfg.filter_config(), cfg.seed)?;
        for (fold, audit) in out.audit.iter().enumerate() {
            assert!(
                audit.evaluated.iter().all(|i| !audit.trained_on.contains(i)),
                "fold {fold} leaked"
            );
        }
        println!(
            "K={k}: admitted {:>4}, precision {:.4}",
            out.filtered.len(),
            eval.precision_of(&out.filtered.indices)
        );
    }
    Ok(())
}
