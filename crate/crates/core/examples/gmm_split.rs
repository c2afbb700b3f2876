//! Fit the two-component loss mixture after a short plain cross-entropy
//! warm-up and report how its clean posterior lines up with the truth.
//!
//! ```text
//! cargo run --release --example gmm_split -- [noise_ratio]
//! ```

use anyhow::Result;
use splitnet::gmm::{model_losses, GmmConfig};
use splitnet::harness::{build_benchmark, ExperimentConfig};
use splitnet::metrics::Evaluator;
use splitnet::rng::{stage_rng, stage_seed, Stage};
use splitnet::warmup::plain_warmup;

fn main() -> Result<()> {
    let cfg = ExperimentConfig {
        noise_ratio: std::env::args().nth(1).map_or(Ok(0.4), |s| s.parse())?,
        ..Default::default()
    };
    let bench = build_benchmark(&cfg)?;
    let mut net = cfg
        .classifier()
        .build(cfg.dim, cfg.classes, &mut stage_rng(cfg.seed, Stage::MainInit))?;
    plain_warmup(
        &mut net,
        bench.train.train_view(),
        &cfg.warmup_config().schedule,
        cfg.warmup_epochs,
        stage_seed(cfg.seed, Stage::Warmup),
    )?;

    let model = model_losses(
        &net,
        bench.train.features(),
        bench.train.noisy_labels(),
        &GmmConfig::default(),
    )?;
    let p = &model.fit.params;
    println!("EM iterations {}", model.fit.log_likelihood.len() - 1);
    println!(
        "means {:.4?} variances {:.4?} weights {:.4?}",
        p.means, p.variances, p.weights
    );
    println!("clean component {}", p.clean_component);

    let eval = Evaluator::new(bench.train.ground_truth(), &bench.test);
    let pred: Vec<bool> = model.posterior.as_slice().iter().map(|&w| w >= 0.5).collect();
    let m = eval.split_metrics(&pred)?;
    println!(
        "w >= 0.5 split: precision {:.4} recall {:.4} F1 {:.4} accuracy {:.4}",
        m.precision, m.recall, m.f1, m.accuracy
    );
    Ok(())
}
