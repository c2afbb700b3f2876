//! One outer step by hand: warm up, model the losses, hedge, train SplitNet
//! on the hedged set and compare its split against the mixture's.
//!
//! ```text
//! cargo run --release --example splitnet_split -- [noise_ratio]
//! ```

use anyhow::Result;
use splitnet::gmm::{model_losses, GmmConfig};
use splitnet::harness::{build_benchmark, warm_start, ExperimentConfig};
use splitnet::hedging::{compute_thresholds, hedge_stats, select_hedged_set, SplitLabel};
use splitnet::metrics::Evaluator;
use splitnet::nn::softmax;
use splitnet::rng::{stage_rng, Stage};
use splitnet::splitnet::{build_input, PredictionHistory, SplitNet};

fn main() -> Result<()> {
    let cfg = ExperimentConfig {
        noise_ratio: std::env::args().nth(1).map_or(Ok(0.5), |s| s.parse())?,
        ..Default::default()
    };
    let bench = build_benchmark(&cfg)?;
    let warm = warm_start(&cfg, &bench)?;
    let view = bench.train.train_view();
    let eval = Evaluator::new(bench.train.ground_truth(), &bench.test);

    let model = model_losses(&warm.net, view.features, view.labels, &GmmConfig::default())?;
    let w = model.posterior.as_slice();
    let (mean, var) = hedge_stats(w)?;
    let t = compute_thresholds(mean, var, cfg.pivot)?;
    let hedged = select_hedged_set(w, &t);
    println!(
        "posterior mean {mean:.3} var {var:.4}: tau_mu {:.3} tau_nu {:.3}, hedged {} clean / {} noisy",
        t.tau_mu,
        t.tau_nu,
        hedged.count(SplitLabel::Clean),
        hedged.count(SplitLabel::Noisy)
    );

    let history = PredictionHistory::new(softmax(warm.net.predict(view.features)?.view()));
    let inputs = build_input(&history, view.labels)?;
    let split_cfg = cfg.splitnet_config();
    let mut net = SplitNet::new(
        cfg.classes,
        split_cfg.clone(),
        &mut stage_rng(cfg.seed, Stage::SplitNetInit),
    )?;
    let outcome = net.train(
        &hedged,
        inputs.view(),
        split_cfg.epochs,
        split_cfg.batch_size,
        &mut stage_rng(cfg.seed, Stage::SplitNetTrain),
    )?;
    println!("SplitNet: {outcome:?}");

    let scores = net.scores(inputs.view())?;
    let by_splitnet: Vec<bool> = scores.iter().map(|s| s.clean >= 0.5).collect();
    let by_gmm: Vec<bool> = w.iter().map(|&x| x >= 0.5).collect();
    for (name, pred) in [("SplitNet", by_splitnet), ("GMM", by_gmm)] {
        let m = eval.split_metrics(&pred)?;
        println!(
            "{name:<9} F1 {:.4} accuracy {:.4} (tp {} fp {} fn {} tn {})",
            m.f1, m.accuracy, m.tp, m.fp, m.fn_, m.tn
        );
    }
    let mean_conf = scores.iter().map(|s| s.confidence()).sum::<f64>() / scores.len() as f64;
    println!("mean split confidence {mean_conf:.3}");
    Ok(())
}
