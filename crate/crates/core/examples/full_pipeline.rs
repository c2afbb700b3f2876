//! One end-to-end run on the desk benchmark, printing the per-epoch report.
//!
//! ```text
//! cargo run --release --example full_pipeline -- [noise_ratio] [variant] [seed]
//! ```

use anyhow::Result;
use splitnet::harness::{run_experiment, ExperimentConfig};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = ExperimentConfig::default();
    if let Some(r) = args.next() {
        cfg.noise_ratio = r.parse()?;
    }
    if let Some(v) = args.next() {
        cfg.variant = v.parse()?;
    }
    if let Some(s) = args.next() {
        cfg.seed = s.parse()?;
    }

    let start = std::time::Instant::now();
    let result = run_experiment(&cfg)?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "   -  ".to_string(), |v| format!("{v:.4}"));
    println!("epoch  tau_mu  tau_nu  |C|    eta     mask  ok/wrong     f1_split f1_gmm  test_acc");
    for r in &result.reports {
        println!(
            "{:>5}  {}  {}  {:>5}  {}  {:>5}  {:>5}/{:<5}  {}  {}  {:.4}",
            r.epoch,
            fmt(r.tau_mu),
            fmt(r.tau_nu),
            r.n_clean_set.unwrap_or(0),
            fmt(r.eta),
            r.mask_count.unwrap_or(0),
            r.pseudo_correct.unwrap_or(0),
            r.pseudo_wrong.unwrap_or(0),
            fmt(r.split_f1_splitnet),
            fmt(r.split_f1_gmm),
            r.test_acc
        );
    }
    println!("{}", serde_json::to_string_pretty(&result.summary)?);
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
