//! Sweep posterior statistics through the hedging thresholds and show which
//! samples of a synthetic posterior survive.

use anyhow::Result;
use splitnet::hedging::{compute_thresholds, hedge_stats, select_hedged_set, SplitLabel};

fn main() -> Result<()> {
    println!("  mean  var     P      tau_mu  tau_nu");
    for (mean, var) in [(0.5, 0.25), (1.0, 0.0), (0.6, 0.04), (0.3, 0.1), (0.8, 0.01)] {
        let t = compute_thresholds(mean, var, 0.5)?;
        println!(
            "  {mean:.2}  {var:.3}  {:.3}  {:.4}  {:.4}",
            t.p_sigma, t.tau_mu, t.tau_nu
        );
    }

    let w: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let (mean, var) = hedge_stats(&w)?;
    let t = compute_thresholds(mean, var, 0.5)?;
    let hedged = select_hedged_set(&w, &t);
    println!(
        "\nuniform grid of 21 posteriors: mean {mean:.3} var {var:.4} -> tau_mu {:.4} tau_nu {:.4}",
        t.tau_mu, t.tau_nu
    );
    println!(
        "kept {} clean, {} noisy, {} left out",
        hedged.count(SplitLabel::Clean),
        hedged.count(SplitLabel::Noisy),
        w.len() - hedged.len()
    );
    Ok(())
}
