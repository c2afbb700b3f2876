//! Generate a blob benchmark, corrupt it with symmetric and asymmetric noise
//! and show the resulting label transition counts.
//!
//! ```text
//! cargo run --release --example noisy_blobs -- [noise_ratio]
//! ```

use anyhow::Result;
use splitnet::dataset::{generate_blobs, inject_noise, NoiseSpec};

fn main() -> Result<()> {
    let ratio: f64 = std::env::args().nth(1).map_or(Ok(0.4), |s| s.parse())?;
    let classes = 4;
    let clean = generate_blobs(classes, 500, 16, 0.35, 11)?;

    for spec in [NoiseSpec::symmetric(ratio), NoiseSpec::asymmetric(ratio, classes)] {
        let noisy = inject_noise(&clean, &spec, 12)?;
        let truth = noisy.ground_truth();
        let mut counts = vec![vec![0usize; classes]; classes];
        for (&t, &o) in truth.labels().iter().zip(noisy.noisy_labels()) {
            counts[t][o] += 1;
        }
        println!("{spec:?}");
        println!("  realized noise {:.3}", 1.0 - truth.clean_fraction());
        println!("  true \\ observed");
        for (t, row) in counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
            println!("  {t:>4}  {}", cells.join(""));
        }
    }
    Ok(())
}
