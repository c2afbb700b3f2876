//! On-disk artifacts: `epochs.csv`, `thresholds.csv`, `summary.json`, and
//! the comparison of two run directories.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::EpochReport;

/// One `epochs.csv` row. Columns absent for a variant are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub tau_mu: Option<f64>,
    pub tau_nu: Option<f64>,
    pub n_clean_set: Option<usize>,
    pub eta: Option<f64>,
    pub mask_count: Option<usize>,
    pub pseudo_correct: Option<usize>,
    pub pseudo_wrong: Option<usize>,
    pub split_f1_splitnet: Option<f64>,
    pub split_f1_gmm: Option<f64>,
    pub split_acc_splitnet: Option<f64>,
    pub split_acc_gmm: Option<f64>,
    pub test_acc: f64,
}

impl From<&EpochReport> for EpochRow {
    fn from(r: &EpochReport) -> Self {
        Self {
            epoch: r.epoch,
            tau_mu: r.tau_mu,
            tau_nu: r.tau_nu,
            n_clean_set: r.n_clean_set,
            eta: r.eta,
            mask_count: r.mask_count,
            pseudo_correct: r.pseudo_correct,
            pseudo_wrong: r.pseudo_wrong,
            split_f1_splitnet: r.split_f1_splitnet,
            split_f1_gmm: r.split_f1_gmm,
            split_acc_splitnet: r.split_acc_splitnet,
            split_acc_gmm: r.split_acc_gmm,
            test_acc: r.test_acc,
        }
    }
}

/// One `thresholds.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub epoch: usize,
    pub mu: f64,
    pub sigma2: f64,
    pub tau_mu: f64,
    pub tau_nu: f64,
    pub m_clean: usize,
    pub m_noisy: usize,
}

impl ThresholdRow {
    pub fn from_report(r: &EpochReport) -> Option<Self> {
        Some(Self {
            epoch: r.epoch,
            mu: r.posterior_mean?,
            sigma2: r.posterior_variance?,
            tau_mu: r.tau_mu?,
            tau_nu: r.tau_nu?,
            m_clean: r.hedged_clean?,
            m_noisy: r.hedged_noisy?,
        })
    }
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Final per-run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub variant: String,
    pub seed: u64,
    pub noise_ratio: f64,
    pub epochs: usize,
    pub best_test_acc: f64,
    pub last_test_acc: f64,
    /// Best per-epoch split F1 of the scorer the variant trains with
    /// (SplitNet where present, otherwise the GMM).
    pub best_split_f1: Option<f64>,
    pub last_split_f1_splitnet: Option<f64>,
    pub last_split_f1_gmm: Option<f64>,
    pub filter_size: Option<usize>,
    pub filter_precision: Option<f64>,
    pub clean_fraction: f64,
}

impl Summary {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }
}

/// Metric-by-metric difference `b - a`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delta {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub deltas: Vec<Delta>,
    /// Metrics where `b` is worse than `a` by more than the tolerance.
    pub regressions: Vec<String>,
}

/// Compare the numeric fields of two `summary.json` files. Every metric
/// compared is higher-is-better, so a regression is `a - b > tol`.
pub fn compare_summaries(a: &Summary, b: &Summary, tol: f64) -> Comparison {
    let pairs = [
        ("best_test_acc", Some(a.best_test_acc), Some(b.best_test_acc)),
        ("last_test_acc", Some(a.last_test_acc), Some(b.last_test_acc)),
        ("best_split_f1", a.best_split_f1, b.best_split_f1),
        (
            "last_split_f1_splitnet",
            a.last_split_f1_splitnet,
            b.last_split_f1_splitnet,
        ),
        ("last_split_f1_gmm", a.last_split_f1_gmm, b.last_split_f1_gmm),
        ("filter_precision", a.filter_precision, b.filter_precision),
    ];
    let mut deltas = Vec::new();
    let mut regressions = Vec::new();
    for (name, x, y) in pairs {
        if let (Some(x), Some(y)) = (x, y) {
            if x - y > tol {
                regressions.push(name.to_string());
            }
            deltas.push(Delta {
                metric: name.to_string(),
                a: x,
                b: y,
                delta: y - x,
            });
        }
    }
    Comparison { deltas, regressions }
}

pub fn compare_dirs(a: &Path, b: &Path, tol: f64) -> Result<Comparison> {
    let load = |dir: &Path| {
        let path = dir.join("summary.json");
        if !path.is_file() {
            return Err(Error::InvalidArgument(format!("{} does not exist", path.display())));
        }
        Summary::load(&path)
    };
    Ok(compare_summaries(&load(a)?, &load(b)?, tol))
}
