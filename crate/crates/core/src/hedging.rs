//! Risk hedging: derive clean/noisy thresholds from the spread of the clean
//! posterior and keep only the samples that clear them.
//!
//! With `P = 1 - 4 var`, mean `m` of the posterior and pivot `z`:
//!
//! ```text
//! tau_clean = z + (1 - z)(1 - m) P
//! tau_noisy = z (1 - m P)
//! ```
//!
//! The clean threshold comes from `z - zF * mF * P` where the operator
//! `xF = (1 - x) j` with `j^2 = -1`, so `zF * mF = -(1 - z)(1 - m)`. Because
//! every posterior value lies in `[0, 1]` its variance is at most 1/4, hence
//! `P` lies in `[0, 1]`, the clean threshold in `[z, 1]` and the noisy one
//! in `[0, z]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PIVOT: f64 = 0.5;

/// Largest variance of any sample of values confined to `[0, c]`.
pub fn max_variance(c: f64) -> f64 {
    c * c / 4.0
}

/// Population mean and variance.
pub fn hedge_stats(w: &[f64]) -> Result<(f64, f64)> {
    if w.is_empty() {
        return Err(Error::InvalidArgument("hedge_stats on an empty posterior".into()));
    }
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var))
}

/// `1 - 4 var`.
pub fn p_sigma(variance: f64) -> f64 {
    1.0 - 4.0 * variance
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub tau_mu: f64,
    pub tau_nu: f64,
    pub pivot: f64,
    pub mean: f64,
    pub variance: f64,
    pub p_sigma: f64,
}

pub fn compute_thresholds(mean: f64, variance: f64, pivot: f64) -> Result<ThresholdPair> {
    if !(0.0..=1.0).contains(&mean) {
        return Err(Error::InvalidArgument(format!("posterior mean {mean} outside [0, 1]")));
    }
    if !(pivot > 0.0 && pivot < 1.0) {
        return Err(Error::InvalidArgument(format!("pivot {pivot} outside (0, 1)")));
    }
    if !(variance >= 0.0) || variance > 0.25 + 1e-12 {
        return Err(Error::VarianceOutOfRange(variance));
    }
    let variance = variance.min(0.25);
    let p = p_sigma(variance);
    let tau_mu = pivot + (1.0 - pivot) * (1.0 - mean) * p;
    let tau_nu = pivot * (1.0 - mean * p);
    Ok(ThresholdPair {
        tau_mu,
        tau_nu,
        pivot,
        mean,
        variance,
        p_sigma: p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitLabel {
    Clean,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HedgedSet {
    pub entries: Vec<(usize, SplitLabel)>,
}

impl HedgedSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, label: SplitLabel) -> usize {
        self.entries.iter().filter(|(_, l)| *l == label).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|(i, _)| *i)
    }
}

/// CLEAN where `w >= tau_mu`, otherwise NOISY where `w <= tau_nu`. The clean
/// test runs first, so a sample sitting exactly on both thresholds is CLEAN.
pub fn select_hedged_set(w: &[f64], thresholds: &ThresholdPair) -> HedgedSet {
    let entries = w
        .iter()
        .enumerate()
        .filter_map(|(i, &wi)| {
            if wi >= thresholds.tau_mu {
                Some((i, SplitLabel::Clean))
            } else if wi <= thresholds.tau_nu {
                Some((i, SplitLabel::Noisy))
            } else {
                None
            }
        })
        .collect();
    HedgedSet { entries }
}

/// Ablation: every sample labelled by `w >= 0.5`.
pub fn select_unhedged(w: &[f64]) -> HedgedSet {
    HedgedSet {
        entries: w
            .iter()
            .enumerate()
            .map(|(i, &wi)| {
                (
                    i,
                    if wi >= 0.5 {
                        SplitLabel::Clean
                    } else {
                        SplitLabel::Noisy
                    },
                )
            })
            .collect(),
    }
}
