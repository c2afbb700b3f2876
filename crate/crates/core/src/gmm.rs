//! Per-sample loss modelling: losses under the current model, min-max
//! normalisation, a two-component 1-D Gaussian mixture fitted by EM, and the
//! clean posterior (responsibility of the lower-mean component).

use std::f64::consts::PI;

use ndarray::ArrayView2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::per_row_cross_entropy;
use crate::nn::Mlp;
use crate::rng::stream_rng;

pub const VARIANCE_FLOOR: f64 = 1e-6;

/// `-log p(x_i)[y_i]` for every row, eval mode, no augmentation.
pub fn per_sample_losses(net: &Mlp, features: ArrayView2<'_, f64>, labels: &[usize]) -> Result<Vec<f64>> {
    if features.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let logits = net.predict(features)?;
    Ok(per_row_cross_entropy(logits.view(), labels)?.to_vec())
}

/// Min-max scaling to `[0, 1]`; a (near-)constant input maps to all 0.5.
pub fn normalize_losses(losses: &[f64]) -> Vec<f64> {
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range >= 1e-9) {
        return vec![0.5; losses.len()];
    }
    losses.iter().map(|&l| ((l - min) / range).clamp(0.0, 1.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Only consulted when the percentile initialisation collapses.
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub means: [f64; 2],
    pub variances: [f64; 2],
    pub weights: [f64; 2],
    /// Index of the lower-mean component.
    pub clean_component: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub params: GmmParams,
    /// Total log-likelihood evaluated at the start of every EM iteration and
    /// once more at the returned parameters.
    pub log_likelihood: Vec<f64>,
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean).powi(2) / var)
}

/// Per-component log joint densities `log pi_k + log N(x | mu_k, var_k)`.
fn log_joint(x: f64, means: &[f64; 2], vars: &[f64; 2], weights: &[f64; 2]) -> [f64; 2] {
    [0, 1].map(|k| weights[k].ln() + log_normal(x, means[k], vars[k]))
}

fn log_sum_exp(a: [f64; 2]) -> f64 {
    let m = a[0].max(a[1]);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a[0] - m).exp() + (a[1] - m).exp()).ln()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn total_log_likelihood(values: &[f64], means: &[f64; 2], vars: &[f64; 2], weights: &[f64; 2]) -> f64 {
    values
        .iter()
        .map(|&x| log_sum_exp(log_joint(x, means, vars, weights)))
        .sum()
}

/// Fit a two-component mixture by EM.
///
/// Means start at the 10th and 90th percentiles, weights at 1/2 and both
/// variances at the sample variance. Iteration stops when the log-likelihood
/// gain drops below `tol` (per sample) or after `max_iter` iterations.
pub fn fit_gmm_1d(values: &[f64], config: &GmmConfig) -> Result<GmmFit> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "GMM fit needs at least 2 values, got {n}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GMM input"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut means = [percentile(&sorted, 0.1), percentile(&sorted, 0.9)];
    if means[0] == means[1] {
        // Duplicate-heavy input: fall back to two distinct observed values.
        let distinct: Vec<f64> = {
            let mut d = sorted.clone();
            d.dedup();
            d
        };
        if distinct.len() >= 2 {
            let mut rng = stream_rng(config.seed, 0);
            let picks = index::sample(&mut rng, distinct.len(), 2);
            let (a, b) = (distinct[picks.index(0)], distinct[picks.index(1)]);
            means = [a.min(b), a.max(b)];
        }
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sample_var = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).max(VARIANCE_FLOOR);
    let mut vars = [sample_var; 2];
    let mut weights = [0.5; 2];

    let mut history = Vec::new();
    let mut resp = vec![0.0; n];
    for _ in 0..config.max_iter {
        // E-step; resp holds the responsibility of component 0
        let mut ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(values) {
            let lj = log_joint(x, &means, &vars, &weights);
            let lse = log_sum_exp(lj);
            ll += lse;
            *r = (lj[0] - lse).exp();
        }
        if let Some(&prev) = history.last() {
            if (ll - prev) / (n as f64) < config.tol {
                history.push(ll);
                break;
            }
        }
        history.push(ll);

        // M-step
        let n0: f64 = resp.iter().sum();
        let n1 = n as f64 - n0;
        if n0 <= 0.0 || n1 <= 0.0 {
            break;
        }
        let m0 = resp.iter().zip(values).map(|(r, x)| r * x).sum::<f64>() / n0;
        let m1 = resp.iter().zip(values).map(|(r, x)| (1.0 - r) * x).sum::<f64>() / n1;
        let v0 = resp.iter().zip(values).map(|(r, x)| r * (x - m0).powi(2)).sum::<f64>() / n0;
        let v1 = resp
            .iter()
            .zip(values)
            .map(|(r, x)| (1.0 - r) * (x - m1).powi(2))
            .sum::<f64>()
            / n1;
        means = [m0, m1];
        vars = [v0.max(VARIANCE_FLOOR), v1.max(VARIANCE_FLOOR)];
        weights = [n0 / n as f64, n1 / n as f64];
    }
    if history.len() < 2 || history.last() != Some(&total_log_likelihood(values, &means, &vars, &weights)) {
        history.push(total_log_likelihood(values, &means, &vars, &weights));
    }

    let clean_component = if means[0] <= means[1] { 0 } else { 1 };
    Ok(GmmFit {
        params: GmmParams {
            means,
            variances: vars,
            weights,
            clean_component,
        },
        log_likelihood: history,
    })
}

/// Probability that each sample's label is clean.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanPosterior(Vec<f64>);

impl CleanPosterior {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("clean posterior outside [0, 1]".into()));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Responsibility of the clean component for each value.
pub fn clean_posterior(gmm: &GmmParams, values: &[f64]) -> CleanPosterior {
    let c = gmm.clean_component;
    CleanPosterior(
        values
            .iter()
            .map(|&x| {
                let lj = log_joint(x, &gmm.means, &gmm.variances, &gmm.weights);
                (lj[c] - log_sum_exp(lj)).exp().clamp(0.0, 1.0)
            })
            .collect(),
    )
}

/// Losses -> normalised losses -> fitted mixture -> posterior.
#[derive(Debug, Clone)]
pub struct LossModel {
    pub losses: Vec<f64>,
    pub normalized: Vec<f64>,
    pub fit: GmmFit,
    pub posterior: CleanPosterior,
}

pub fn model_losses(
    net: &Mlp,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    config: &GmmConfig,
) -> Result<LossModel> {
    let losses = per_sample_losses(net, features, labels)?;
    let normalized = normalize_losses(&losses);
    let fit = fit_gmm_1d(&normalized, config)?;
    let posterior = clean_posterior(&fit.params, &normalized);
    Ok(LossModel {
        losses,
        normalized,
        fit,
        posterior,
    })
}

/// Write `loss,normalized_loss,w` rows.
pub fn write_loss_dump(model: &LossModel, path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["loss", "normalized_loss", "w"])?;
    for ((l, n), p) in model
        .losses
        .iter()
        .zip(&model.normalized)
        .zip(model.posterior.as_slice())
    {
        w.write_record([l.to_string(), n.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
