//! Softmax cross-entropy with soft targets and per-row weights.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Row-wise log-softmax using max subtraction.
pub fn log_softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    log_softmax(logits).mapv_into(f64::exp)
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in row.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

fn check_finite(m: &ArrayView2<'_, f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
    let n = logits.nrows();
    weighted_cross_entropy(logits, targets, &vec![1.0; n], n as f64)
}

/// `sum_i weight_i * H(target_i, softmax(logits_i)) / denominator` and its
/// gradient. Rows with zero weight contribute nothing and their targets are
/// never read.
pub fn weighted_cross_entropy(
    logits: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    weights: &[f64],
    denominator: f64,
) -> Result<(f64, Array2<f64>)> {
    if logits.dim() != targets.dim() || weights.len() != logits.nrows() {
        return Err(Error::Shape(format!(
            "logits {:?}, targets {:?}, {} weights",
            logits.dim(),
            targets.dim(),
            weights.len()
        )));
    }
    check_finite(&logits, "logits")?;
    if !(denominator > 0.0) {
        return Err(Error::InvalidArgument("loss denominator must be positive".into()));
    }
    let log_p = log_softmax(logits);
    let mut grad = Array2::zeros(logits.dim());
    let mut total = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let t = targets.row(i);
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("targets"));
        }
        let lp = log_p.row(i);
        total -= w * t
            .iter()
            .zip(lp.iter())
            .map(|(&a, &b)| if a == 0.0 { 0.0 } else { a * b })
            .sum::<f64>();
        let t_sum: f64 = t.sum();
        let scale = w / denominator;
        for ((g, &l), &tv) in grad.row_mut(i).iter_mut().zip(lp.iter()).zip(t.iter()) {
            *g = scale * (l.exp() * t_sum - tv);
        }
    }
    Ok((total / denominator, grad))
}

/// Per-row cross-entropy without reduction.
pub fn per_row_cross_entropy(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<Array1<f64>> {
    if labels.len() != logits.nrows() {
        return Err(Error::Shape("label count differs from batch size".into()));
    }
    check_finite(&logits, "logits")?;
    let log_p = log_softmax(logits);
    Ok(labels.iter().enumerate().map(|(i, &l)| -log_p[[i, l]]).collect())
}
