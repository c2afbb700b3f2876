use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};

/// Convex combination `lambda * a + (1 - lambda) * b` of inputs and targets
/// with `lambda ~ Beta(alpha, alpha)`. Returns the mixed pair and `lambda`.
pub fn mixup<R: Rng + ?Sized>(
    batch_a: ArrayView2<'_, f64>,
    targets_a: ArrayView2<'_, f64>,
    batch_b: ArrayView2<'_, f64>,
    targets_b: ArrayView2<'_, f64>,
    alpha: f64,
    rng: &mut R,
) -> Result<(Array2<f64>, Array2<f64>, f64)> {
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::InvalidArgument(format!("mixup alpha {alpha}: {e}")))?;
    let lambda = beta.sample(rng);
    let (x, t) = mix_with(batch_a, targets_a, batch_b, targets_b, lambda)?;
    Ok((x, t, lambda))
}

/// Mixup with a fixed coefficient.
pub fn mix_with(
    batch_a: ArrayView2<'_, f64>,
    targets_a: ArrayView2<'_, f64>,
    batch_b: ArrayView2<'_, f64>,
    targets_b: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if batch_a.dim() != batch_b.dim() || targets_a.dim() != targets_b.dim() {
        return Err(Error::Shape("mixup operands must have equal shapes".into()));
    }
    if batch_a.nrows() != targets_a.nrows() {
        return Err(Error::Shape("mixup batch and targets differ in rows".into()));
    }
    let x = &batch_a * lambda + &batch_b * (1.0 - lambda);
    let t = &targets_a * lambda + &targets_b * (1.0 - lambda);
    Ok((x, t))
}
