//! Mini-batch helpers shared by every training stage.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{gather_rows, one_hot};
use crate::error::Result;
use crate::nn::loss::softmax_cross_entropy;
use crate::nn::mlp::{Mlp, Mode};
use crate::nn::optim::Optimizer;

/// Shuffle `indices` and cut them into batches of `batch_size`. A trailing
/// singleton is merged into the previous batch so batch norm always sees at
/// least two rows.
pub fn minibatches<R: Rng + ?Sized>(indices: &[usize], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size.max(2)).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(tail);
    }
    out
}

/// One epoch of plain cross-entropy on `indices`. Returns the mean batch loss.
pub fn cross_entropy_epoch<R: Rng + ?Sized>(
    net: &mut Mlp,
    optimizer: &mut Optimizer,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    indices: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Result<f64> {
    let classes = net.output_dim();
    let batches = minibatches(indices, batch_size, rng);
    let mut total = 0.0;
    for batch in &batches {
        if batch.len() < 2 {
            continue;
        }
        let x = gather_rows(features, batch);
        let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        let t = one_hot(&y, classes);
        let logits = net.forward(x.view(), Mode::Train)?;
        let (loss, grad) = softmax_cross_entropy(logits.view(), t.view())?;
        let grads = net.backward(grad.view())?;
        optimizer.apply(net, &grads)?;
        total += loss;
    }
    net.set_mode(Mode::Eval);
    Ok(total / batches.len().max(1) as f64)
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(net: &Mlp, features: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    let logits = net.predict(features)?;
    let correct = logits
        .outer_iter()
        .zip(labels)
        .filter(|(row, &l)| crate::nn::loss::argmax(row.iter().copied()) == l)
        .count();
    Ok(correct as f64 / labels.len().max(1) as f64)
}
