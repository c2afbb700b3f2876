//! Compare hand-written backward passes against central finite differences
//! on a small batch-norm classifier.

use anyhow::Result;
use ndarray::Array2;
use rand::Rng;
use splitnet::dataset::one_hot;
use splitnet::nn::{softmax_cross_entropy, Layer, Mlp, Mode};
use splitnet::rng::stream_rng;

fn loss(net: &Mlp, x: &Array2<f64>, t: &Array2<f64>) -> Result<f64> {
    let mut net = net.clone();
    let logits = net.forward(x.view(), Mode::Train)?;
    Ok(softmax_cross_entropy(logits.view(), t.view())?.0)
}

fn main() -> Result<()> {
    let mut rng = stream_rng(3, 0);
    let mut net = Mlp::classifier(5, &[8, 6], true, 3, &mut rng)?;
    for layer in net.layers_mut() {
        if let Layer::Dense(d) = layer {
            d.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
    }
    let x = Array2::from_shape_fn((6, 5), |_| rng.random_range(-2.0..2.0));
    let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..3)).collect();
    let t = one_hot(&labels, 3);

    let base = net.clone();
    let logits = net.forward(x.view(), Mode::Train)?;
    let (_, dlogits) = softmax_cross_entropy(logits.view(), t.view())?;
    let grads = net.backward(dlogits.view())?;

    let h = 1e-5;
    for ti in 0..grads.tensors.len() {
        let len = base.params()[ti].len();
        let mut worst: f64 = 0.0;
        for k in 0..len {
            let mut plus = base.clone();
            plus.params_mut()[ti][k] += h;
            let mut minus = base.clone();
            minus.params_mut()[ti][k] -= h;
            let numeric = (loss(&plus, &x, &t)? - loss(&minus, &x, &t)?) / (2.0 * h);
            let analytic = grads.tensors[ti][k];
            worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6));
        }
        println!("tensor {ti:>2}: {len:>3} entries, max relative error {worst:.2e}");
    }
    Ok(())
}
