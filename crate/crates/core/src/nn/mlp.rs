//! Dense / BatchNorm / ReLU stacks with exact reverse-mode gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Hidden widths and batch-norm switch for a classifier MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            batch_norm: true,
        }
    }
}

impl ClassifierConfig {
    pub fn build<R: Rng + ?Sized>(&self, input: usize, output: usize, rng: &mut R) -> Result<Mlp> {
        Mlp::classifier(input, &self.hidden, self.batch_norm, output, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Shape description of one layer; also the checkpoint manifest entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    BatchNorm { dim: usize, momentum: f64, eps: f64 },
    Relu { dim: usize },
}

impl LayerSpec {
    fn dims(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { inputs, outputs } => (inputs, outputs),
            LayerSpec::BatchNorm { dim, .. } | LayerSpec::Relu { dim } => (dim, dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `inputs x outputs`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Relu(usize),
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense {
                inputs: d.weight.nrows(),
                outputs: d.weight.ncols(),
            },
            Layer::BatchNorm(bn) => LayerSpec::BatchNorm {
                dim: bn.gamma.len(),
                momentum: bn.momentum,
                eps: bn.eps,
            },
            Layer::Relu(dim) => LayerSpec::Relu { dim: *dim },
        }
    }
}

#[derive(Debug, Clone)]
enum Cache {
    Dense { input: Array2<f64> },
    BatchNorm { x_hat: Array2<f64>, inv_std: Array1<f64> },
    Relu { active: Array2<bool> },
}

/// Gradients aligned with [`Mlp::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flatten().copied()
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
    mode: Mode,
    cache: Option<(Vec<Cache>, (usize, usize))>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Mlp {
    /// Build from specs with He-uniform dense weights, zero biases,
    /// `gamma = 1`, `beta = 0`.
    pub fn from_specs<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let layers = specs
            .iter()
            .map(|spec| match *spec {
                LayerSpec::Dense { inputs, outputs } => {
                    let bound = (6.0 / inputs as f64).sqrt();
                    let weight = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..bound));
                    Layer::Dense(Dense {
                        weight,
                        bias: Array1::zeros(outputs),
                    })
                }
                LayerSpec::BatchNorm { dim, momentum, eps } => Layer::BatchNorm(BatchNorm {
                    gamma: Array1::ones(dim),
                    beta: Array1::zeros(dim),
                    running_mean: Array1::zeros(dim),
                    running_var: Array1::ones(dim),
                    momentum,
                    eps,
                }),
                LayerSpec::Relu { dim } => Layer::Relu(dim),
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            let (_, out) = pair[0].spec().dims();
            let (inp, _) = pair[1].spec().dims();
            if out != inp {
                return Err(Error::Shape(format!(
                    "layer output width {out} feeds layer expecting {inp}"
                )));
            }
        }
        for layer in &layers {
            if let Layer::BatchNorm(bn) = layer {
                if !(bn.eps > 0.0) || bn.running_var.iter().any(|&v| v < 0.0) {
                    return Err(Error::InvalidArgument(
                        "batch norm needs eps > 0 and non-negative running variance".into(),
                    ));
                }
            }
        }
        Ok(Self {
            layers,
            mode: Mode::Eval,
            cache: None,
        })
    }

    /// `input -> [Dense(h) -> BatchNorm? -> ReLU]* -> Dense(output)`.
    pub fn classifier_specs(input: usize, hidden: &[usize], batch_norm: bool, output: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut width = input;
        for &h in hidden {
            specs.push(LayerSpec::Dense {
                inputs: width,
                outputs: h,
            });
            if batch_norm {
                specs.push(LayerSpec::BatchNorm {
                    dim: h,
                    momentum: BN_MOMENTUM,
                    eps: BN_EPS,
                });
            }
            specs.push(LayerSpec::Relu { dim: h });
            width = h;
        }
        specs.push(LayerSpec::Dense {
            inputs: width,
            outputs: output,
        });
        specs
    }

    pub fn classifier<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        batch_norm: bool,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::from_specs(&Self::classifier_specs(input, hidden, batch_norm, output), rng)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec().dims().0
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec().dims().1
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_)))
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass. Train mode caches activations for [`Mlp::backward`] and
    /// updates batch-norm running statistics; eval mode is [`Mlp::predict`].
    pub fn forward(&mut self, x: ArrayView2<'_, f64>, mode: Mode) -> Result<Array2<f64>> {
        self.mode = mode;
        match mode {
            Mode::Eval => {
                self.cache = None;
                self.predict(x)
            }
            Mode::Train => self.forward_train(x),
        }
    }

    /// Eval-mode forward pass; a pure function of the input and stored
    /// parameters.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => h.dot(&d.weight) + &d.bias,
                Layer::BatchNorm(bn) => {
                    let inv_std = bn.running_var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
                    let scale = &bn.gamma * &inv_std;
                    let shift = &bn.beta - &(&bn.running_mean * &scale);
                    h * &scale + &shift
                }
                Layer::Relu(_) => h.mapv_into(|v| v.max(0.0)),
            };
        }
        Ok(h)
    }

    fn forward_train(&mut self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let n = x.nrows();
        if n < 2 && self.has_batch_norm() {
            return Err(Error::InvalidArgument(
                "train-mode batch norm needs a batch of at least 2".into(),
            ));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &mut self.layers {
            h = match layer {
                Layer::Dense(d) => {
                    let out = h.dot(&d.weight) + &d.bias;
                    caches.push(Cache::Dense { input: h });
                    out
                }
                Layer::BatchNorm(bn) => {
                    let mean = h.mean_axis(Axis(0)).expect("non-empty batch");
                    let centered = &h - &mean;
                    let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
                    let inv_std = var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
                    let x_hat = &centered * &inv_std;
                    let out = &x_hat * &bn.gamma + &bn.beta;
                    let unbiased = &var * (n as f64 / (n as f64 - 1.0));
                    let m = bn.momentum;
                    bn.running_mean = &bn.running_mean * (1.0 - m) + &mean * m;
                    bn.running_var = &bn.running_var * (1.0 - m) + &unbiased * m;
                    caches.push(Cache::BatchNorm { x_hat, inv_std });
                    out
                }
                Layer::Relu(_) => {
                    let active = h.mapv(|v| v > 0.0);
                    caches.push(Cache::Relu { active });
                    h.mapv_into(|v| v.max(0.0))
                }
            };
        }
        self.cache = Some((caches, h.dim()));
        Ok(h)
    }

    /// Gradients of the loss whose output gradient is `grad_out`, using the
    /// activations cached by the last train-mode forward pass. The cache is
    /// consumed.
    pub fn backward(&mut self, grad_out: ArrayView2<'_, f64>) -> Result<Gradients> {
        let (caches, out_dim) = self.cache.take().ok_or(Error::MissingForwardCache)?;
        if grad_out.dim() != out_dim {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match forward output {:?}",
                grad_out.dim(),
                out_dim
            )));
        }
        let mut per_layer: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.to_owned();
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            match (layer, cache) {
                (Layer::Dense(d), Cache::Dense { input }) => {
                    let dw = input.t().dot(&g);
                    let db = g.sum_axis(Axis(0));
                    g = g.dot(&d.weight.t());
                    per_layer.push(vec![dw.iter().copied().collect(), db.to_vec()]);
                }
                (Layer::BatchNorm(bn), Cache::BatchNorm { x_hat, inv_std }) => {
                    let n = g.nrows() as f64;
                    let dgamma = (&g * &x_hat).sum_axis(Axis(0));
                    let dbeta = g.sum_axis(Axis(0));
                    let dx_hat = &g * &bn.gamma;
                    let sum_dx_hat = dx_hat.sum_axis(Axis(0));
                    let sum_dx_hat_xhat = (&dx_hat * &x_hat).sum_axis(Axis(0));
                    let scaled = &dx_hat * n - &sum_dx_hat - &(&x_hat * &sum_dx_hat_xhat);
                    g = scaled * &(&inv_std / n);
                    per_layer.push(vec![dgamma.to_vec(), dbeta.to_vec()]);
                }
                (Layer::Relu(_), Cache::Relu { active }) => {
                    g.zip_mut_with(&active, |v, &a| {
                        if !a {
                            *v = 0.0
                        }
                    });
                    per_layer.push(Vec::new());
                }
                _ => return Err(Error::MissingForwardCache),
            }
        }
        per_layer.reverse();
        Ok(Gradients {
            tensors: per_layer.into_iter().flatten().collect(),
        })
    }

    /// Trainable tensors in a fixed order: dense weight, dense bias, bn gamma,
    /// bn beta.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weight.as_slice().expect("standard layout"));
                    out.push(d.bias.as_slice().expect("standard layout"));
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.gamma.as_slice().expect("standard layout"));
                    out.push(bn.beta.as_slice().expect("standard layout"));
                }
                Layer::Relu(_) => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weight.as_slice_mut().expect("standard layout"));
                    out.push(d.bias.as_slice_mut().expect("standard layout"));
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                    out.push(bn.beta.as_slice_mut().expect("standard layout"));
                }
                Layer::Relu(_) => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
