//! The learnable clean/noisy splitter.
//!
//! Input row for sample `i` is `[p_i, p_i - p_prev_i, y_i]`: the main model's
//! current class distribution, its change since the previous outer
//! iteration, and the observed one-hot label. Output is a softmax pair
//! `(s_clean, s_noisy)`.

use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::one_hot;
use crate::error::{Error, Result};
use crate::hedging::{HedgedSet, SplitLabel};
use crate::nn::loss::softmax_cross_entropy;
use crate::nn::train::minibatches;
use crate::nn::{softmax, LayerSpec, Mlp, Mode, Optimizer, OptimizerKind};
use crate::rng::StageRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitNetConfig {
    pub hidden: usize,
    pub blocks: usize,
    pub batch_norm: bool,
    /// When false the prediction-delta block is fed as zeros.
    pub use_delta: bool,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for SplitNetConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            blocks: 3,
            batch_norm: true,
            use_delta: true,
            lr: 1e-3,
            weight_decay: 5e-4,
            epochs: 5,
            batch_size: 64,
        }
    }
}

/// Main-model class distributions for the current and previous outer
/// iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionHistory {
    current: Array2<f64>,
    previous: Array2<f64>,
}

impl PredictionHistory {
    /// Fresh history; the previous predictions start at zero.
    pub fn new(current: Array2<f64>) -> Self {
        let previous = Array2::zeros(current.dim());
        Self { current, previous }
    }

    pub fn with_previous(current: Array2<f64>, previous: Array2<f64>) -> Result<Self> {
        if current.dim() != previous.dim() {
            return Err(Error::Shape("current and previous predictions differ in shape".into()));
        }
        Ok(Self { current, previous })
    }

    pub fn current(&self) -> ArrayView2<'_, f64> {
        self.current.view()
    }

    pub fn previous(&self) -> ArrayView2<'_, f64> {
        self.previous.view()
    }

    /// Shift `current` into `previous` and install new predictions.
    pub fn roll(&mut self, next: Array2<f64>) -> Result<()> {
        if next.dim() != self.current.dim() {
            return Err(Error::Shape("new predictions differ in shape".into()));
        }
        self.previous = std::mem::replace(&mut self.current, next);
        Ok(())
    }
}

/// `N x 3r` SplitNet input.
pub fn build_input(history: &PredictionHistory, noisy_labels: &[usize]) -> Result<Array2<f64>> {
    let (n, r) = history.current.dim();
    if noisy_labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} prediction rows",
            noisy_labels.len()
        )));
    }
    if noisy_labels.iter().any(|&l| l >= r) {
        return Err(Error::Shape("label index exceeds prediction width".into()));
    }
    let mut out = Array2::zeros((n, 3 * r));
    out.slice_mut(s![.., 0..r]).assign(&history.current);
    out.slice_mut(s![.., r..2 * r])
        .assign(&(&history.current - &history.previous));
    out.slice_mut(s![.., 2 * r..3 * r]).assign(&one_hot(noisy_labels, r));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitScore {
    pub clean: f64,
    pub noisy: f64,
}

impl SplitScore {
    /// Score from a clean probability.
    pub fn from_clean(p: f64) -> Self {
        Self {
            clean: p,
            noisy: 1.0 - p,
        }
    }

    pub fn confidence(&self) -> f64 {
        self.clean.max(self.noisy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainOutcome {
    Trained {
        steps: usize,
    },
    /// Hedged set too small or single-class; parameters untouched.
    Skipped,
}

pub const MIN_BATCH: usize = 2;

#[derive(Debug, Clone)]
pub struct SplitNet {
    net: Mlp,
    optimizer: Optimizer,
    class_count: usize,
    config: SplitNetConfig,
}

impl SplitNet {
    pub fn new(class_count: usize, config: SplitNetConfig, rng: &mut StageRng) -> Result<Self> {
        if config.blocks == 0 || config.hidden == 0 {
            return Err(Error::config(
                "splitnet_hidden",
                "SplitNet needs at least one non-empty block",
            ));
        }
        let specs = Mlp::classifier_specs(
            3 * class_count,
            &vec![config.hidden; config.blocks],
            config.batch_norm,
            2,
        );
        let net = Mlp::from_specs(&specs, rng)?;
        let optimizer = Optimizer::new(OptimizerKind::adamw(config.lr, config.weight_decay))?;
        Ok(Self {
            net,
            optimizer,
            class_count,
            config,
        })
    }

    pub fn config(&self) -> &SplitNetConfig {
        &self.config
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.net.specs()
    }

    fn prepare(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if inputs.ncols() != 3 * self.class_count {
            return Err(Error::Shape(format!(
                "SplitNet input has {} columns, expected {}",
                inputs.ncols(),
                3 * self.class_count
            )));
        }
        let mut x = inputs.to_owned();
        if !self.config.use_delta {
            let r = self.class_count;
            x.slice_mut(s![.., r..2 * r]).fill(0.0);
        }
        Ok(x)
    }

    /// Cross-entropy training on the hedged labels only. Rows of `inputs`
    /// outside the hedged set are never read.
    pub fn train(
        &mut self,
        hedged: &HedgedSet,
        inputs: ArrayView2<'_, f64>,
        epochs: usize,
        batch_size: usize,
        rng: &mut StageRng,
    ) -> Result<TrainOutcome> {
        let clean = hedged.count(SplitLabel::Clean);
        let noisy = hedged.count(SplitLabel::Noisy);
        if hedged.len() < 2 * MIN_BATCH || clean == 0 || noisy == 0 {
            return Ok(TrainOutcome::Skipped);
        }
        if let Some(bad) = hedged.indices().find(|&i| i >= inputs.nrows()) {
            return Err(Error::Shape(format!("hedged index {bad} beyond input rows")));
        }
        let positions: Vec<usize> = (0..hedged.len()).collect();
        let mut steps = 0;
        for _ in 0..epochs {
            for batch in minibatches(&positions, batch_size, rng) {
                let rows: Vec<usize> = batch.iter().map(|&k| hedged.entries[k].0).collect();
                let x = self.prepare(crate::dataset::gather_rows(inputs, &rows).view())?;
                let targets: Vec<usize> = batch
                    .iter()
                    .map(|&k| match hedged.entries[k].1 {
                        SplitLabel::Clean => 0,
                        SplitLabel::Noisy => 1,
                    })
                    .collect();
                let t = one_hot(&targets, 2);
                let logits = self.net.forward(x.view(), Mode::Train)?;
                let (_, grad) = softmax_cross_entropy(logits.view(), t.view())?;
                let grads = self.net.backward(grad.view())?;
                self.optimizer.apply(&mut self.net, &grads)?;
                steps += 1;
            }
        }
        self.net.set_mode(Mode::Eval);
        Ok(TrainOutcome::Trained { steps })
    }

    /// Eval-mode split scores for every row.
    pub fn scores(&self, inputs: ArrayView2<'_, f64>) -> Result<Vec<SplitScore>> {
        let x = self.prepare(inputs)?;
        let probs = softmax(self.net.predict(x.view())?.view());
        Ok(probs
            .outer_iter()
            .map(|row| SplitScore {
                clean: row[0],
                noisy: row[1],
            })
            .collect())
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        crate::nn::save_checkpoint(&self.net, stem)
    }
}

/// Write `s_clean,confidence,hedged_label,true_clean` rows; `hedged_label` is
/// empty for samples outside the hedged set.
pub fn write_split_dump(scores: &[SplitScore], hedged: &HedgedSet, true_clean: &[bool], path: &Path) -> Result<()> {
    let mut labels = vec![""; scores.len()];
    for &(i, l) in &hedged.entries {
        labels[i] = match l {
            SplitLabel::Clean => "clean",
            SplitLabel::Noisy => "noisy",
        };
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["s_clean", "confidence", "hedged_label", "true_clean"])?;
    for ((s, l), c) in scores.iter().zip(&labels).zip(true_clean) {
        w.write_record([
            s.clean.to_string(),
            s.confidence().to_string(),
            l.to_string(),
            c.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;
    use crate::rng::stream_rng;
    use ndarray::array;
    use rand::Rng;

    fn toy_history(n: usize, r: usize, seed: u64) -> PredictionHistory {
        let mut rng = stream_rng(seed, 0);
        let raw = Array2::from_shape_fn((n, r), |_| rng.random_range(-2.0..2.0));
        PredictionHistory::new(softmax(raw.view()))
    }

    #[test]
    fn input_layout() {
        let mut h = toy_history(5, 4, 1);
        let labels = [0, 1, 2, 3, 0];
        let x = build_input(&h, &labels).unwrap();
        assert_eq!(x.ncols(), 12);
        assert_eq!(x.slice(s![.., 0..4]), x.slice(s![.., 4..8]));
        assert_eq!(x.slice(s![.., 8..12]), one_hot(&labels, 4));

        let same = h.current().to_owned();
        h.roll(same).unwrap();
        let x = build_input(&h, &labels).unwrap();
        assert!(x.slice(s![.., 4..8]).iter().all(|&v| v == 0.0));
        assert!(build_input(&h, &labels[..3]).is_err());
    }

    fn separable_set(m: usize) -> (Array2<f64>, HedgedSet) {
        // clean rows agree with the label, noisy rows put mass elsewhere
        let r = 2;
        let mut current = Array2::zeros((m, r));
        let mut labels = vec![0; m];
        let mut entries = Vec::new();
        for i in 0..m {
            labels[i] = i % r;
            let clean = i % 3 != 0;
            let p = if clean { 0.9 } else { 0.1 };
            current[[i, labels[i]]] = p;
            current[[i, 1 - labels[i]]] = 1.0 - p;
            entries.push((i, if clean { SplitLabel::Clean } else { SplitLabel::Noisy }));
        }
        let h = PredictionHistory::new(current);
        (build_input(&h, &labels).unwrap(), HedgedSet { entries })
    }

    #[test]
    fn learns_separable_hedged_set() {
        let (x, hedged) = separable_set(200);
        let mut rng = stream_rng(3, 0);
        let mut model = SplitNet::new(2, SplitNetConfig::default(), &mut rng).unwrap();
        let outcome = model.train(&hedged, x.view(), 30, 32, &mut rng).unwrap();
        assert!(matches!(outcome, TrainOutcome::Trained { .. }));
        let scores = model.scores(x.view()).unwrap();
        let correct = hedged
            .entries
            .iter()
            .filter(|&&(i, l)| (scores[i].clean >= 0.5) == (l == SplitLabel::Clean))
            .count();
        assert!(correct as f64 / 200.0 >= 0.99);
    }

    #[test]
    fn zero_epochs_leave_parameters_alone() {
        let (x, hedged) = separable_set(20);
        let mut rng = stream_rng(3, 0);
        let mut model = SplitNet::new(2, SplitNetConfig::default(), &mut rng).unwrap();
        let before = model.network().clone();
        model.train(&hedged, x.view(), 0, 8, &mut rng).unwrap();
        assert_eq!(model.network(), &before);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, hedged) = separable_set(60);
        let run = || {
            let mut rng = stream_rng(11, 0);
            let mut model = SplitNet::new(2, SplitNetConfig::default(), &mut rng).unwrap();
            model.train(&hedged, x.view(), 3, 16, &mut rng).unwrap();
            model.network().clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn degenerate_sets_skip() {
        let (x, _) = separable_set(20);
        let mut rng = stream_rng(3, 0);
        let mut model = SplitNet::new(2, SplitNetConfig::default(), &mut rng).unwrap();
        let all_clean = HedgedSet {
            entries: (0..20).map(|i| (i, SplitLabel::Clean)).collect(),
        };
        assert_eq!(
            model.train(&all_clean, x.view(), 2, 8, &mut rng).unwrap(),
            TrainOutcome::Skipped
        );
        let tiny = HedgedSet {
            entries: vec![(0, SplitLabel::Clean), (1, SplitLabel::Noisy)],
        };
        assert_eq!(
            model.train(&tiny, x.view(), 2, 8, &mut rng).unwrap(),
            TrainOutcome::Skipped
        );
    }

    #[test]
    fn rows_outside_hedged_set_are_never_read() {
        let (mut x, hedged) = separable_set(60);
        let kept: Vec<_> = hedged.entries.iter().copied().filter(|(i, _)| i % 4 != 1).collect();
        for i in (1..60).step_by(4) {
            x.row_mut(i).fill(f64::NAN);
        }
        let subset = HedgedSet { entries: kept };
        let mut rng = stream_rng(5, 0);
        let mut model = SplitNet::new(2, SplitNetConfig::default(), &mut rng).unwrap();
        model.train(&subset, x.view(), 3, 16, &mut rng).unwrap();
        assert!(model.network().params().iter().all(|p| p.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn scores_are_distributions_and_row_independent() {
        let h = toy_history(30, 3, 2);
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let x = build_input(&h, &labels).unwrap();
        let mut rng = stream_rng(1, 0);
        let model = SplitNet::new(3, SplitNetConfig::default(), &mut rng).unwrap();
        let all = model.scores(x.view()).unwrap();
        for s in &all {
            assert!((s.clean + s.noisy - 1.0).abs() < 1e-9);
            assert!((0.5..=1.0).contains(&s.confidence()));
        }
        let few = model.scores(x.slice(s![3..5, ..])).unwrap();
        assert_eq!(few[0], all[3]);
    }

    #[test]
    fn zeroed_projection_gives_half_half() {
        let mut rng = stream_rng(1, 0);
        let mut model = SplitNet::new(2, SplitNetConfig::default(), &mut rng).unwrap();
        if let Some(Layer::Dense(d)) = model.network_mut().layers_mut().last_mut() {
            d.weight.fill(0.0);
            d.bias.fill(0.0);
        }
        let x = array![[0.3, 0.7, 0.1, -0.1, 1.0, 0.0]];
        let s = model.scores(x.view()).unwrap()[0];
        assert_eq!((s.clean, s.noisy), (0.5, 0.5));
        assert_eq!(s.confidence(), 0.5);
    }

    #[test]
    fn architecture_shape() {
        let mut rng = stream_rng(1, 0);
        let model = SplitNet::new(4, SplitNetConfig::default(), &mut rng).unwrap();
        let specs = model.layer_specs();
        assert_eq!(specs.len(), 10);
        assert_eq!(model.network().input_dim(), 12);
        assert_eq!(model.network().output_dim(), 2);
    }
}
