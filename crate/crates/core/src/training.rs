//! The alternating main loop. Once per epoch: model the per-sample losses
//! with a GMM, hedge, train SplitNet on the hedged set, score every sample;
//! then per mini-batch combine clean-set cross-entropy with
//! dynamic-threshold consistency regularisation, weighted by the clean-set
//! fraction.

use std::path::{Path, PathBuf};

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{one_hot, AugmentSpec, Augmenter, TrainView};
use crate::error::{Error, Result};
use crate::gmm::{model_losses, write_loss_dump, GmmConfig};
use crate::hedging::{compute_thresholds, hedge_stats, select_hedged_set, select_unhedged, HedgedSet, SplitLabel};
use crate::metrics::Evaluator;
use crate::nn::loss::weighted_cross_entropy;
use crate::nn::train::{cross_entropy_epoch, minibatches};
use crate::nn::{argmax, softmax, Mlp, Mode, SgdSchedule};
use crate::rng::{stage_seed, stream_rng, Stage, StageRng};
use crate::splitnet::{build_input, PredictionHistory, SplitNet, SplitNetConfig, SplitScore, TrainOutcome};
use crate::warmup::LabelledCycle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    /// Upper bound of the dynamic threshold (reached at split confidence 0.5).
    pub beta1: f64,
    /// Lower bound of the dynamic threshold (reached at split confidence 1).
    pub beta2: f64,
    pub tau_label: f64,
    pub pivot: f64,
    pub epochs: usize,
    pub schedule: SgdSchedule,
    pub splitnet: SplitNetConfig,
    pub augment: AugmentSpec,
    pub gmm: GmmConfig,
    pub seed: u64,
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.beta2 && self.beta2 <= self.beta1 && self.beta1 <= 1.0) {
            return Err(Error::config("beta1", "need 0 < beta2 <= beta1 <= 1"));
        }
        if !(self.tau_label > 0.0 && self.tau_label <= 1.0) {
            return Err(Error::config("tau_label", "must lie in (0, 1]"));
        }
        if !(self.pivot > 0.0 && self.pivot < 1.0) {
            return Err(Error::config("pivot", "must lie in (0, 1)"));
        }
        if self.schedule.batch_size < 2 {
            return Err(Error::config("batch_size", "must be at least 2"));
        }
        if !(self.schedule.lr > 0.0) {
            return Err(Error::config("lr", "must be positive"));
        }
        self.augment.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdMode {
    Dynamic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreSource {
    SplitNet,
    /// Use the GMM posterior directly as `s_clean`.
    Gmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HedgeMode {
    RiskHedging,
    /// Every sample, labelled by `w >= 0.5`.
    Unhedged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopVariant {
    pub scores: ScoreSource,
    pub threshold: ThresholdMode,
    pub hedging: HedgeMode,
}

impl Default for LoopVariant {
    fn default() -> Self {
        Self {
            scores: ScoreSource::SplitNet,
            threshold: ThresholdMode::Dynamic,
            hedging: HedgeMode::RiskHedging,
        }
    }
}

/// Per-epoch diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub posterior_mean: Option<f64>,
    pub posterior_variance: Option<f64>,
    pub tau_mu: Option<f64>,
    pub tau_nu: Option<f64>,
    pub hedged_clean: Option<usize>,
    pub hedged_noisy: Option<usize>,
    pub splitnet_trained: bool,
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

/// One-hot pseudo-labels (as class indices) and their confidence from the
/// weak view. Ties go to the lowest class index.
pub fn make_pseudo_labels(
    net: &Mlp,
    batch: ArrayView2<'_, f64>,
    augmenter: &Augmenter,
    rng: &mut StageRng,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let rows: Vec<usize> = (0..batch.nrows()).collect();
    let weak = augmenter.weak_batch(batch, &rows, rng);
    pseudo_labels_from(net, weak.view())
}

fn pseudo_labels_from(net: &Mlp, weak: ArrayView2<'_, f64>) -> Result<(Vec<usize>, Vec<f64>)> {
    let probs = softmax(net.predict(weak)?.view());
    Ok(probs
        .outer_iter()
        .map(|row| {
            let c = argmax(row.iter().copied());
            (c, row[c])
        })
        .unzip())
}

/// `(1 - max(s)) * beta1 + max(s) * beta2`.
pub fn dynamic_threshold(score: &SplitScore, beta1: f64, beta2: f64) -> f64 {
    let c = score.confidence();
    (1.0 - c) * beta1 + c * beta2
}

fn pseudo_threshold(mode: ThresholdMode, score: &SplitScore, beta1: f64, beta2: f64) -> f64 {
    match mode {
        ThresholdMode::Dynamic => dynamic_threshold(score, beta1, beta2),
        ThresholdMode::Fixed(t) => t,
    }
}

/// Masked consistency term given strong-view logits: the mean over the whole
/// batch of `1[conf >= tau] * H(q, p_strong)`, its gradient w.r.t. the
/// strong logits, and the number of rows that passed.
pub fn consistency_terms(
    strong_logits: ArrayView2<'_, f64>,
    q: &[usize],
    confidence: &[f64],
    thresholds: &[f64],
) -> Result<(f64, Array2<f64>, Vec<bool>)> {
    let n = strong_logits.nrows();
    if q.len() != n || confidence.len() != n || thresholds.len() != n {
        return Err(Error::Shape("consistency inputs are misaligned".into()));
    }
    let mask: Vec<bool> = confidence.iter().zip(thresholds).map(|(c, t)| c >= t).collect();
    let weights: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let targets = one_hot(q, strong_logits.ncols());
    let (loss, grad) = weighted_cross_entropy(strong_logits, targets.view(), &weights, n as f64)?;
    Ok((loss, grad, mask))
}

/// Eval-mode unsupervised loss on `batch` with dynamic thresholds derived
/// from `scores`. Returns `(loss, mask count)`.
pub fn unsupervised_loss(
    net: &Mlp,
    batch: ArrayView2<'_, f64>,
    scores: &[SplitScore],
    augmenter: &Augmenter,
    beta1: f64,
    beta2: f64,
    rng: &mut StageRng,
) -> Result<(f64, usize)> {
    if scores.len() != batch.nrows() {
        return Err(Error::Shape("scores are not aligned with the batch".into()));
    }
    let rows: Vec<usize> = (0..batch.nrows()).collect();
    let (q, conf) = make_pseudo_labels(net, batch, augmenter, rng)?;
    let strong = augmenter.strong_batch(batch, &rows, rng);
    let logits = net.predict(strong.view())?;
    let thresholds: Vec<f64> = scores.iter().map(|s| dynamic_threshold(s, beta1, beta2)).collect();
    let (loss, _, mask) = consistency_terms(logits.view(), &q, &conf, &thresholds)?;
    Ok((loss, mask.iter().filter(|&&m| m).count()))
}

/// `{i : s_clean_i >= tau_label}`.
pub fn clean_set(scores: &[SplitScore], tau_label: f64) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.clean >= tau_label)
        .map(|(i, _)| i)
        .collect()
}

/// `eta * L_C + (1 - eta) * L_U` with `eta = |C| / N`.
pub fn total_loss(loss_clean: f64, loss_unlabelled: f64, clean_count: usize, n: usize) -> f64 {
    let eta = clean_count as f64 / n as f64;
    if clean_count == 0 {
        return loss_unlabelled;
    }
    eta * loss_clean + (1.0 - eta) * loss_unlabelled
}

#[derive(Debug)]
pub struct LoopOutcome {
    pub reports: Vec<EpochReport>,
    pub splitnet: Option<SplitNet>,
}

/// Optional per-epoch sample dumps.
#[derive(Debug, Clone, Default)]
pub struct DumpOptions {
    pub dir: Option<PathBuf>,
}

impl DumpOptions {
    fn path(&self, name: &str, epoch: usize) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{name}_epoch{epoch:03}.csv")))
    }
}

/// Run the main loop on a warmed-up network.
pub fn run_training(
    net: &mut Mlp,
    view: TrainView<'_>,
    evaluator: &Evaluator<'_>,
    config: &LoopConfig,
    variant: LoopVariant,
    dumps: &DumpOptions,
) -> Result<LoopOutcome> {
    config.validate()?;
    let n = view.len();
    let r = view.class_count;
    let augmenter = Augmenter::new(config.augment, view.features);
    let mut rng = stream_rng(config.seed, Stage::MainLoop as u64);
    let mut split_rng = stream_rng(config.seed, Stage::SplitNetTrain as u64);
    let mut opt = config.schedule.optimizer()?;
    let mut splitnet = match variant.scores {
        ScoreSource::SplitNet => Some(SplitNet::new(
            r,
            config.splitnet.clone(),
            &mut stream_rng(config.seed, Stage::SplitNetInit as u64),
        )?),
        ScoreSource::Gmm => None,
    };
    let mut splitnet_ready = false;
    let mut history: Option<PredictionHistory> = None;
    let gmm_config = GmmConfig {
        seed: stage_seed(config.seed, Stage::Gmm),
        ..config.gmm
    };
    let all: Vec<usize> = (0..n).collect();
    let mut reports = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        opt.set_lr(config.schedule.lr_at(epoch));

        // GMM on normalised losses
        let loss_model = model_losses(net, view.features, view.labels, &gmm_config)?;
        let w = loss_model.posterior.as_slice();
        let (mean, variance) = hedge_stats(w)?;
        let thresholds = compute_thresholds(mean, variance, config.pivot)?;
        if !(0.0..=1.0).contains(&thresholds.p_sigma) {
            return Err(Error::Invariant(format!(
                "P(sigma) = {} outside [0, 1] at epoch {epoch}",
                thresholds.p_sigma
            )));
        }
        if let Some(path) = dumps.path("losses", epoch) {
            write_loss_dump(&loss_model, &path)?;
        }

        // prediction history and hedged SplitNet training
        let probs = softmax(net.predict(view.features)?.view());
        match history.as_mut() {
            Some(h) => h.roll(probs)?,
            None => history = Some(PredictionHistory::new(probs)),
        }
        let history_ref = history.as_ref().expect("history initialised");
        let hedged = match variant.hedging {
            HedgeMode::RiskHedging => select_hedged_set(w, &thresholds),
            HedgeMode::Unhedged => select_unhedged(w),
        };
        let gmm_pred: Vec<bool> = w.iter().map(|&x| x >= 0.5).collect();
        let gmm_metrics = evaluator.split_metrics(&gmm_pred)?;

        let mut splitnet_trained = false;
        let (scores, splitnet_metrics) = match splitnet.as_mut() {
            Some(model) => {
                let inputs = build_input(history_ref, view.labels)?;
                let outcome = model.train(
                    &hedged,
                    inputs.view(),
                    config.splitnet.epochs,
                    config.splitnet.batch_size,
                    &mut split_rng,
                )?;
                if let TrainOutcome::Trained { .. } = outcome {
                    splitnet_ready = true;
                    splitnet_trained = true;
                } else {
                    log_skip(epoch, &hedged);
                }
                if splitnet_ready {
                    let scores = model.scores(inputs.view())?;
                    let pred: Vec<bool> = scores.iter().map(|s| s.clean >= 0.5).collect();
                    (scores, Some(evaluator.split_metrics(&pred)?))
                } else {
                    let scores = w
                        .iter()
                        .map(|&x| SplitScore::from_clean(if x >= 0.5 { 1.0 } else { 0.0 }))
                        .collect();
                    (scores, None)
                }
            }
            None => (w.iter().map(|&x| SplitScore::from_clean(x)).collect::<Vec<_>>(), None),
        };
        if let Some(path) = dumps.path("split", epoch) {
            evaluator.write_split_dump(&scores, &hedged, &path)?;
        }

        // clean-set supervision + consistency regularisation
        let clean = clean_set(&scores, config.tau_label);
        let eta = clean.len() as f64 / n as f64;
        let mut labelled = LabelledCycle::new(&clean);
        let mut mask_count = 0;
        let (mut correct, mut wrong) = (0, 0);
        for batch in minibatches(&all, config.schedule.batch_size, &mut rng) {
            let b = batch.len();
            let weak = augmenter.weak_batch(view.features, &batch, &mut rng);
            let (q, conf) = pseudo_labels_from(net, weak.view())?;
            let taus: Vec<f64> = batch
                .iter()
                .map(|&i| pseudo_threshold(variant.threshold, &scores[i], config.beta1, config.beta2))
                .collect();
            let strong = augmenter.strong_batch(view.features, &batch, &mut rng);

            let sup_rows = if clean.is_empty() {
                Vec::new()
            } else {
                labelled.take(b, &mut rng)
            };
            let x = if sup_rows.is_empty() {
                strong
            } else {
                let x_sup = augmenter.weak_batch(view.features, &sup_rows, &mut rng);
                concatenate(Axis(0), &[x_sup.view(), strong.view()]).map_err(|e| Error::Shape(e.to_string()))?
            };
            let offset = sup_rows.len();
            let logits = net.forward(x.view(), Mode::Train)?;
            let (_, g_unsup, mask) = consistency_terms(logits.slice(s![offset.., ..]), &q, &conf, &taus)?;
            let mut grad = Array2::zeros(logits.dim());
            grad.slice_mut(s![offset.., ..]).assign(&(g_unsup * (1.0 - eta)));
            if offset > 0 {
                let y: Vec<usize> = sup_rows.iter().map(|&i| view.labels[i]).collect();
                let t = one_hot(&y, r);
                let (_, g_sup) = weighted_cross_entropy(
                    logits.slice(s![..offset, ..]),
                    t.view(),
                    &vec![1.0; offset],
                    offset as f64,
                )?;
                grad.slice_mut(s![..offset, ..]).assign(&(g_sup * eta));
            }
            let grads = net.backward(grad.view())?;
            opt.apply(net, &grads)?;

            mask_count += mask.iter().filter(|&&m| m).count();
            let (c, wr) = evaluator.pseudo_label_counts(&batch, &q, &mask);
            correct += c;
            wrong += wr;
        }
        net.set_mode(Mode::Eval);

        reports.push(EpochReport {
            epoch,
            posterior_mean: Some(mean),
            posterior_variance: Some(variance),
            tau_mu: Some(thresholds.tau_mu),
            tau_nu: Some(thresholds.tau_nu),
            hedged_clean: Some(hedged.count(SplitLabel::Clean)),
            hedged_noisy: Some(hedged.count(SplitLabel::Noisy)),
            splitnet_trained,
            n_clean_set: Some(clean.len()),
            eta: Some(eta),
            mask_count: Some(mask_count),
            pseudo_correct: Some(correct),
            pseudo_wrong: Some(wrong),
            split_f1_splitnet: splitnet_metrics.map(|m| m.f1),
            split_f1_gmm: Some(gmm_metrics.f1),
            split_acc_splitnet: splitnet_metrics.map(|m| m.accuracy),
            split_acc_gmm: Some(gmm_metrics.accuracy),
            test_acc: evaluator.test_accuracy(net)?,
        });
    }
    Ok(LoopOutcome { reports, splitnet })
}

fn log_skip(epoch: usize, hedged: &HedgedSet) {
    if std::env::var_os("SPLITNET_VERBOSE").is_some() {
        eprintln!(
            "epoch {epoch}: SplitNet training skipped (hedged set {} clean / {} noisy)",
            hedged.count(SplitLabel::Clean),
            hedged.count(SplitLabel::Noisy)
        );
    }
}

/// Cross-entropy on every observed label for `epochs` epochs, reporting test
/// accuracy and GMM split quality after each.
pub fn run_plain_ce(
    net: &mut Mlp,
    view: TrainView<'_>,
    evaluator: &Evaluator<'_>,
    schedule: &SgdSchedule,
    epochs: usize,
    gmm: &GmmConfig,
    seed: u64,
) -> Result<Vec<EpochReport>> {
    let mut rng = stream_rng(seed, Stage::MainLoop as u64);
    let mut opt = schedule.optimizer()?;
    let all: Vec<usize> = (0..view.len()).collect();
    let mut reports = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        opt.set_lr(schedule.lr_at(epoch));
        cross_entropy_epoch(
            net,
            &mut opt,
            view.features,
            view.labels,
            &all,
            schedule.batch_size,
            &mut rng,
        )?;
        let model = model_losses(net, view.features, view.labels, gmm)?;
        let pred: Vec<bool> = model.posterior.as_slice().iter().map(|&x| x >= 0.5).collect();
        let m = evaluator.split_metrics(&pred)?;
        reports.push(EpochReport {
            epoch,
            posterior_mean: None,
            posterior_variance: None,
            tau_mu: None,
            tau_nu: None,
            hedged_clean: None,
            hedged_noisy: None,
            splitnet_trained: false,
            n_clean_set: None,
            eta: None,
            mask_count: None,
            pseudo_correct: None,
            pseudo_wrong: None,
            split_f1_splitnet: None,
            split_f1_gmm: Some(m.f1),
            split_acc_splitnet: None,
            split_acc_gmm: Some(m.accuracy),
            test_acc: evaluator.test_accuracy(net)?,
        });
    }
    Ok(reports)
}

/// Helper for callers that hold a dump directory as a path.
pub fn dumps_in(dir: Option<&Path>) -> DumpOptions {
    DumpOptions {
        dir: dir.map(Path::to_path_buf),
    }
}
