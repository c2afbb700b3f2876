//! Warm-up: K-fold cross-filtering picks presumed-clean samples, then the
//! main model is trained semi-supervised (mixup on the filtered set plus
//! fixed-threshold consistency on everything).

use std::fs::File;
use std::path::Path;

use ndarray::{concatenate, s, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{gather_rows, one_hot, AugmentSpec, Augmenter, TrainView};
use crate::error::{Error, Result};
use crate::nn::loss::weighted_cross_entropy;
use crate::nn::train::{cross_entropy_epoch, minibatches};
use crate::nn::{argmax, mixup, softmax, ClassifierConfig, Mlp, Mode, SgdSchedule};
use crate::rng::{stream_rng, Stage, StageRng};

pub const DEFAULT_FOLDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Fold index of each sample.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Sample indices of fold `k`, ascending.
    pub fn fold(&self, k: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == k)
            .collect()
    }

    /// Every sample not in fold `k`, ascending.
    pub fn out_of_fold(&self, k: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != k)
            .collect()
    }
}

/// Random permutation cut into `k` folds whose sizes differ by at most one.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!("need 2 <= K <= N, got K={k}, N={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 0));
    let mut assignment = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &i in &order[start..start + size] {
            assignment[i] = fold;
        }
        start += size;
    }
    Ok(FoldPlan { k, assignment })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub net: ClassifierConfig,
    pub schedule: SgdSchedule,
    pub epochs: usize,
    pub tau_label: f64,
}

/// Indices presumed clean.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilteredSet {
    pub indices: Vec<usize>,
}

impl FilteredSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        serde_json::to_writer(File::create(path)?, &self.indices)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let indices: Vec<usize> = serde_json::from_reader(File::open(path)?)?;
        Ok(Self { indices })
    }
}

/// Which samples each fold's filter trained on and scored.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAudit {
    pub trained_on: Vec<usize>,
    pub evaluated: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CrossFilterOutcome {
    pub filtered: FilteredSet,
    pub audit: Vec<FoldAudit>,
}

/// Admission rule: the observed label must equal the filter's argmax and the
/// filter's top probability must reach `tau_label`.
pub fn admits(probs: impl IntoIterator<Item = f64> + Clone, label: usize, tau_label: f64) -> bool {
    let top = probs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    argmax(probs) == label && top >= tau_label
}

/// Train a fresh filter per fold on the other folds and keep the held-out
/// samples it agrees with confidently.
pub fn cross_filter(
    view: TrainView<'_>,
    plan: &FoldPlan,
    config: &FilterConfig,
    seed: u64,
) -> Result<CrossFilterOutcome> {
    if plan.assignment.len() != view.len() {
        return Err(Error::Shape("fold plan does not cover the dataset".into()));
    }
    let folds: Vec<Result<(Vec<usize>, FoldAudit)>> = (0..plan.k)
        .into_par_iter()
        .map(|k| {
            let train = plan.out_of_fold(k);
            let held_out = plan.fold(k);
            let mut rng = stream_rng(seed, Stage::FilterBase as u64 + k as u64);
            let mut net = config.net.build(view.features.ncols(), view.class_count, &mut rng)?;
            let mut opt = config.schedule.optimizer()?;
            for epoch in 0..config.epochs {
                opt.set_lr(config.schedule.lr_at(epoch));
                cross_entropy_epoch(
                    &mut net,
                    &mut opt,
                    view.features,
                    view.labels,
                    &train,
                    config.schedule.batch_size,
                    &mut rng,
                )?;
            }
            let probs = softmax(net.predict(gather_rows(view.features, &held_out).view())?.view());
            let admitted = held_out
                .iter()
                .zip(probs.outer_iter())
                .filter(|(&i, row)| admits(row.iter().copied(), view.labels[i], config.tau_label))
                .map(|(&i, _)| i)
                .collect();
            Ok((
                admitted,
                FoldAudit {
                    trained_on: train,
                    evaluated: held_out,
                },
            ))
        })
        .collect();

    let mut indices = Vec::new();
    let mut audit = Vec::with_capacity(plan.k);
    for fold in folds {
        let (admitted, a) = fold?;
        indices.extend(admitted);
        audit.push(a);
    }
    indices.sort_unstable();
    Ok(CrossFilterOutcome {
        filtered: FilteredSet { indices },
        audit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmupConfig {
    pub schedule: SgdSchedule,
    pub epochs: usize,
    pub mixup_alpha: f64,
    /// Confidence a weak-view prediction needs before it becomes a
    /// pseudo-label.
    pub tau_fixed: f64,
    pub augment: AugmentSpec,
}

/// Semi-supervised warm-up. Each step pairs a mixup cross-entropy on a batch
/// drawn from `filtered` with a consistency loss on a batch drawn from the
/// whole dataset; the two terms are summed with equal weight. Observed
/// labels outside `filtered` are never read.
pub fn warmup_train(
    net: &mut Mlp,
    view: TrainView<'_>,
    filtered: &FilteredSet,
    config: &WarmupConfig,
    seed: u64,
) -> Result<()> {
    if filtered.is_empty() {
        return Err(Error::EmptyFilteredSet);
    }
    let mut rng = stream_rng(seed, 0);
    let augmenter = Augmenter::new(config.augment, view.features);
    let mut opt = config.schedule.optimizer()?;
    let all: Vec<usize> = (0..view.len()).collect();
    let mut labelled = LabelledCycle::new(&filtered.indices);
    let r = view.class_count;

    for epoch in 0..config.epochs {
        opt.set_lr(config.schedule.lr_at(epoch));
        for batch in minibatches(&all, config.schedule.batch_size, &mut rng) {
            let b = batch.len();
            let sup_rows = labelled.take(b, &mut rng);
            let x_sup = augmenter.weak_batch(view.features, &sup_rows, &mut rng);
            let y: Vec<usize> = sup_rows.iter().map(|&i| view.labels[i]).collect();
            let t_sup = one_hot(&y, r);
            let mut perm: Vec<usize> = (0..b).collect();
            perm.shuffle(&mut rng);
            let x_perm = x_sup.select(Axis(0), &perm);
            let t_perm = t_sup.select(Axis(0), &perm);
            let (x_mix, t_mix, _) = mixup(
                x_sup.view(),
                t_sup.view(),
                x_perm.view(),
                t_perm.view(),
                config.mixup_alpha,
                &mut rng,
            )?;

            let x_weak = augmenter.weak_batch(view.features, &batch, &mut rng);
            let weak_probs = softmax(net.predict(x_weak.view())?.view());
            let mut q = Vec::with_capacity(b);
            let mut mask = Vec::with_capacity(b);
            for row in weak_probs.outer_iter() {
                let c = argmax(row.iter().copied());
                q.push(c);
                mask.push(if row[c] >= config.tau_fixed { 1.0 } else { 0.0 });
            }
            let t_q = one_hot(&q, r);
            let x_strong = augmenter.strong_batch(view.features, &batch, &mut rng);

            let x = concatenate(Axis(0), &[x_mix.view(), x_strong.view()]).map_err(|e| Error::Shape(e.to_string()))?;
            let logits = net.forward(x.view(), Mode::Train)?;
            let (_, g_sup) = weighted_cross_entropy(logits.slice(s![..b, ..]), t_mix.view(), &vec![1.0; b], b as f64)?;
            let (_, g_cons) = weighted_cross_entropy(logits.slice(s![b.., ..]), t_q.view(), &mask, b as f64)?;
            let grad = concatenate(Axis(0), &[g_sup.view(), g_cons.view()]).map_err(|e| Error::Shape(e.to_string()))?;
            let grads = net.backward(grad.view())?;
            opt.apply(net, &grads)?;
        }
    }
    net.set_mode(Mode::Eval);
    Ok(())
}

/// Plain cross-entropy on every observed label.
pub fn plain_warmup(
    net: &mut Mlp,
    view: TrainView<'_>,
    schedule: &SgdSchedule,
    epochs: usize,
    seed: u64,
) -> Result<()> {
    let mut rng = stream_rng(seed, 0);
    let mut opt = schedule.optimizer()?;
    let all: Vec<usize> = (0..view.len()).collect();
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
    }
    Ok(())
}

/// Endless reshuffled pass over a labelled index set.
pub(crate) struct LabelledCycle {
    pool: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
}

impl LabelledCycle {
    pub(crate) fn new(pool: &[usize]) -> Self {
        Self {
            pool: pool.to_vec(),
            order: Vec::new(),
            cursor: 0,
        }
    }

    pub(crate) fn take(&mut self, n: usize, rng: &mut StageRng) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.cursor == self.order.len() {
                self.order = self.pool.clone();
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}
