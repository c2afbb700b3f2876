//! Split-quality and pseudo-label bookkeeping. [`Evaluator`] is the only
//! place the training pipeline can learn anything about the true labels,
//! and it only hands back aggregate metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{CleanDataset, GroundTruth};
use crate::error::{Error, Result};
use crate::hedging::HedgedSet;
use crate::nn::train::accuracy;
use crate::nn::Mlp;
use crate::splitnet::{write_split_dump, SplitScore};

/// Confusion counts with clean as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn split_metrics(pred_clean: &[bool], truth_clean: &[bool]) -> Result<SplitMetrics> {
    if pred_clean.len() != truth_clean.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} ground-truth flags",
            pred_clean.len(),
            truth_clean.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in pred_clean.iter().zip(truth_clean) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(SplitMetrics {
        tp,
        fp,
        fn_,
        tn,
        precision,
        recall,
        f1,
        accuracy: ratio(tp + tn, pred_clean.len()),
    })
}

/// `(correct, wrong)` among pseudo-labels whose mask is set.
pub fn pseudo_label_counts(q: &[usize], truth: &[usize], mask: &[bool]) -> (usize, usize) {
    q.iter().zip(truth).zip(mask).filter(|(_, &m)| m).fold(
        (0, 0),
        |(c, w), ((a, b), _)| if a == b { (c + 1, w) } else { (c, w + 1) },
    )
}

/// Evaluation oracle handed to the training loop.
#[derive(Debug, Clone, Copy)]
pub struct Evaluator<'a> {
    truth: &'a GroundTruth,
    test: &'a CleanDataset,
}

impl<'a> Evaluator<'a> {
    pub fn new(truth: &'a GroundTruth, test: &'a CleanDataset) -> Self {
        Self { truth, test }
    }

    pub fn split_metrics(&self, pred_clean: &[bool]) -> Result<SplitMetrics> {
        split_metrics(pred_clean, self.truth.clean_mask())
    }

    /// Pseudo-label correctness for training rows `rows`.
    pub fn pseudo_label_counts(&self, rows: &[usize], q: &[usize], mask: &[bool]) -> (usize, usize) {
        let truth: Vec<usize> = rows.iter().map(|&i| self.truth.labels()[i]).collect();
        pseudo_label_counts(q, &truth, mask)
    }

    pub fn test_accuracy(&self, net: &Mlp) -> Result<f64> {
        accuracy(net, self.test.features(), self.test.labels())
    }

    /// Fraction of `indices` whose observed label is clean; 0 for an empty
    /// set.
    pub fn precision_of(&self, indices: &[usize]) -> f64 {
        let clean = indices.iter().filter(|&&i| self.truth.clean_mask()[i]).count();
        ratio(clean, indices.len())
    }

    pub fn clean_fraction(&self) -> f64 {
        self.truth.clean_fraction()
    }

    pub fn write_split_dump(&self, scores: &[SplitScore], hedged: &HedgedSet, path: &Path) -> Result<()> {
        write_split_dump(scores, hedged, self.truth.clean_mask(), path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_split() {
        let t = [true, false, true, true];
        let m = split_metrics(&t, &t).unwrap();
        assert_eq!((m.f1, m.accuracy), (1.0, 1.0));
    }

    #[test]
    fn hand_counts() {
        let mut pred = Vec::new();
        let mut truth = Vec::new();
        for (p, t, n) in [(true, true, 8), (true, false, 2), (false, true, 2), (false, false, 8)] {
            for _ in 0..n {
                pred.push(p);
                truth.push(t);
            }
        }
        let m = split_metrics(&pred, &truth).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (8, 2, 2, 8));
        for v in [m.precision, m.recall, m.f1, m.accuracy] {
            assert!((v - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn all_noisy_prediction_guards_f1() {
        let m = split_metrics(&[false, false, false], &[true, false, true]).unwrap();
        assert_eq!(m.f1, 0.0);
        assert!(split_metrics(&[true], &[true, false]).is_err());
    }

    #[test]
    fn pseudo_counts() {
        assert_eq!(pseudo_label_counts(&[0, 1], &[0, 1], &[false, false]), (0, 0));
        assert_eq!(pseudo_label_counts(&[0, 1, 2], &[0, 1, 2], &[true; 3]), (3, 0));
        assert_eq!(
            pseudo_label_counts(&[0, 1, 2], &[0, 2, 2], &[true, true, false]),
            (1, 1)
        );
    }

    proptest! {
        #[test]
        fn metric_identities(pairs in proptest::collection::vec(any::<(bool, bool)>(), 1..200)) {
            let (pred, truth): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
            let m = split_metrics(&pred, &truth).unwrap();
            prop_assert_eq!(m.tp + m.fp + m.fn_ + m.tn, pred.len());
            prop_assert!((0.0..=1.0).contains(&m.f1));
            prop_assert!((0.0..=1.0).contains(&m.accuracy));
            prop_assert!((m.accuracy - (m.tp + m.tn) as f64 / pred.len() as f64).abs() < 1e-15);
        }

        #[test]
        fn pseudo_counts_partition_mask(
            rows in proptest::collection::vec((0usize..4, 0usize..4, any::<bool>()), 0..100)
        ) {
            let q: Vec<usize> = rows.iter().map(|r| r.0).collect();
            let t: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let m: Vec<bool> = rows.iter().map(|r| r.2).collect();
            let (c, w) = pseudo_label_counts(&q, &t, &m);
            prop_assert_eq!(c + w, m.iter().filter(|&&b| b).count());
        }
    }
}
