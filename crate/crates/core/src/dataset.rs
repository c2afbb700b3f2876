//! Synthetic labelled data, controlled label corruption and feature-space
//! augmentation.
//!
//! Labels are stored as class indices; [`one_hot`] expands them when a
//! dense target matrix is needed.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StageRng};

/// Ground-truth labelled data.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl CleanDataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "class_count must be >= 2, got {class_count}"
            )));
        }
        if features.nrows() == 0 {
            return Err(Error::InvalidArgument("dataset must not be empty".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Which classes a corrupted label may move to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Replace with a uniformly drawn class other than the original.
    Symmetric,
    /// Replace class `c` with `pair_map[c]`. Classes mapped to themselves are
    /// never selected for corruption.
    Asymmetric { pair_map: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub ratio: f64,
}

impl NoiseSpec {
    pub fn symmetric(ratio: f64) -> Self {
        Self {
            kind: NoiseKind::Symmetric,
            ratio,
        }
    }

    /// Asymmetric noise with the cyclic map `c -> (c + 1) mod r`.
    pub fn asymmetric(ratio: f64, class_count: usize) -> Self {
        Self {
            kind: NoiseKind::Asymmetric {
                pair_map: (0..class_count).map(|c| (c + 1) % class_count).collect(),
            },
            ratio,
        }
    }

    pub fn validate(&self, class_count: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::InvalidArgument(format!(
                "noise ratio must lie in [0, 1], got {}",
                self.ratio
            )));
        }
        if let NoiseKind::Asymmetric { pair_map } = &self.kind {
            if class_count < 2 {
                return Err(Error::InvalidArgument(
                    "asymmetric noise needs at least two classes".into(),
                ));
            }
            if pair_map.len() != class_count {
                return Err(Error::Shape(format!(
                    "pair_map has {} entries for {class_count} classes",
                    pair_map.len()
                )));
            }
            if let Some(&bad) = pair_map.iter().find(|&&t| t >= class_count) {
                return Err(Error::InvalidArgument(format!("pair_map target {bad} out of range")));
            }
            if pair_map.iter().enumerate().all(|(c, &t)| c == t) && self.ratio > 0.0 {
                return Err(Error::InvalidArgument(
                    "pair_map is the identity; no class can be corrupted".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Labels known to the learner plus a ground-truth record that only the
/// evaluation code is allowed to open.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    features: Array2<f64>,
    noisy_labels: Vec<usize>,
    class_count: usize,
    truth: GroundTruth,
}

/// Evaluation-only view of the true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    labels: Vec<usize>,
    clean_mask: Vec<bool>,
}

impl GroundTruth {
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn clean_mask(&self) -> &[bool] {
        &self.clean_mask
    }

    pub fn clean_fraction(&self) -> f64 {
        self.clean_mask.iter().filter(|&&c| c).count() as f64 / self.clean_mask.len() as f64
    }
}

/// What the training code sees: features and observed labels, nothing else.
#[derive(Debug, Clone, Copy)]
pub struct TrainView<'a> {
    pub features: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    pub class_count: usize,
}

impl TrainView<'_> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl NoisyDataset {
    /// Assemble from parts; the clean mask is recomputed from the labels.
    pub fn from_parts(
        features: Array2<f64>,
        noisy_labels: Vec<usize>,
        true_labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if noisy_labels.len() != true_labels.len() {
            return Err(Error::Shape("noisy/true label lengths differ".into()));
        }
        let clean = CleanDataset::new(features, true_labels, class_count)?;
        if let Some(&bad) = noisy_labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidArgument(format!("noisy label {bad} out of range")));
        }
        let clean_mask = noisy_labels.iter().zip(&clean.labels).map(|(a, b)| a == b).collect();
        Ok(Self {
            features: clean.features,
            noisy_labels,
            class_count,
            truth: GroundTruth {
                labels: clean.labels,
                clean_mask,
            },
        })
    }

    pub fn train_view(&self) -> TrainView<'_> {
        TrainView {
            features: self.features.view(),
            labels: &self.noisy_labels,
            class_count: self.class_count,
        }
    }

    pub fn ground_truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn len(&self) -> usize {
        self.noisy_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy_labels.is_empty()
    }

    pub fn noisy_count(&self) -> usize {
        self.truth.clean_mask.iter().filter(|&&c| !c).count()
    }
}

/// One-hot matrix for `labels`.
pub fn one_hot(labels: &[usize], class_count: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), class_count));
    for (i, &l) in labels.iter().enumerate() {
        out[[i, l]] = 1.0;
    }
    out
}

/// Cluster centre for class `c`: unit simplex vertex when `d >= r`, otherwise
/// a point on the unit circle in the first two coordinates.
fn cluster_mean(c: usize, r: usize, d: usize) -> Array1<f64> {
    let mut mean = Array1::zeros(d);
    if d >= r {
        mean[c] = 1.0;
    } else {
        let angle = std::f64::consts::TAU * c as f64 / r as f64;
        mean[0] = angle.cos();
        mean[1] = angle.sin();
    }
    mean
}

/// Isotropic Gaussian blobs, `per_class` samples per class, classes
/// interleaved (`label_i = i mod r`).
pub fn generate_blobs(
    class_count: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<CleanDataset> {
    if class_count < 2 || per_class < 1 || dim < 2 || !(spread > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "generate_blobs needs r >= 2, per_class >= 1, d >= 2, spread > 0 \
             (got r={class_count}, per_class={per_class}, d={dim}, spread={spread})"
        )));
    }
    let n = class_count * per_class;
    let means: Vec<_> = (0..class_count).map(|c| cluster_mean(c, class_count, dim)).collect();
    let mut rng = stream_rng(seed, 0);
    let mut features = Array2::zeros((n, dim));
    let labels: Vec<usize> = (0..n).map(|i| i % class_count).collect();
    for (i, mut row) in features.axis_iter_mut(Axis(0)).enumerate() {
        let mean = &means[labels[i]];
        for (j, v) in row.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = mean[j] + spread * z;
        }
    }
    CleanDataset::new(features, labels, class_count)
}

/// Corrupt exactly `round(ratio * N)` labels, chosen uniformly without
/// replacement.
pub fn inject_noise(ds: &CleanDataset, spec: &NoiseSpec, seed: u64) -> Result<NoisyDataset> {
    let r = ds.class_count();
    spec.validate(r)?;
    let n = ds.len();
    let target = (spec.ratio * n as f64).round() as usize;
    let mut rng = stream_rng(seed, 0);
    let mut noisy = ds.labels.clone();

    match &spec.kind {
        NoiseKind::Symmetric => {
            for i in index::sample(&mut rng, n, target) {
                let original = noisy[i];
                let mut replacement = rng.random_range(0..r - 1);
                if replacement >= original {
                    replacement += 1;
                }
                noisy[i] = replacement;
            }
        }
        NoiseKind::Asymmetric { pair_map } => {
            let eligible: Vec<usize> = (0..n).filter(|&i| pair_map[ds.labels[i]] != ds.labels[i]).collect();
            if target > eligible.len() {
                return Err(Error::InvalidArgument(format!(
                    "asymmetric noise needs {target} flips but only {} samples belong to \
                     affected classes",
                    eligible.len()
                )));
            }
            for k in index::sample(&mut rng, eligible.len(), target) {
                let i = eligible[k];
                noisy[i] = pair_map[noisy[i]];
            }
        }
    }

    NoisyDataset::from_parts(ds.features.clone(), noisy, ds.labels.clone(), r)
}

/// Jitter and masking strengths. Jitter scales are fractions of each
/// feature's standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub weak_sigma: f64,
    pub strong_sigma: f64,
    pub mask_fraction: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            weak_sigma: 0.1,
            strong_sigma: 0.5,
            mask_fraction: 0.25,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.weak_sigma && self.weak_sigma <= self.strong_sigma) {
            return Err(Error::config("weak_sigma", "need 0 <= weak_sigma <= strong_sigma"));
        }
        if !(0.0..1.0).contains(&self.mask_fraction) {
            return Err(Error::config("mask_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Per-column population standard deviation.
pub fn feature_std(features: ArrayView2<'_, f64>) -> Vec<f64> {
    features.std_axis(Axis(0), 0.0).to_vec()
}

fn jitter<R: RngCore + ?Sized>(x: ArrayView1<'_, f64>, sigma: f64, feature_std: &[f64], rng: &mut R) -> Vec<f64> {
    x.iter()
        .zip(feature_std)
        .map(|(&v, &s)| {
            if sigma == 0.0 {
                v
            } else {
                let z: f64 = StandardNormal.sample(rng);
                v + sigma * s * z
            }
        })
        .collect()
}

/// `x + N(0, weak_sigma * std_j)` per coordinate.
pub fn weak_augment<R: RngCore + ?Sized>(
    x: ArrayView1<'_, f64>,
    spec: &AugmentSpec,
    feature_std: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    jitter(x, spec.weak_sigma, feature_std, rng)
}

/// Strong jitter followed by zeroing `floor(mask_fraction * d)` coordinates.
pub fn strong_augment<R: RngCore + ?Sized>(
    x: ArrayView1<'_, f64>,
    spec: &AugmentSpec,
    feature_std: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let mut out = jitter(x, spec.strong_sigma, feature_std, rng);
    let d = out.len();
    let masked = (spec.mask_fraction * d as f64).floor() as usize;
    if masked > 0 {
        for j in index::sample(rng, d, masked) {
            out[j] = 0.0;
        }
    }
    out
}

/// Stateless augmenter bound to a dataset's feature scales.
#[derive(Debug, Clone)]
pub struct Augmenter {
    pub spec: AugmentSpec,
    pub feature_std: Vec<f64>,
}

impl Augmenter {
    pub fn new(spec: AugmentSpec, features: ArrayView2<'_, f64>) -> Self {
        Self {
            spec,
            feature_std: feature_std(features),
        }
    }

    pub fn weak_batch(&self, features: ArrayView2<'_, f64>, rows: &[usize], rng: &mut StageRng) -> Array2<f64> {
        self.map_rows(
            features,
            rows,
            |x, rng| weak_augment(x, &self.spec, &self.feature_std, rng),
            rng,
        )
    }

    pub fn strong_batch(&self, features: ArrayView2<'_, f64>, rows: &[usize], rng: &mut StageRng) -> Array2<f64> {
        self.map_rows(
            features,
            rows,
            |x, rng| strong_augment(x, &self.spec, &self.feature_std, rng),
            rng,
        )
    }

    fn map_rows<F>(&self, features: ArrayView2<'_, f64>, rows: &[usize], f: F, rng: &mut StageRng) -> Array2<f64>
    where
        F: Fn(ArrayView1<'_, f64>, &mut StageRng) -> Vec<f64>,
    {
        let d = features.ncols();
        let mut out = Array2::zeros((rows.len(), d));
        for (k, &i) in rows.iter().enumerate() {
            let v = f(features.row(i), rng);
            out.row_mut(k).assign(&Array1::from(v));
        }
        out
    }
}

/// Rows of `features` selected by `rows`.
pub fn gather_rows(features: ArrayView2<'_, f64>, rows: &[usize]) -> Array2<f64> {
    features.select(Axis(0), rows)
}

/// JSON sidecar written next to an exported dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub r: usize,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub spec: NoiseSpec,
    pub seed: u64,
}

/// Write `<stem>.csv` (`f0..f{d-1}, noisy_label, true_label`) and
/// `<stem>.json`.
pub fn export_dataset(ds: &NoisyDataset, spec: &NoiseSpec, seed: u64, stem: &Path) -> Result<()> {
    let d = ds.feature_dim();
    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(stem.with_extension("csv"))?));
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    header.push("noisy_label".into());
    header.push("true_label".into());
    writer.write_record(&header)?;
    for (i, row) in ds.features.axis_iter(Axis(0)).enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(ds.noisy_labels[i].to_string());
        rec.push(ds.truth.labels[i].to_string());
        writer.write_record(&rec)?;
    }
    writer.flush()?;

    let sidecar = DatasetSidecar {
        r: ds.class_count,
        d,
        n: ds.len(),
        spec: spec.clone(),
        seed,
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(stem.with_extension("json"))?), &sidecar)?;
    Ok(())
}

/// Inverse of [`export_dataset`]; the sidecar's shape fields are checked
/// against the CSV.
pub fn import_dataset(stem: &Path) -> Result<(NoisyDataset, DatasetSidecar)> {
    let sidecar: DatasetSidecar = serde_json::from_reader(File::open(stem.with_extension("json"))?)?;
    let mut reader = csv::Reader::from_path(stem.with_extension("csv"))?;
    let header = reader.headers()?.clone();
    if header.len() != sidecar.d + 2 {
        return Err(Error::Shape(format!(
            "CSV has {} columns, sidecar says d={}",
            header.len(),
            sidecar.d
        )));
    }
    let mut values = Vec::with_capacity(sidecar.n * sidecar.d);
    let mut noisy = Vec::with_capacity(sidecar.n);
    let mut truth = Vec::with_capacity(sidecar.n);
    let parse_err = |what: &str| Error::InvalidArgument(format!("unparsable {what} in dataset CSV"));
    for rec in reader.records() {
        let rec = rec?;
        for j in 0..sidecar.d {
            values.push(rec[j].parse::<f64>().map_err(|_| parse_err("feature"))?);
        }
        noisy.push(rec[sidecar.d].parse::<usize>().map_err(|_| parse_err("label"))?);
        truth.push(rec[sidecar.d + 1].parse::<usize>().map_err(|_| parse_err("label"))?);
    }
    if noisy.len() != sidecar.n {
        return Err(Error::Shape(format!(
            "CSV has {} rows, sidecar says N={}",
            noisy.len(),
            sidecar.n
        )));
    }
    let features = Array2::from_shape_vec((sidecar.n, sidecar.d), values).map_err(|e| Error::Shape(e.to_string()))?;
    let ds = NoisyDataset::from_parts(features, noisy, truth, sidecar.r)?;
    Ok((ds, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    #[test]
    fn blobs_are_balanced() {
        let ds = generate_blobs(4, 500, 2, 0.3, 1).unwrap();
        assert_eq!(ds.len(), 2000);
        for c in 0..4 {
            assert_eq!(ds.labels().iter().filter(|&&l| l == c).count(), 500);
        }
    }

    #[test]
    fn minimal_blobs() {
        let ds = generate_blobs(2, 1, 2, 0.3, 1).unwrap();
        assert_eq!(ds.len(), 2);
        assert_ne!(ds.labels()[0], ds.labels()[1]);
    }

    #[test]
    fn blobs_are_deterministic() {
        let a = generate_blobs(3, 20, 5, 0.5, 9).unwrap();
        let b = generate_blobs(3, 20, 5, 0.5, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_blobs(3, 20, 5, 0.5, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn blob_arguments_are_checked() {
        assert!(generate_blobs(1, 10, 2, 0.3, 0).is_err());
        assert!(generate_blobs(2, 0, 2, 0.3, 0).is_err());
        assert!(generate_blobs(2, 10, 1, 0.3, 0).is_err());
        assert!(generate_blobs(2, 10, 2, 0.0, 0).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let ds = generate_blobs(4, 50, 4, 0.3, 1).unwrap();
        let noisy = inject_noise(&ds, &NoiseSpec::symmetric(0.0), 2).unwrap();
        assert!(noisy.ground_truth().clean_mask().iter().all(|&c| c));
        assert_eq!(noisy.noisy_labels(), ds.labels());
    }

    #[test]
    fn full_symmetric_noise_flips_everything() {
        let ds = generate_blobs(4, 50, 4, 0.3, 1).unwrap();
        let noisy = inject_noise(&ds, &NoiseSpec::symmetric(1.0), 2).unwrap();
        assert!(noisy.ground_truth().clean_mask().iter().all(|&c| !c));
    }

    #[test]
    fn exact_noise_count() {
        let ds = generate_blobs(4, 500, 4, 0.3, 1).unwrap();
        let noisy = inject_noise(&ds, &NoiseSpec::symmetric(0.4), 3).unwrap();
        assert_eq!(noisy.noisy_count(), 800);
    }

    #[test]
    fn asymmetric_follows_pair_map() {
        let ds = generate_blobs(5, 40, 5, 0.3, 1).unwrap();
        let spec = NoiseSpec::asymmetric(0.3, 5);
        let noisy = inject_noise(&ds, &spec, 4).unwrap();
        assert_eq!(noisy.noisy_count(), 60);
        let truth = noisy.ground_truth();
        for i in 0..noisy.len() {
            if !truth.clean_mask()[i] {
                assert_eq!(noisy.noisy_labels()[i], (truth.labels()[i] + 1) % 5);
            }
        }
    }

    #[test]
    fn asymmetric_with_partial_map_only_touches_affected_classes() {
        let ds = generate_blobs(4, 25, 4, 0.3, 1).unwrap();
        let spec = NoiseSpec {
            kind: NoiseKind::Asymmetric {
                pair_map: vec![1, 1, 2, 3],
            },
            ratio: 0.2,
        };
        let noisy = inject_noise(&ds, &spec, 4).unwrap();
        assert_eq!(noisy.noisy_count(), 20);
        let truth = noisy.ground_truth();
        for i in 0..noisy.len() {
            if !truth.clean_mask()[i] {
                assert_eq!(truth.labels()[i], 0);
                assert_eq!(noisy.noisy_labels()[i], 1);
            }
        }
        let too_many = NoiseSpec { ratio: 0.5, ..spec };
        assert!(inject_noise(&ds, &too_many, 4).is_err());
    }

    #[test]
    fn invalid_noise_specs() {
        let ds = generate_blobs(3, 10, 3, 0.3, 1).unwrap();
        assert!(inject_noise(&ds, &NoiseSpec::symmetric(1.5), 0).is_err());
        let bad_map = NoiseSpec {
            kind: NoiseKind::Asymmetric { pair_map: vec![1, 2] },
            ratio: 0.1,
        };
        assert!(inject_noise(&ds, &bad_map, 0).is_err());
    }

    #[test]
    fn weak_augment_identity_and_determinism() {
        let x = Array1::from(vec![1.0, -2.0, 3.0]);
        let std = vec![1.0; 3];
        let off = AugmentSpec {
            weak_sigma: 0.0,
            strong_sigma: 0.0,
            mask_fraction: 0.0,
        };
        let mut rng = stream_rng(1, 0);
        assert_eq!(weak_augment(x.view(), &off, &std, &mut rng), x.to_vec());
        assert_eq!(strong_augment(x.view(), &off, &std, &mut rng), x.to_vec());

        let on = AugmentSpec::default();
        let a = weak_augment(x.view(), &on, &std, &mut stream_rng(5, 0));
        let b = weak_augment(x.view(), &on, &std, &mut stream_rng(5, 0));
        assert_eq!(a, b);
        assert_ne!(a, x.to_vec());
    }

    #[test]
    fn weak_augment_mean_abs_shift() {
        // E|N(0, 0.1)| = 0.1 * sqrt(2 / pi)
        let expected = 0.1 * (2.0 / std::f64::consts::PI).sqrt();
        let spec = AugmentSpec {
            weak_sigma: 0.1,
            ..AugmentSpec::default()
        };
        let x = Array1::zeros(1);
        let mut rng = stream_rng(11, 0);
        let draws = 10_000;
        let total: f64 = (0..draws)
            .map(|_| weak_augment(x.view(), &spec, &[1.0], &mut rng)[0].abs())
            .sum();
        let mean = total / draws as f64;
        assert!((mean - expected).abs() < 0.003, "mean |delta| = {mean}");
        assert!((mean - 0.08).abs() < 0.005);
    }

    #[test]
    fn strong_augment_masks_exact_count() {
        let spec = AugmentSpec {
            weak_sigma: 0.0,
            strong_sigma: 0.0,
            mask_fraction: 0.5,
        };
        let x = Array1::from(vec![1.0; 8]);
        let out = strong_augment(x.view(), &spec, &[1.0; 8], &mut stream_rng(3, 0));
        assert_eq!(out.iter().filter(|&&v| v == 0.0).count(), 4);
    }

    #[test]
    fn strong_view_varies_more_than_weak() {
        let spec = AugmentSpec::default();
        let x = Array1::from(vec![0.5; 8]);
        let std = vec![1.0; 8];
        let mut rng = stream_rng(4, 0);
        let sample_var = |strong: bool, rng: &mut StageRng| {
            let mut sum = 0.0;
            let mut sq = 0.0;
            let mut n = 0.0;
            for _ in 0..2000 {
                let y = if strong {
                    strong_augment(x.view(), &spec, &std, rng)
                } else {
                    weak_augment(x.view(), &spec, &std, rng)
                };
                for (a, b) in y.iter().zip(x.iter()) {
                    let d = a - b;
                    sum += d;
                    sq += d * d;
                    n += 1.0;
                }
            }
            sq / n - (sum / n).powi(2)
        };
        assert!(sample_var(true, &mut rng) > sample_var(false, &mut rng));
    }

    #[test]
    fn augment_spec_validation() {
        assert!(AugmentSpec::default().validate().is_ok());
        let bad = AugmentSpec {
            weak_sigma: 0.6,
            strong_sigma: 0.5,
            mask_fraction: 0.0,
        };
        assert!(bad.validate().is_err());
        let bad = AugmentSpec {
            mask_fraction: 1.0,
            ..AugmentSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("blobs");
        let ds = generate_blobs(3, 10, 4, 0.7, 5).unwrap();
        let spec = NoiseSpec::symmetric(0.3);
        let noisy = inject_noise(&ds, &spec, 6).unwrap();
        export_dataset(&noisy, &spec, 6, &stem).unwrap();
        let (back, sidecar) = import_dataset(&stem).unwrap();
        assert_eq!(back, noisy);
        assert_eq!(sidecar.n, 30);
        assert_eq!(sidecar.spec, spec);
        let header = std::fs::read_to_string(stem.with_extension("csv")).unwrap();
        assert!(header.starts_with("f0,f1,f2,f3,noisy_label,true_label\n"));
    }

    proptest! {
        #[test]
        fn noise_count_and_flip_rules(
            r in 2usize..7,
            per_class in 1usize..40,
            ratio in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let ds = generate_blobs(r, per_class, 3, 0.5, seed).unwrap();
            let noisy = inject_noise(&ds, &NoiseSpec::symmetric(ratio), seed ^ 1).unwrap();
            let expected = (ratio * ds.len() as f64).round() as usize;
            prop_assert_eq!(noisy.noisy_count(), expected);
            let truth = noisy.ground_truth();
            for i in 0..noisy.len() {
                prop_assert_eq!(
                    truth.clean_mask()[i],
                    noisy.noisy_labels()[i] == truth.labels()[i]
                );
            }
            let again = inject_noise(&ds, &NoiseSpec::symmetric(ratio), seed ^ 1).unwrap();
            prop_assert_eq!(again, noisy);
        }
    }
}
