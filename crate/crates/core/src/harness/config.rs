use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::{AugmentSpec, NoiseSpec};
use crate::error::{Error, Result};
use crate::gmm::GmmConfig;
use crate::hedging::DEFAULT_PIVOT;
use crate::nn::{ClassifierConfig, SgdSchedule};
use crate::splitnet::SplitNetConfig;
use crate::training::{HedgeMode, LoopConfig, LoopVariant, ScoreSource, ThresholdMode};
use crate::warmup::{FilterConfig, WarmupConfig, DEFAULT_FOLDS};

/// Which pipeline an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Full,
    /// GMM posteriors replace SplitNet scores.
    NoSplitNet,
    /// Plain cross-entropy warm-up instead of cross-filtering plus
    /// semi-supervised warm-up.
    NoWarmup,
    /// SplitNet trains on every sample, labelled by the GMM at 0.5.
    NoHedging,
    FixedThreshold(f64),
    /// Cross-entropy on the noisy labels for the whole budget.
    PlainCe,
}

impl Variant {
    pub fn loop_variant(self) -> LoopVariant {
        let mut v = LoopVariant::default();
        match self {
            Variant::NoSplitNet => v.scores = ScoreSource::Gmm,
            Variant::NoHedging => v.hedging = HedgeMode::Unhedged,
            Variant::FixedThreshold(t) => v.threshold = ThresholdMode::Fixed(t),
            Variant::Full | Variant::NoWarmup | Variant::PlainCe => {}
        }
        v
    }

    /// Whether the variant starts from the cross-filtered warm-up.
    pub fn uses_cross_filter(self) -> bool {
        !matches!(self, Variant::NoWarmup | Variant::PlainCe)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Full => f.write_str("full"),
            Variant::NoSplitNet => f.write_str("no_splitnet"),
            Variant::NoWarmup => f.write_str("no_warmup"),
            Variant::NoHedging => f.write_str("no_hedging"),
            Variant::FixedThreshold(t) => write!(f, "fixed_threshold:{t}"),
            Variant::PlainCe => f.write_str("plain_ce"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("variant", format!("unknown variant {s:?}"));
        Ok(match s {
            "full" => Variant::Full,
            "no_splitnet" => Variant::NoSplitNet,
            "no_warmup" => Variant::NoWarmup,
            "no_hedging" => Variant::NoHedging,
            "plain_ce" => Variant::PlainCe,
            other => {
                let tau = other.strip_prefix("fixed_threshold:").ok_or_else(bad)?;
                Variant::FixedThreshold(tau.parse().map_err(|_| bad())?)
            }
        })
    }
}

impl Serialize for Variant {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseType {
    Symmetric,
    Asymmetric,
}

/// Flat experiment configuration. Every field has a default, so a config
/// file only needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub variant: Variant,
    pub out: Option<PathBuf>,
    /// Write per-sample loss and split dumps every epoch.
    pub dumps: bool,

    // dataset
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub spread: f64,
    pub noise: NoiseType,
    pub noise_ratio: f64,

    // main network
    pub hidden: Vec<usize>,
    pub batch_norm: bool,

    // cross-filtering
    pub folds: usize,
    pub filter_epochs: usize,
    pub filter_lr: f64,
    /// Confidence a filter's out-of-fold prediction needs for admission. A
    /// filter trained on noisy labels is calibrated to roughly `1 - rho`, so
    /// this sits well below `tau_label`.
    pub filter_tau_label: f64,

    // warm-up
    pub warmup_epochs: usize,
    pub warmup_lr: f64,
    pub mixup_alpha: f64,
    pub tau_fixed: f64,

    // main loop
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub decay_factor: f64,
    /// Defaults to two thirds of `epochs`.
    pub decay_epoch: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub tau_label: f64,
    pub pivot: f64,

    // SplitNet
    pub splitnet_hidden: usize,
    pub splitnet_blocks: usize,
    pub splitnet_batch_norm: bool,
    pub splitnet_use_delta: bool,
    pub splitnet_lr: f64,
    pub splitnet_weight_decay: f64,
    pub splitnet_epochs: usize,
    pub splitnet_batch_size: usize,

    // augmentation
    pub weak_sigma: f64,
    pub strong_sigma: f64,
    pub mask_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let split = SplitNetConfig::default();
        let aug = AugmentSpec::default();
        Self {
            seed: 0,
            variant: Variant::Full,
            out: None,
            dumps: false,
            classes: 4,
            dim: 16,
            per_class: 500,
            test_per_class: 250,
            spread: 0.35,
            noise: NoiseType::Symmetric,
            noise_ratio: 0.5,
            hidden: vec![64, 64],
            batch_norm: true,
            folds: DEFAULT_FOLDS,
            filter_epochs: 20,
            filter_lr: 0.02,
            filter_tau_label: 0.5,
            warmup_epochs: 10,
            warmup_lr: 0.02,
            mixup_alpha: 4.0,
            tau_fixed: 0.95,
            epochs: 30,
            lr: 0.02,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            decay_factor: 0.1,
            decay_epoch: None,
            beta1: 0.95,
            beta2: 0.5,
            tau_label: 0.95,
            pivot: DEFAULT_PIVOT,
            splitnet_hidden: split.hidden,
            splitnet_blocks: split.blocks,
            splitnet_batch_norm: split.batch_norm,
            splitnet_use_delta: split.use_delta,
            splitnet_lr: split.lr,
            splitnet_weight_decay: split.weight_decay,
            splitnet_epochs: split.epochs,
            splitnet_batch_size: split.batch_size,
            weak_sigma: aug.weak_sigma,
            strong_sigma: aug.strong_sigma,
            mask_fraction: aug.mask_fraction,
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive, got {v}")))
    }
}

fn nonzero(field: &'static str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::config(field, "must be at least 1"))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("classes", "need at least 2 classes"));
        }
        if self.dim < 2 {
            return Err(Error::config("dim", "need at least 2 features"));
        }
        nonzero("per_class", self.per_class)?;
        nonzero("test_per_class", self.test_per_class)?;
        positive("spread", self.spread)?;
        self.noise_spec()
            .validate(self.classes)
            .map_err(|e| Error::config("noise_ratio", e.to_string()))?;
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden", "layer widths must be positive"));
        }
        let n = self.classes * self.per_class;
        if self.folds < 2 || self.folds > n {
            return Err(Error::config("folds", format!("need 2 <= folds <= {n}")));
        }
        positive("filter_lr", self.filter_lr)?;
        if !(self.filter_tau_label > 0.0 && self.filter_tau_label <= 1.0) {
            return Err(Error::config("filter_tau_label", "must lie in (0, 1]"));
        }
        positive("warmup_lr", self.warmup_lr)?;
        positive("mixup_alpha", self.mixup_alpha)?;
        if !(self.tau_fixed > 0.0 && self.tau_fixed <= 1.0) {
            return Err(Error::config("tau_fixed", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        positive("decay_factor", self.decay_factor)?;
        nonzero("splitnet_hidden", self.splitnet_hidden)?;
        nonzero("splitnet_blocks", self.splitnet_blocks)?;
        positive("splitnet_lr", self.splitnet_lr)?;
        if self.splitnet_batch_size < 2 {
            return Err(Error::config("splitnet_batch_size", "must be at least 2"));
        }
        if let Variant::FixedThreshold(t) = self.variant {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::config("variant", "fixed threshold must lie in [0, 1]"));
            }
        }
        self.loop_config().validate()
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        match self.noise {
            NoiseType::Symmetric => NoiseSpec::symmetric(self.noise_ratio),
            NoiseType::Asymmetric => NoiseSpec::asymmetric(self.noise_ratio, self.classes),
        }
    }

    pub fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig {
            hidden: self.hidden.clone(),
            batch_norm: self.batch_norm,
        }
    }

    fn schedule(&self, lr: f64, epochs: usize) -> SgdSchedule {
        SgdSchedule {
            lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            decay_factor: self.decay_factor,
            decay_epoch: (2 * epochs).div_ceil(3),
        }
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            net: self.classifier(),
            schedule: self.schedule(self.filter_lr, self.filter_epochs),
            epochs: self.filter_epochs,
            tau_label: self.filter_tau_label,
        }
    }

    pub fn warmup_config(&self) -> WarmupConfig {
        WarmupConfig {
            // no decay during warm-up
            schedule: SgdSchedule {
                decay_epoch: usize::MAX,
                ..self.schedule(self.warmup_lr, self.warmup_epochs)
            },
            epochs: self.warmup_epochs,
            mixup_alpha: self.mixup_alpha,
            tau_fixed: self.tau_fixed,
            augment: self.augment(),
        }
    }

    pub fn augment(&self) -> AugmentSpec {
        AugmentSpec {
            weak_sigma: self.weak_sigma,
            strong_sigma: self.strong_sigma,
            mask_fraction: self.mask_fraction,
        }
    }

    pub fn main_schedule(&self) -> SgdSchedule {
        let mut s = self.schedule(self.lr, self.epochs);
        if let Some(e) = self.decay_epoch {
            s.decay_epoch = e;
        }
        s
    }

    pub fn splitnet_config(&self) -> SplitNetConfig {
        SplitNetConfig {
            hidden: self.splitnet_hidden,
            blocks: self.splitnet_blocks,
            batch_norm: self.splitnet_batch_norm,
            use_delta: self.splitnet_use_delta,
            lr: self.splitnet_lr,
            weight_decay: self.splitnet_weight_decay,
            epochs: self.splitnet_epochs,
            batch_size: self.splitnet_batch_size,
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            tau_label: self.tau_label,
            pivot: self.pivot,
            epochs: self.epochs,
            schedule: self.main_schedule(),
            splitnet: self.splitnet_config(),
            augment: self.augment(),
            gmm: GmmConfig::default(),
            seed: self.seed,
        }
    }

    /// Output directory: the config's own, else `$SPLITNET_OUT/<variant>_seed<seed>`,
    /// else `runs/<variant>_seed<seed>`.
    pub fn resolve_out(&self) -> PathBuf {
        if let Some(out) = &self.out {
            return out.clone();
        }
        let root = std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(format!(
            "{}_seed{}",
            self.variant.to_string().replace(':', "_"),
            self.seed
        ))
    }
}

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "SPLITNET_OUT";
