//! Learning with noisy labels through a learnable clean/noisy splitter.
//!
//! The pipeline has three stages:
//!
//! 1. [`warmup`]: K-fold cross-filtering picks a presumed-clean subset. The
//!    main network is then warmed up semi-supervised on that subset.
//! 2. [`training`]: each epoch a two-component GMM models the per-sample
//!    losses ([`gmm`]). [`hedging`] keeps only confidently split samples,
//!    and a small [`splitnet`] is trained on them to score every sample.
//! 3. Per mini-batch, the main network gets cross-entropy on the SplitNet
//!    clean set and confidence-gated consistency on everything. The gate is
//!    a per-sample threshold driven by SplitNet's confidence.
//!
//! Everything runs on a desk-scale synthetic benchmark ([`dataset`]) with a
//! hand-written f64 network engine ([`nn`]). [`harness`] wires the stages
//! into reproducible experiments and ablations.
//!
//! True labels live inside [`dataset::GroundTruth`]. Training code only ever
//! sees a [`dataset::TrainView`]; [`metrics::Evaluator`] is the single
//! reader of the truth and only returns aggregates.

pub mod dataset;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod hedging;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod splitnet;
pub mod training;
pub mod warmup;

pub use error::{Error, Result};
