//! Seed derivation.
//!
//! Every pipeline stage draws from its own ChaCha stream keyed by the master
//! seed, so changing how much randomness one stage consumes never perturbs
//! another stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

/// Stream identifiers for the pipeline stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    TrainData = 1,
    TestData = 2,
    Noise = 3,
    Folds = 4,
    MainInit = 5,
    Warmup = 6,
    MainLoop = 7,
    SplitNetInit = 8,
    SplitNetTrain = 9,
    Gmm = 10,
    /// Filter network `k` uses stream `FilterBase + k`.
    FilterBase = 1 << 16,
}

/// Rng for `stage` under `master`.
pub fn stage_rng(master: u64, stage: Stage) -> StageRng {
    stream_rng(master, stage as u64)
}

/// Rng for an arbitrary stream index under `master`.
pub fn stream_rng(master: u64, stream: u64) -> StageRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// A 64-bit seed drawn from the stage stream, for APIs that take a plain seed.
pub fn stage_seed(master: u64, stage: Stage) -> u64 {
    use rand::RngCore;
    stage_rng(master, stage).next_u64()
}
