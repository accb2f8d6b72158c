//! Reproducible random streams.
//!
//! A 64-bit master seed plus a (trial, purpose) pair selects an independent
//! ChaCha stream. Trials can therefore run on any number of workers in any
//! order and still produce bit-identical results, and the purposes keep
//! Bob's basis choices structurally uncorrelated with measurement sampling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is consumed for within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Bob's quantum-random choice of signal ("blue"/"yellow").
    BobSetting = 0,
    /// Born sampling of Alice's measurement outcome.
    AliceOutcome = 1,
    /// Born sampling of Bob's tomography measurement.
    BobOutcome = 2,
    /// The hidden-variable draw of a local-hidden-state adversary.
    LhsLambda = 3,
    /// Branch sampling in the interferometer runner.
    IfmBranch = 4,
}

/// Independent generator for one (trial, purpose) pair under a master seed.
pub fn trial_rng(master_seed: u64, trial: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    debug_assert!(trial < 1 << 56, "trial index exceeds stream space");
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((purpose as u64) << 56) | trial);
    rng
}
