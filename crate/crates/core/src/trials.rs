//! Seeded, order-deterministic parallel trials.
//!
//! Every trial owns its generator: `ChaCha8Rng::seed_from_u64(seed ^ trial)`
//! on a caller-chosen stream. Results are collected in trial-index order, so
//! a batch is bit-identical whatever the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SimRng = ChaCha8Rng;

/// Stream identifiers keep independent batches of one experiment apart.
pub mod stream {
    pub const FORWARD: u64 = 1;
    pub const DUAL: u64 = 2;
    pub const STATIONARY: u64 = 3;
    pub const DIFFUSION: u64 = 4;
    pub const NAGENT: u64 = 5;
    pub const REFERENCE: u64 = 6;
    pub const SAMPLER: u64 = 7;
}

pub fn trial_rng(seed: u64, stream: u64, trial: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ trial);
    rng.set_stream(stream);
    rng
}

/// Runs `trials` independent trials in parallel and returns their results in
/// index order.
pub fn run_trials<T, F>(seed: u64, stream: u64, trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut SimRng) -> T + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, stream, i);
            f(i, &mut rng)
        })
        .collect()
}

/// Fallible variant of [`run_trials`]; the first error in index order wins.
pub fn try_run_trials<T, E, F>(seed: u64, stream: u64, trials: u64, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64, &mut SimRng) -> Result<T, E> + Sync,
{
    run_trials(seed, stream, trials, f).into_iter().collect()
}

/// Exponential variate with the given rate, by inversion.
#[inline]
pub fn exp_variate<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}
