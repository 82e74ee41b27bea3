// SPDX-License-Identifier: Apache-2.0

//! Per-path random streams.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, path index)`, so a
//! path's draws never depend on how paths are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

pub type PathRng = ChaCha8Rng;

pub fn path_rng(seed: u64, path: usize) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

#[inline]
pub fn normal(rng: &mut PathRng) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
pub fn exp1(rng: &mut PathRng) -> f64 {
    rng.sample(Exp1)
}

/// Uniform on `[0, 1)`.
#[inline]
pub fn uniform(rng: &mut PathRng) -> f64 {
    rng.random::<f64>()
}
