//! Counter-style random streams.
//!
//! Every per-cell operation draws from its own generator seeded by
//! `(global seed, step, cell, phase)`, so results do not depend on the order in
//! which cells are visited or on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Which part of a time step a stream belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Init = 1,
    Collision = 2,
    DeltaM = 3,
    Spawn = 4,
    Resample = 5,
    CoarseResample = 6,
    Enforce = 7,
    Diagnostics = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, step: u64, cell: u64, phase: Phase) -> StreamRng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ step);
    h = splitmix64(h ^ cell.wrapping_mul(0x2545_F491_4F6C_DD1D));
    h = splitmix64(h ^ phase as u64);
    ChaCha8Rng::seed_from_u64(h)
}

/// Unbiased integer rounding: `floor(x)` plus a Bernoulli draw on the fraction.
pub fn stochastic_round<R: Rng + ?Sized>(x: f64, rng: &mut R) -> usize {
    if !(x > 0.0) {
        return 0;
    }
    let base = x.floor();
    let frac = x - base;
    let extra = if frac > 0.0 && rng.random::<f64>() < frac { 1 } else { 0 };
    base as usize + extra
}

/// Uniform random direction on the unit sphere.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let cz = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    let sz = (1.0 - cz * cz).max(0.0).sqrt();
    [sz * phi.cos(), sz * phi.sin(), cz]
}
