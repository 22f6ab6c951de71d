//! Seeded random streams.
//!
//! One run seed fans out into independent ChaCha streams, one per source of
//! randomness, so that changing how often one source is sampled never shifts
//! the draws of another. Two runs with the same seed therefore share stop
//! events and restart states even when their agents differ.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matrix::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Stop = 1,
    Exploration = 2,
    Restart = 3,
    ProcessNoise = 4,
    ObservationNoise = 5,
    Belief = 6,
    InitialAction = 7,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Stream indexed by an arbitrary counter, used for per-episode Monte Carlo.
pub fn indexed_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vector {
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Uniform direction on the unit sphere in `dim` dimensions, scaled by `radius`.
pub fn on_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vector {
    loop {
        let v = standard_normal(rng, dim);
        let norm = v.norm();
        if norm > 1e-300 {
            return v * (radius / norm);
        }
    }
}
