//! Seeded Gaussian increments of the driving standard Brownian motion.
//!
//! Every driver is a pure function of `(grid, seed)`. Past-window and future-window
//! increments come from two distinct ChaCha streams of the same key, so the future
//! window can be redrawn while the past stays bit-identical.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

const PAST_STREAM: u64 = 0;
const FUTURE_STREAM: u64 = 1;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replica `index` under `master`. Independent of how replicas are scheduled.
#[inline]
pub fn replica_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Seeds for replicas `start..start + len`.
pub fn replica_seeds(master: u64, start: usize, len: usize) -> Vec<u64> {
    (start..start + len).map(|i| replica_seed(master, i as u64)).collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn fill_scaled(rng: &mut ChaCha8Rng, widths: impl Iterator<Item = f64>, out: &mut [f64]) {
    for (x, w) in out.iter_mut().zip(widths) {
        let z: f64 = rng.sample(StandardNormal);
        *x = w.sqrt() * z;
    }
}

/// Writes the `n_past` past-window increments for `seed` into `out`.
pub fn fill_past(grid: &TimeGrid, seed: u64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), grid.n_past());
    let mut rng = stream(seed, PAST_STREAM);
    fill_scaled(&mut rng, grid.past_widths().iter().copied(), out);
}

/// Writes the `n_future` future-window increments for `seed` into `out`.
pub fn fill_future(grid: &TimeGrid, seed: u64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), grid.n_future());
    let mut rng = stream(seed, FUTURE_STREAM);
    let dt = grid.delta_future();
    fill_scaled(&mut rng, std::iter::repeat(dt), out);
}

/// Past increments for several seeds, one column per seed.
pub fn past_batch(grid: &TimeGrid, seeds: &[u64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(grid.n_past(), seeds.len());
    for (j, &seed) in seeds.iter().enumerate() {
        fill_past(grid, seed, m.column_mut(j).as_mut_slice());
    }
    m
}

/// Future increments for several seeds, one column per seed.
pub fn future_batch(grid: &TimeGrid, seeds: &[u64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(grid.n_future(), seeds.len());
    for (j, &seed) in seeds.iter().enumerate() {
        fill_future(grid, seed, m.column_mut(j).as_mut_slice());
    }
    m
}

/// One realization of `dB` on every cell of a [`TimeGrid`]: `n_past` past cells
/// followed by `n_future` future cells, each `N(0, width)`.
#[derive(Debug, Clone)]
pub struct BrownianDriver {
    grid: TimeGrid,
    seed: u64,
    future_seed: u64,
    increments: Vec<f64>,
}

impl BrownianDriver {
    pub fn sample(grid: &TimeGrid, seed: u64) -> Self {
        Self::sample_split(grid, seed, seed)
    }

    /// Past window from `seed`, future window from `future_seed`.
    pub fn sample_split(grid: &TimeGrid, seed: u64, future_seed: u64) -> Self {
        let mut increments = vec![0.0; grid.n_cells()];
        let (past, future) = increments.split_at_mut(grid.n_past());
        fill_past(grid, seed, past);
        fill_future(grid, future_seed, future);
        Self {
            grid: grid.clone(),
            seed,
            future_seed,
            increments,
        }
    }

    /// Keeps the past window and redraws the future window from `future_seed`.
    pub fn with_future_seed(&self, future_seed: u64) -> Self {
        let mut next = self.clone();
        fill_future(&self.grid, future_seed, &mut next.increments[self.grid.n_past()..]);
        next.future_seed = future_seed;
        next
    }

    /// Driver with explicitly supplied increments. Its seeds are reported as 0.
    pub fn from_increments(grid: &TimeGrid, past: &[f64], future: &[f64]) -> Result<Self> {
        if past.len() != grid.n_past() || future.len() != grid.n_future() {
            return Err(Error::GridMismatch(format!(
                "expected {} past and {} future increments, got {} and {}",
                grid.n_past(),
                grid.n_future(),
                past.len(),
                future.len()
            )));
        }
        let mut increments = Vec::with_capacity(grid.n_cells());
        increments.extend_from_slice(past);
        increments.extend_from_slice(future);
        Ok(Self {
            grid: grid.clone(),
            seed: 0,
            future_seed: 0,
            increments,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn future_seed(&self) -> u64 {
        self.future_seed
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn past(&self) -> &[f64] {
        &self.increments[..self.grid.n_past()]
    }

    pub fn future(&self) -> &[f64] {
        &self.increments[self.grid.n_past()..]
    }
}

pub fn sample_driver(grid: &TimeGrid, seed: u64) -> BrownianDriver {
    BrownianDriver::sample(grid, seed)
}
