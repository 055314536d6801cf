//! Monte Carlo plumbing: deterministic parallel replication, pairwise reductions and
//! batch-means standard errors.

use std::ops::Range;

use rayon::prelude::*;

use crate::driver::replica_seeds;
use crate::error::{domain, Result};

/// Replicas handled per work item. Fixed so that results do not depend on the
/// thread count.
pub const BATCH: usize = 256;

/// Upper bound on the number of batch-means blocks.
pub const MAX_BLOCKS: usize = 50;

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    covariance(xs, xs)
}

/// Unbiased sample covariance.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    pairwise_sum(&prods) / (n - 1) as f64
}

/// Per-replica outputs of a Monte Carlo run, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    width: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn new(width: usize, data: Vec<f64>) -> Self {
        assert!(width > 0 && data.len().is_multiple_of(width));
        Self { width, data }
    }

    pub fn replicas(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.data.iter().skip(k).step_by(self.width).copied().collect()
    }
}

/// Runs `replicas` replicas under `master`. `f` receives the seeds of one batch and
/// returns `width` outputs per seed, row-major. Output order follows replica index
/// regardless of scheduling.
pub fn replicate<F>(replicas: usize, master: u64, width: usize, f: F) -> Samples
where
    F: Fn(&[u64]) -> Vec<f64> + Sync,
{
    let batches = replicas.div_ceil(BATCH);
    let chunks: Vec<Vec<f64>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let start = b * BATCH;
            let len = BATCH.min(replicas - start);
            let out = f(&replica_seeds(master, start, len));
            assert_eq!(out.len(), len * width, "replica closure returned wrong width");
            out
        })
        .collect();
    Samples::new(width, chunks.concat())
}

/// Point estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub blocks: usize,
}

pub fn default_blocks(n: usize) -> usize {
    MAX_BLOCKS.min(n / 2)
}

/// Evaluates `estimator` on the full index range and on `blocks` contiguous blocks;
/// the standard error is the spread of the block values over `sqrt(blocks)`.
pub fn batch_means(n: usize, blocks: usize, estimator: impl Fn(Range<usize>) -> f64) -> Result<Estimate> {
    if blocks < 2 || n < 2 * blocks {
        return domain(format!("batch means needs at least 2 blocks of 2 replicas (n = {n})"));
    }
    let value = estimator(0..n);
    let block_values: Vec<f64> = (0..blocks)
        .map(|b| estimator(b * n / blocks..(b + 1) * n / blocks))
        .collect();
    let std_error = (variance(&block_values) / blocks as f64).sqrt();
    Ok(Estimate {
        value,
        std_error,
        blocks,
    })
}

pub fn mean_estimate(xs: &[f64]) -> Result<Estimate> {
    batch_means(xs.len(), default_blocks(xs.len()), |r| mean(&xs[r]))
}

pub fn variance_estimate(xs: &[f64]) -> Result<Estimate> {
    batch_means(xs.len(), default_blocks(xs.len()), |r| variance(&xs[r]))
}

pub fn covariance_estimate(xs: &[f64], ys: &[f64]) -> Result<Estimate> {
    batch_means(xs.len(), default_blocks(xs.len()), |r| {
        covariance(&xs[r.clone()], &ys[r])
    })
}
