//! Exact-distribution fBm sampling by Cholesky factorization of the covariance
//! matrix. Used as an independent oracle for the kernel-based simulation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};
use crate::hurst::HurstParams;

/// `Cov(B_H(t1), B_H(t2)) = (|t1|^{2H} + |t2|^{2H} − |t1 − t2|^{2H}) / 2`.
pub fn fbm_covariance(t1: f64, t2: f64, params: &HurstParams) -> f64 {
    let two_h = 2.0 * params.h();
    0.5 * (t1.abs().powf(two_h) + t2.abs().powf(two_h) - (t1 - t2).abs().powf(two_h))
}

/// Relative diagonal jitter applied when the plain factorization fails.
pub const JITTER: f64 = 1e-12;

/// Reusable sampler: the covariance factor is computed once.
#[derive(Debug, Clone)]
pub struct ExactFbmSampler {
    times: Vec<f64>,
    lower: DMatrix<f64>,
}

impl ExactFbmSampler {
    pub fn new(times: &[f64], params: &HurstParams) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return domain("sampling times must be finite and non-negative");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("sampling times must be strictly increasing");
        }
        let n = times.len();
        let cov = DMatrix::from_fn(n, n, |i, j| fbm_covariance(times[i], times[j], params));
        let lower = match cov.clone().cholesky() {
            Some(c) => c.l(),
            None => {
                let max_diag = cov.diagonal().max();
                let mut jittered = cov;
                for i in 0..n {
                    jittered[(i, i)] += JITTER * max_diag;
                }
                jittered
                    .cholesky()
                    .ok_or_else(|| {
                        Error::Factorization(
                            "fBm covariance is not positive semidefinite; times too close".into(),
                        )
                    })?
                    .l()
            }
        };
        Ok(Self {
            times: times.to_vec(),
            lower,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DVector::from_fn(self.times.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.lower * z).as_slice().to_vec()
    }
}

/// One sample of `(B_H(t_1), ..., B_H(t_n))` with exactly the fBm covariance.
pub fn simulate_fbm_exact(times: &[f64], params: &HurstParams, seed: u64) -> Result<Vec<f64>> {
    Ok(ExactFbmSampler::new(times, params)?.sample(seed))
}
