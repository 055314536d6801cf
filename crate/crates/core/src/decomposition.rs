//! Simulation and closed-form moments of the split
//! `B_H(t) − B_H(s) = W_H(t) + R_H(t)`.
//!
//! With `α = H − 1/2`:
//!
//! ```text
//! W_H(t)  = c_H ∫_s^t (t − q)^α dB(q)
//! R_H(t)  = c_H ∫_{−∞}^s f(t, q) dB(q),   f(t, q) = (t − q)^α − (s − q)^α
//! DR_H(t) = c_H ∫_{−∞}^s α (t − q)^{α−1} dB(q)
//! ```
//!
//! The lower limit `−∞` is truncated at `s − L`. On each driver cell the kernel is
//! replaced by its exact cell average (closed-form antiderivatives), so the
//! simulated variance misses only the within-cell kernel variation.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::driver::{future_batch, past_batch, BrownianDriver};
use crate::error::{domain, Error, Result};
use crate::grid::TimeGrid;
use crate::hurst::HurstParams;
use crate::quadrature::tanh_sinh;
use crate::stats::{self, Estimate};

/// Auto-solved depths never exceed this multiple of `T − s`.
pub const DEPTH_CAP_FACTOR: f64 = 1e10;

// ---------------------------------------------------------------------------
// Kernels

/// `f(t, q) = (t − q)^α − (s − q)^α` for `q ≤ s < t`.
pub fn kernel_f(t: f64, q: f64, s: f64, params: &HurstParams) -> Result<f64> {
    if q > s {
        return domain(format!("kernel f needs q <= s (q = {q}, s = {s})"));
    }
    if t <= s {
        return domain(format!("kernel f needs t > s (t = {t}, s = {s})"));
    }
    Ok(power_gap(s - q, t - s, params.alpha()))
}

/// `∂f/∂t = α (t − q)^{α−1}` for `q < t`.
pub fn kernel_f_prime(t: f64, q: f64, params: &HurstParams) -> Result<f64> {
    if q >= t {
        return domain(format!("kernel f' needs q < t (q = {q}, t = {t})"));
    }
    let a = params.alpha();
    Ok(a * (t - q).powf(a - 1.0))
}

/// `(x + gap)^p − x^p` for `x ≥ 0`, `gap ≥ 0`, without cancellation for large `x`.
fn power_gap(x: f64, gap: f64, p: f64) -> f64 {
    if x == 0.0 {
        gap.powf(p)
    } else {
        x.powf(p) * (p * (gap / x).ln_1p()).exp_m1()
    }
}

/// `((x + δ)^a − x^a)/δ − a x^{a−1}` without cancellation for `|δ| ≪ x`.
fn quotient_excess(x: f64, delta: f64, a: f64) -> f64 {
    let z = delta / x;
    let scale = x.powf(a - 1.0);
    if z.abs() >= 0.25 {
        return scale * ((a * z.ln_1p()).exp_m1() / z - a);
    }
    // Σ_{k≥1} binom(a, k+1) z^k
    let mut coeff = a * (a - 1.0) / 2.0;
    let mut zk = z;
    let mut sum = 0.0;
    for k in 1..80 {
        let term = coeff * zk;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
        let kf = k as f64;
        coeff *= (a - kf - 1.0) / (kf + 2.0);
        zk *= z;
    }
    scale * sum
}

/// Average of `(u1 + v)^p` over `v ∈ [0, width]`, for `u1 ≥ 0`, `p > −1`.
fn mean_power(u1: f64, width: f64, p: f64) -> f64 {
    power_gap(u1, width, p + 1.0) / ((p + 1.0) * width)
}

/// Cell average of `f(t, ·)` over `[a, b]` with `b ≤ s < t`.
fn mean_f(t: f64, s: f64, a: f64, b: f64, alpha: f64) -> f64 {
    let beta = alpha + 1.0;
    let tau = t - s;
    // D(x) = (t − x)^β − (s − x)^β
    let d = |x: f64| power_gap(s - x, tau, beta);
    (d(a) - d(b)) / (beta * (b - a))
}

// ---------------------------------------------------------------------------
// Kernel rows: the linear functionals mapping driver increments to path values

/// Toeplitz weights of `W_H` on the future window: `W_H(t_j) = Σ_{k<j} w[j−1−k] ΔB_k`.
pub fn w_weights(grid: &TimeGrid, params: &HurstParams) -> Vec<f64> {
    let dt = grid.delta_future();
    let c = params.c_h();
    (0..grid.n_future())
        .map(|m| c * mean_power(m as f64 * dt, dt, params.alpha()))
        .collect()
}

/// Weights of `R_H(t)` on the past cells. All zero at `t = s`.
pub fn r_row(grid: &TimeGrid, params: &HurstParams, t: f64) -> Result<Vec<f64>> {
    let s = grid.s();
    if t < s {
        return domain(format!("R_H is defined for t >= s (t = {t})"));
    }
    if t == s {
        return Ok(vec![0.0; grid.n_past()]);
    }
    let c = params.c_h();
    let nodes = grid.past_nodes();
    Ok(nodes
        .windows(2)
        .map(|w| c * mean_f(t, s, w[0], w[1], params.alpha()))
        .collect())
}

/// Weights of `DR_H(t)` on the past cells. All zero at `t = s` by convention.
pub fn dr_row(grid: &TimeGrid, params: &HurstParams, t: f64) -> Result<Vec<f64>> {
    let s = grid.s();
    if t < s {
        return domain(format!("DR_H is defined for t >= s (t = {t})"));
    }
    if t == s {
        return Ok(vec![0.0; grid.n_past()]);
    }
    let a = params.alpha();
    let c = params.c_h();
    let nodes = grid.past_nodes();
    Ok(nodes
        .windows(2)
        .map(|w| c * a * mean_power(t - w[1], w[1] - w[0], a - 1.0))
        .collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Variance of the discretized functional `Σ row_k ΔB_k` on the past cells.
pub fn past_row_variance(grid: &TimeGrid, row: &[f64]) -> f64 {
    row.iter().zip(grid.past_widths()).map(|(k, w)| k * k * w).sum()
}

/// `(R_H(t), DR_H(t))` for one driver at any `t ≥ s` (not necessarily a node).
pub fn evaluate_past(driver: &BrownianDriver, params: &HurstParams, t: f64) -> Result<(f64, f64)> {
    let grid = driver.grid();
    let r = dot(&r_row(grid, params, t)?, driver.past());
    let dr = dot(&dr_row(grid, params, t)?, driver.past());
    Ok((r, dr))
}

// ---------------------------------------------------------------------------
// Paths

/// Sampled `W_H`, `R_H`, `DR_H` and `W_H + R_H` at the future nodes `t_1, ..., t_n`
/// (all strictly after `s`; every value is 0 at `t = s`).
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionPath {
    #[serde(skip)]
    grid: TimeGrid,
    #[serde(skip)]
    params: HurstParams,
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    pub r: Vec<f64>,
    pub dr: Vec<f64>,
    pub increment: Vec<f64>,
}

impl DecompositionPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn params(&self) -> &HurstParams {
        &self.params
    }

    /// Cell averages of `DR_H` over the future cells, `(R_H(t_i) − R_H(t_{i−1})) / Δ`.
    pub fn dr_cell_means(&self) -> Vec<f64> {
        let dt = self.grid.delta_future();
        let mut prev = 0.0;
        self.r
            .iter()
            .map(|&r| {
                let v = (r - prev) / dt;
                prev = r;
                v
            })
            .collect()
    }

    /// Writes `time,w,r,dr,increment`, one row per future node, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: &mut W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "time,w,r,dr,increment")?;
        }
        for i in 0..self.times.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i], self.w[i], self.r[i], self.dr[i], self.increment[i]
            )?;
        }
        Ok(())
    }
}

/// Precomputed kernel rows for every future node; reuse across replicas.
#[derive(Debug, Clone)]
pub struct PathSimulator {
    grid: TimeGrid,
    params: HurstParams,
    w_matrix: DMatrix<f64>,
    r_matrix: DMatrix<f64>,
    dr_matrix: DMatrix<f64>,
}

impl PathSimulator {
    pub fn new(grid: &TimeGrid, params: &HurstParams) -> Result<Self> {
        let n = grid.n_future();
        let times = &grid.future_nodes()[1..];
        let weights = w_weights(grid, params);
        let w_matrix = DMatrix::from_fn(n, n, |j, k| if k <= j { weights[j - k] } else { 0.0 });
        let mut r_matrix = DMatrix::zeros(n, grid.n_past());
        let mut dr_matrix = DMatrix::zeros(n, grid.n_past());
        for (i, &t) in times.iter().enumerate() {
            for (k, v) in r_row(grid, params, t)?.into_iter().enumerate() {
                r_matrix[(i, k)] = v;
            }
            for (k, v) in dr_row(grid, params, t)?.into_iter().enumerate() {
                dr_matrix[(i, k)] = v;
            }
        }
        Ok(Self {
            grid: grid.clone(),
            params: *params,
            w_matrix,
            r_matrix,
            dr_matrix,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn params(&self) -> &HurstParams {
        &self.params
    }

    /// Row `i` maps future increments to `W_H(t_{i+1})`.
    pub fn w_matrix(&self) -> &DMatrix<f64> {
        &self.w_matrix
    }

    /// Row `i` maps past increments to `R_H(t_{i+1})`.
    pub fn r_matrix(&self) -> &DMatrix<f64> {
        &self.r_matrix
    }

    /// Row `i` maps past increments to `DR_H(t_{i+1})`.
    pub fn dr_matrix(&self) -> &DMatrix<f64> {
        &self.dr_matrix
    }

    pub fn simulate(&self, driver: &BrownianDriver) -> Result<DecompositionPath> {
        if driver.grid() != &self.grid {
            return Err(Error::GridMismatch("driver grid differs from simulator grid".into()));
        }
        let n = self.grid.n_future();
        let past = nalgebra::DVectorView::from_slice(driver.past(), self.grid.n_past());
        let future = nalgebra::DVectorView::from_slice(driver.future(), n);
        let w = &self.w_matrix * future;
        let r = &self.r_matrix * past;
        let dr = &self.dr_matrix * past;
        let w = w.as_slice().to_vec();
        let r = r.as_slice().to_vec();
        let increment = w.iter().zip(&r).map(|(a, b)| a + b).collect();
        Ok(DecompositionPath {
            grid: self.grid.clone(),
            params: self.params,
            times: self.grid.future_nodes()[1..].to_vec(),
            w,
            r,
            dr: dr.as_slice().to_vec(),
            increment,
        })
    }

    /// Paths for a batch of seeds: `(W, R, DR)` matrices, one column per seed.
    pub fn simulate_batch(&self, seeds: &[u64]) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let past = past_batch(&self.grid, seeds);
        let future = future_batch(&self.grid, seeds);
        (&self.w_matrix * future, &self.r_matrix * &past, &self.dr_matrix * &past)
    }
}

/// Builds the kernels and simulates a single path.
pub fn simulate_decomposition(driver: &BrownianDriver, params: &HurstParams) -> Result<DecompositionPath> {
    PathSimulator::new(driver.grid(), params)?.simulate(driver)
}

// ---------------------------------------------------------------------------
// Closed-form moments

fn require_after(t: f64, s: f64, what: &str) -> Result<f64> {
    if !(t > s) {
        return domain(format!("{what} requires t > s (t = {t}, s = {s})"));
    }
    Ok(t - s)
}

/// `Var W_H(t) = c_H² (t − s)^{2H} / (2H)`.
pub fn var_wh(t: f64, s: f64, params: &HurstParams) -> Result<f64> {
    let tau = require_after(t, s, "var_WH")?;
    let h = params.h();
    Ok(params.c_h().powi(2) * tau.powf(2.0 * h) / (2.0 * h))
}

/// `E DR_H(t)² = c_H² (H − 1/2)/2 · (t − s)^{2H−2}`.
pub fn var_drh(t: f64, s: f64, params: &HurstParams) -> Result<f64> {
    let tau = require_after(t, s, "var_DRH")?;
    let h = params.h();
    Ok(params.c_h().powi(2) * params.alpha() / 2.0 * tau.powf(2.0 * h - 2.0))
}

/// `E ∫_s^T DR_H(t)² dt = c_H²/4 · (T − s)^{2H−1}`.
pub fn integrated_var_drh(s: f64, horizon: f64, params: &HurstParams) -> Result<f64> {
    let tau = require_after(horizon, s, "integrated_var_DRH")?;
    Ok(params.c_h().powi(2) / 4.0 * tau.powf(2.0 * params.h() - 1.0))
}

/// `Var(B_H(t) − B_H(s)) = (t − s)^{2H}`.
pub fn var_increment(t: f64, s: f64, params: &HurstParams) -> Result<f64> {
    let tau = require_after(t, s, "increment variance")?;
    Ok(tau.powf(2.0 * params.h()))
}

/// Variance of `DR_H(t)` carried by `(−∞, s − L)` and discarded by truncation:
/// `c_H² α² / (2 − 2H) · (t − s + L)^{2H−2}`.
pub fn drh_tail_variance(t: f64, s: f64, depth: f64, params: &HurstParams) -> Result<f64> {
    let tau = require_after(t, s, "DR_H tail")?;
    let (h, a) = (params.h(), params.alpha());
    Ok(params.c_h().powi(2) * a * a / (2.0 - 2.0 * h) * (tau + depth).powf(2.0 * h - 2.0))
}

/// Tail of `E ∫_s^T DR_H(t)² dt` discarded by truncation.
pub fn integrated_drh_tail(s: f64, horizon: f64, depth: f64, params: &HurstParams) -> Result<f64> {
    let tau = require_after(horizon, s, "integrated DR_H tail")?;
    let (h, a) = (params.h(), params.alpha());
    let p = 2.0 * h - 1.0;
    let bracket = power_gap(depth, tau, p);
    Ok(params.c_h().powi(2) * a * a / ((2.0 - 2.0 * h) * p) * bracket)
}

/// Variance of `R_H(t)` carried by `(−∞, s − L)`, by quadrature of
/// `c_H² ∫_L^∞ ((t − s + u)^α − u^α)² du`.
pub fn r_tail_variance(t: f64, s: f64, depth: f64, params: &HurstParams) -> Result<f64> {
    let tau = require_after(t, s, "R_H tail")?;
    let a = params.alpha();
    // u = L / y maps [L, ∞) to (0, 1]
    let integrand = |y: f64| {
        let u = depth / y;
        if !u.is_finite() {
            return 0.0;
        }
        let q = power_gap(u, tau, a) / y;
        q * q * depth
    };
    Ok(params.c_h().powi(2) * tanh_sinh(integrand, 0.0, 1.0, 1e-10)?)
}

/// Outcome of the automatic truncation-depth solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthResolution {
    pub depth: f64,
    /// Discarded `DR_H(T)` variance relative to `E DR_H(T)²`.
    pub relative_tail: f64,
    pub capped: bool,
}

/// `drh_tail_variance(T) / var_drh(T) = α/(1 − H) · ((T − s + L)/(T − s))^{2H−2}`.
pub fn relative_drh_tail(s: f64, horizon: f64, depth: f64, params: &HurstParams) -> Result<f64> {
    let tau = require_after(horizon, s, "relative tail")?;
    let h = params.h();
    Ok(params.alpha() / (1.0 - h) * (1.0 + depth / tau).powf(2.0 * h - 2.0))
}

/// Smallest `L` whose relative `DR_H(T)` tail is at most `rel_tol`, capped at
/// [`DEPTH_CAP_FACTOR`]`·(T − s)` with a warning.
pub fn resolve_depth(s: f64, horizon: f64, params: &HurstParams, rel_tol: f64) -> Result<DepthResolution> {
    let tau = require_after(horizon, s, "depth resolution")?;
    if !(rel_tol > 0.0) {
        return domain("tail tolerance must be positive");
    }
    let h = params.h();
    let base = params.alpha() / ((1.0 - h) * rel_tol);
    let needed = if base <= 1.0 {
        tau
    } else {
        (tau * (base.powf(1.0 / (2.0 - 2.0 * h)) - 1.0)).max(tau)
    };
    let cap = DEPTH_CAP_FACTOR * tau;
    let (depth, capped) = if needed.is_finite() && needed <= cap {
        (needed, false)
    } else {
        (cap, true)
    };
    let relative_tail = relative_drh_tail(s, horizon, depth, params)?;
    if capped {
        log::warn!(
            "truncation depth capped at {depth:.3e}; relative DR_H tail {relative_tail:.3e} exceeds {rel_tol:.1e}"
        );
    }
    Ok(DepthResolution {
        depth,
        relative_tail,
        capped,
    })
}

/// Product-integration weights for `∫_s^T g(t) dt ≈ Σ_i ω_i g(m_i)` at the future
/// cell midpoints `m_i`, exact whenever `g ∝ (t − s)^{2H−2}` (the profile of
/// `E DR_H(t)²`).
pub fn drift_energy_weights(grid: &TimeGrid, params: &HurstParams) -> Vec<f64> {
    let s = grid.s();
    let p = 2.0 * params.h() - 1.0;
    grid.future_nodes()
        .windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]) - s;
            ((w[1] - s).powf(p) - (w[0] - s).powf(p)) / (p * m.powf(p - 1.0))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Mean-square derivative check

/// Monte Carlo estimate of `E |(R_H(t + δ) − R_H(t))/δ − DR_H(t)|`.
///
/// Replica `i` uses the driver with seed `replica_seed(driver.seed(), i)` on
/// `driver.grid()`; both `R_H(t + δ)` and `R_H(t)` come from that same realization.
pub fn diff_quotient_error(
    driver: &BrownianDriver,
    params: &HurstParams,
    t: f64,
    delta: f64,
    replicas: usize,
) -> Result<Estimate> {
    let grid = driver.grid();
    let tau = require_after(t, grid.s(), "difference quotient")?;
    if !(delta != 0.0 && delta.abs() < tau / 2.0) {
        return domain(format!("delta must satisfy 0 < |delta| < (t - s)/2, got {delta}"));
    }
    if replicas < 1 {
        return domain("replicas must be at least 1");
    }
    let r_next = r_row(grid, params, t + delta)?;
    let r_here = r_row(grid, params, t)?;
    let dr_here = dr_row(grid, params, t)?;
    let samples = stats::replicate(replicas, driver.seed(), 1, |seeds| {
        let past = past_batch(grid, seeds);
        seeds
            .iter()
            .enumerate()
            .map(|(j, _)| {
                let col = past.column(j);
                let z = col.as_slice();
                ((dot(&r_next, z) - dot(&r_here, z)) / delta - dot(&dr_here, z)).abs()
            })
            .collect()
    });
    let errs = samples.column(0);
    if replicas < 4 {
        return Ok(Estimate {
            value: stats::mean(&errs),
            std_error: f64::NAN,
            blocks: 0,
        });
    }
    stats::mean_estimate(&errs)
}

/// Untruncated, undiscretized `E |(R_H(t + δ) − R_H(t))/δ − DR_H(t)|`: the error is
/// Gaussian, so this is `sqrt(2/π)` times its standard deviation, obtained by
/// quadrature over the whole past.
pub fn diff_quotient_expected_abs(t: f64, s: f64, delta: f64, params: &HurstParams) -> Result<f64> {
    let tau = require_after(t, s, "difference quotient")?;
    let a = params.alpha();
    let integrand = |y: f64| {
        if y >= 1.0 {
            return 0.0;
        }
        let u = y / (1.0 - y);
        let x = tau + u;
        let e = quotient_excess(x, delta, a) / (1.0 - y);
        e * e
    };
    let var = params.c_h().powi(2) * tanh_sinh(integrand, 0.0, 1.0, 1e-10)?;
    Ok((2.0 * var / PI).sqrt())
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::driver::sample_driver;
    use crate::grid::{make_graded_grid, make_grid};

    fn p75() -> HurstParams {
        HurstParams::new(0.75).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn kernel_values() {
        let p = p75();
        assert!(rel(kernel_f(2.0, 0.0, 1.0, &p).unwrap(), 2f64.powf(0.25) - 1.0) < 1e-14);
        assert!(kernel_f(1.0 + 1e-12, 0.0, 1.0, &p).unwrap().abs() < 1e-12);
        assert!(rel(kernel_f(2.0, 1.0, 1.0, &p).unwrap(), 1.0) < 1e-15);
        assert!(rel(kernel_f(2.0, 1.0 - 1e-12, 1.0, &p).unwrap(), 1.0) < 1e-2);
        assert!(kernel_f(2.0, 1.5, 1.0, &p).is_err());
        assert!(kernel_f(1.0, 0.0, 1.0, &p).is_err());

        assert!(rel(kernel_f_prime(2.0, 1.0, &p).unwrap(), 0.25) < 1e-15);
        assert!(kernel_f_prime(1e12, 0.0, &p).unwrap() < 1e-9);
        let near_half = HurstParams::new(0.5001).unwrap();
        assert!(kernel_f_prime(2.0, 1.0, &near_half).unwrap() < 1e-3);
        assert!(kernel_f_prime(1.0, 1.0, &p).is_err());
    }

    #[test]
    fn kernel_f_is_stable_far_in_the_past() {
        let p = p75();
        // (1e8 + 1)^0.25 − (1e8)^0.25 ≈ 0.25·1e8^{-0.75}
        let v = kernel_f(1.0, -1e8, 0.0, &p).unwrap();
        let approx = 0.25 * 1e8f64.powf(-0.75) * (1.0 - 0.375 / 1e8);
        assert!(rel(v, approx) < 1e-12, "{v} vs {approx}");
    }

    #[test]
    fn cell_average_matches_midpoint_for_tiny_cells() {
        let a = 0.25;
        let avg = mean_power(0.7, 1e-7, a);
        assert!(rel(avg, (0.7 + 0.5e-7f64).powf(a)) < 1e-13);
        let avg_f = mean_f(1.0, 0.0, -0.3 - 1e-7, -0.3, a);
        assert!(rel(avg_f, 1.3f64.powf(a) - 0.3f64.powf(a)) < 1e-6);
    }

    #[test]
    fn closed_forms() {
        let p = p75();
        assert!(rel(var_wh(1.0, 0.0, &p).unwrap(), 0.762_759_763_501_813_2) < 1e-13);
        assert!(rel(var_wh(2.0, 0.0, &p).unwrap(), 0.762_759_763_501_813_2 * 2f64.powf(1.5)) < 1e-13);
        assert!(var_wh(1.0, 1.0, &p).is_err());
        assert!(rel(var_drh(1.0, 0.0, &p).unwrap(), 0.143_017_455_656_589_97) < 1e-13);
        assert!(rel(var_drh(4.0, 0.0, &p).unwrap(), 0.071_508_727_828_294_99) < 1e-13);
        assert!(var_drh(1e12, 0.0, &p).unwrap() < 1e-6);
        assert!(var_drh(0.0, 0.0, &p).is_err());
        assert!(rel(integrated_var_drh(0.0, 1.0, &p).unwrap(), 0.286_034_911_313_179_95) < 1e-13);
        assert!(integrated_var_drh(0.0, 1e-12, &p).unwrap() < 1e-5);
        assert!(integrated_var_drh(1.0, 1.0, &p).is_err());
    }

    #[test]
    fn integrated_variance_matches_quadrature_of_pointwise_variance() {
        for h in [0.55, 0.75, 0.9] {
            let p = HurstParams::new(h).unwrap();
            let quad = tanh_sinh(|t| var_drh(t, 0.0, &p).unwrap(), 0.0, 1.0, 1e-13).unwrap();
            let closed = integrated_var_drh(0.0, 1.0, &p).unwrap();
            assert!(rel(closed, quad) < 1e-9, "H = {h}: {closed} vs {quad}");
        }
    }

    #[test]
    fn tail_formulas_match_quadrature() {
        let p = p75();
        let (t, s, depth) = (1.0, 0.0, 7.0);
        let a = p.alpha();
        let quad = p.c_h().powi(2)
            * tanh_sinh(
                |y| a * a * depth * y.powf(-2.0 * a) * (y * (t - s) + depth).powf(2.0 * a - 2.0),
                0.0,
                1.0,
                1e-12,
            )
            .unwrap();
        assert!(rel(drh_tail_variance(t, s, depth, &p).unwrap(), quad) < 1e-9);

        let quad_int = tanh_sinh(|t| drh_tail_variance(t, 0.0, depth, &p).unwrap(), 0.0, 1.0, 1e-13).unwrap();
        assert!(rel(integrated_drh_tail(0.0, 1.0, depth, &p).unwrap(), quad_int) < 1e-10);

        // R tail dominated by α τ u^{α−1}: crude upper and lower brackets
        let rt = r_tail_variance(1.0, 0.0, 1e4, &p).unwrap();
        let lead = p.c_h().powi(2) * a * a * 1e4f64.powf(2.0 * a - 1.0) / (1.0 - 2.0 * a);
        assert!(rt < lead && rt > 0.99 * lead, "{rt} vs {lead}");
    }

    #[test]
    fn depth_resolution_hits_tolerance() {
        let p = p75();
        let d = resolve_depth(0.0, 1.0, &p, 1e-4).unwrap();
        assert!(!d.capped);
        assert!((d.relative_tail - 1e-4).abs() < 1e-10);
        assert!(rel(d.depth, 1e8 - 1.0) < 1e-6);
        let p95 = HurstParams::new(0.95).unwrap();
        let d = resolve_depth(0.0, 1.0, &p95, 1e-4).unwrap();
        assert!(d.capped);
        assert_eq!(d.depth, DEPTH_CAP_FACTOR);
        assert!(d.relative_tail > 1e-4);
        let p55 = HurstParams::new(0.55).unwrap();
        let d = resolve_depth(0.0, 2.0, &p55, 1e-4).unwrap();
        assert!(d.relative_tail <= 1e-4 * (1.0 + 1e-9));
    }

    #[test]
    fn path_values_vanish_at_s_and_rows_are_zero() {
        let g = make_grid(0.0, 1.0, 5.0, 50, 10).unwrap();
        let p = p75();
        assert!(r_row(&g, &p, 0.0).unwrap().iter().all(|&x| x == 0.0));
        assert!(dr_row(&g, &p, 0.0).unwrap().iter().all(|&x| x == 0.0));
        assert!(r_row(&g, &p, -0.1).is_err());
        let d = sample_driver(&g, 1);
        assert_eq!(evaluate_past(&d, &p, 0.0).unwrap(), (0.0, 0.0));
        let path = simulate_decomposition(&d, &p).unwrap();
        assert_eq!(path.times.len(), 10);
        assert_eq!(path.times[0], 0.1);
        for i in 0..10 {
            assert_eq!(path.increment[i], path.w[i] + path.r[i]);
        }
    }

    #[test]
    fn measurability_split() {
        let g = make_graded_grid(0.0, 1.0, 1000.0, 200, 20).unwrap();
        let p = p75();
        let sim = PathSimulator::new(&g, &p).unwrap();
        let base = sample_driver(&g, 5);
        let a = sim.simulate(&base).unwrap();

        let refreshed = base.with_future_seed(77);
        let b = sim.simulate(&refreshed).unwrap();
        assert_eq!(a.r, b.r);
        assert_eq!(a.dr, b.dr);
        assert_ne!(a.w, b.w);

        let mut past = base.past().to_vec();
        past.reverse();
        let permuted = BrownianDriver::from_increments(&g, &past, base.future()).unwrap();
        let c = sim.simulate(&permuted).unwrap();
        assert_eq!(a.w, c.w);
        assert_ne!(a.r, c.r);
    }

    // Exact variance of the discretized functionals against the closed forms; this is the
    // deterministic bias that the Monte Carlo checks must dominate.
    #[test]
    fn discretization_bias_is_small_on_graded_grid() {
        let p = p75();
        let depth = resolve_depth(0.0, 1.0, &p, 1e-4).unwrap().depth;
        let g = make_graded_grid(0.0, 1.0, depth, 2000, 200).unwrap();
        let w = w_weights(&g, &p);
        let var_w: f64 = w.iter().map(|k| k * k * g.delta_future()).sum();
        assert!(rel(var_w, var_wh(1.0, 0.0, &p).unwrap()) < 1e-4);

        let var_dr = past_row_variance(&g, &dr_row(&g, &p, 1.0).unwrap());
        let expected = var_drh(1.0, 0.0, &p).unwrap() - drh_tail_variance(1.0, 0.0, depth, &p).unwrap();
        assert!(rel(var_dr, expected) < 1e-4, "{var_dr} vs {expected}");

        let var_r = past_row_variance(&g, &r_row(&g, &p, 1.0).unwrap());
        let total = var_w + var_r;
        assert!(rel(total, 1.0) < 2e-4, "{total}");

        // product-integration estimator of E ∫ DR_H² in expectation
        let omega = drift_energy_weights(&g, &p);
        let est: f64 = g
            .future_midpoints()
            .iter()
            .zip(&omega)
            .map(|(&m, w)| w * past_row_variance(&g, &dr_row(&g, &p, m).unwrap()))
            .sum();
        assert!(rel(est, integrated_var_drh(0.0, 1.0, &p).unwrap()) < 5e-4, "{est}");
    }

    #[test]
    fn energy_weights_are_exact_for_the_profile() {
        let g = make_grid(0.0, 2.0, 1.0, 1, 37).unwrap();
        let p = HurstParams::new(0.8).unwrap();
        let omega = drift_energy_weights(&g, &p);
        let est: f64 = g
            .future_midpoints()
            .iter()
            .zip(&omega)
            .map(|(&m, w)| w * var_drh(m, 0.0, &p).unwrap())
            .sum();
        assert!(rel(est, integrated_var_drh(0.0, 2.0, &p).unwrap()) < 1e-12);
    }

    #[test]
    fn diff_quotient_rejects_bad_delta() {
        let g = make_grid(0.0, 1.0, 5.0, 50, 10).unwrap();
        let d = sample_driver(&g, 1);
        let p = p75();
        assert!(diff_quotient_error(&d, &p, 1.0, 0.0, 10).is_err());
        assert!(diff_quotient_error(&d, &p, 1.0, 0.6, 10).is_err());
        assert!(diff_quotient_error(&d, &p, 1.0, 0.1, 0).is_err());
        assert!(diff_quotient_error(&d, &p, 1.0, -0.1, 10).is_ok());
    }

    #[test]
    fn quotient_excess_series_matches_direct_formula() {
        let a = 0.25;
        for (x, d) in [(1.0f64, 0.2), (1.0, -0.2), (3.0, 0.5), (2.0, 0.1)] {
            let direct = ((x + d).powf(a) - x.powf(a)) / d - a * x.powf(a - 1.0);
            assert!(rel(quotient_excess(x, d, a), direct) < 1e-12, "x = {x}, d = {d}");
        }
        // leading term a(a−1)/2 · δ x^{a−2}
        let tiny = quotient_excess(1e6, 1e-3, a);
        assert!(rel(tiny, a * (a - 1.0) / 2.0 * 1e-3 * 1e6f64.powf(a - 2.0)) < 1e-8);
    }

    #[test]
    fn diff_quotient_oracle_is_linear_in_delta() {
        let p = p75();
        let e1 = diff_quotient_expected_abs(1.0, 0.0, 0.02, &p).unwrap();
        let e2 = diff_quotient_expected_abs(1.0, 0.0, 0.01, &p).unwrap();
        assert!((e2 / e1 - 0.5).abs() < 0.01, "{}", e2 / e1);
    }

    #[test]
    fn path_csv_has_one_row_per_future_node() {
        let g = make_grid(0.0, 1.0, 5.0, 20, 4).unwrap();
        let path = simulate_decomposition(&sample_driver(&g, 2), &p75()).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "time,w,r,dr,increment");
        let back: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(back, path.r[1]);
    }
}
