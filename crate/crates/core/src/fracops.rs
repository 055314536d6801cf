//! The fractional transform `G_H` and the covariance operator `Γ` on piecewise-constant
//! strategies.
//!
//! For a strategy `γ` constant on each future cell,
//!
//! ```text
//! G_H(τ) = c_H (H − 1/2) ∫_τ^T (t − τ)^{H−3/2} γ(t) dt
//!        = c_H Σ_i γ_i [ (t_{i+1} − τ)_+^{H−1/2} − (t_i − τ)_+^{H−1/2} ]
//! ```
//!
//! exactly, and `(γ, Γγ) = σ² ‖G_H(γ)‖²_{L2(s,T)}` is the variance of `σ ∫ γ dW_H`.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hurst::HurstParams;
use crate::quadrature::gauss_legendre_on;

/// Piecewise-constant strategy on the future cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyVector {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl StrategyVector {
    pub fn new(grid: &TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_future() {
            return Err(Error::GridMismatch(format!(
                "strategy has {} cells, grid has {}",
                values.len(),
                grid.n_future()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("strategy values must be finite".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn constant(grid: &TimeGrid, level: f64) -> Result<Self> {
        Self::new(grid, vec![level; grid.n_future()])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `(γ, g)_{L2}` with cell-width weights.
    pub fn inner(&self, other: &[f64]) -> f64 {
        let dt = self.grid.delta_future();
        self.values.iter().zip(other).map(|(a, b)| a * b).sum::<f64>() * dt
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(&self.values)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "time,gamma")?;
        }
        for (t, g) in self.grid.future_nodes().iter().zip(&self.values) {
            writeln!(out, "{t:.16e},{g:.16e}")?;
        }
        Ok(())
    }
}

/// `G_H(τ)` at the future nodes `τ = t_0, ..., t_n` (the value at `t_n = T` is 0).
pub fn g_transform(gamma: &StrategyVector, params: &HurstParams) -> Vec<f64> {
    let n = gamma.grid.n_future();
    let a = params.alpha();
    let scale = params.c_h() * gamma.grid.delta_future().powf(a);
    // increments of m^α, m = 0, 1, ...
    let steps: Vec<f64> = (0..n).map(|m| ((m + 1) as f64).powf(a) - (m as f64).powf(a)).collect();
    (0..=n)
        .map(|j| scale * (j..n).map(|i| gamma.values[i] * steps[i - j]).sum::<f64>())
        .collect()
}

/// `G_H(τ)` at an arbitrary `τ ∈ [s, T]`.
pub fn g_transform_at(gamma: &StrategyVector, params: &HurstParams, tau: f64) -> f64 {
    let a = params.alpha();
    let pos = |x: f64| if x > 0.0 { x.powf(a) } else { 0.0 };
    let nodes = gamma.grid.future_nodes();
    params.c_h()
        * gamma
            .values
            .iter()
            .enumerate()
            .map(|(i, g)| g * (pos(nodes[i + 1] - tau) - pos(nodes[i] - tau)))
            .sum::<f64>()
}

/// Gauss–Legendre order per quadrature piece.
const GL_ORDER: usize = 16;
/// Geometric refinement levels toward a singular cell edge.
const GRADED_LEVELS: usize = 40;

/// Discretized `Γ`.
///
/// `matrix` is the Gram matrix `M_ij = σ² ∫_s^T G_i(τ) G_j(τ) dτ` of the cell indicators,
/// so `(γ, Γγ) = γᵀ M γ` and the operator itself acts as `Γγ = M γ / Δ` in the
/// cell basis with weights `Δ`.
#[derive(Debug, Clone)]
pub struct GammaOperator {
    grid: TimeGrid,
    params: HurstParams,
    sigma: f64,
    matrix: DMatrix<f64>,
    weights: Vec<f64>,
}

/// Quadrature nodes/weights on `[0, 1]`, optionally graded toward `v = 1`.
fn unit_rule(graded: bool) -> (Vec<f64>, Vec<f64>) {
    if !graded {
        return gauss_legendre_on(GL_ORDER, 0.0, 1.0);
    }
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut lo = 0.0;
    let mut gap = 0.5;
    for _ in 0..GRADED_LEVELS {
        let hi = 1.0 - gap;
        let (x, w) = gauss_legendre_on(GL_ORDER, lo, hi);
        nodes.extend(x);
        weights.extend(w);
        lo = hi;
        gap *= 0.5;
    }
    let (x, w) = gauss_legendre_on(GL_ORDER, lo, 1.0);
    nodes.extend(x);
    weights.extend(w);
    (nodes, weights)
}

/// `ĥ_a(v) = (a + 1 − v)^α − (a − v)_+^α` on the unit cell.
fn unit_profile(a: usize, v: f64, alpha: f64) -> f64 {
    let a = a as f64;
    let inner = a - v;
    let lower = if inner > 0.0 { inner.powf(alpha) } else { 0.0 };
    (a + 1.0 - v).powf(alpha) - lower
}

/// `P̂(a, b) = ∫_0^1 ĥ_a ĥ_b dv` for all `a, b < n` (symmetric).
fn unit_cell_products(n: usize, alpha: f64) -> DMatrix<f64> {
    let (xs, ws) = unit_rule(false);
    let (xg, wg) = unit_rule(true);
    let table = |x: &[f64]| DMatrix::from_fn(n, x.len(), |a, k| unit_profile(a, x[k], alpha));
    let smooth = table(&xs);
    let graded = table(&xg);
    let mut p = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let (tab, w) = if a <= 1 { (&graded, &wg) } else { (&smooth, &ws) };
            let v: f64 = (0..w.len()).map(|k| w[k] * tab[(a, k)] * tab[(b, k)]).sum();
            p[(a, b)] = v;
            p[(b, a)] = v;
        }
    }
    p
}

impl GammaOperator {
    pub fn build(grid: &TimeGrid, params: &HurstParams, sigma: f64) -> Result<Self> {
        if !sigma.is_finite() {
            return Err(Error::Domain("sigma must be finite".into()));
        }
        let n = grid.n_future();
        let dt = grid.delta_future();
        let p = unit_cell_products(n, params.alpha());
        let scale = sigma * sigma * params.c_h().powi(2) * dt.powf(2.0 * params.h());
        // M_ij = scale · Σ_{m ≤ min(i,j)} P̂(i − m, j − m)
        let mut matrix = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let prev = if i > 0 { matrix[(i - 1, j - 1)] } else { 0.0 };
                matrix[(i, j)] = prev + p[(i, j)];
            }
        }
        for i in 0..n {
            for j in i..n {
                let v = scale * matrix[(i, j)];
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            }
        }
        Ok(Self {
            grid: grid.clone(),
            params: *params,
            sigma,
            matrix,
            weights: vec![dt; n],
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn params(&self) -> &HurstParams {
        &self.params
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn check_grid(&self, gamma: &StrategyVector) -> Result<()> {
        if gamma.grid() != &self.grid {
            return Err(Error::GridMismatch("strategy grid differs from operator grid".into()));
        }
        Ok(())
    }

    /// `(γ, Γγ)_{L2}`.
    pub fn quadratic_form(&self, gamma: &StrategyVector) -> Result<f64> {
        self.check_grid(gamma)?;
        let g = nalgebra::DVectorView::from_slice(gamma.values(), self.dim());
        Ok(g.dot(&(&self.matrix * g)))
    }

    /// `Γγ` as cell values.
    pub fn apply(&self, gamma: &StrategyVector) -> Result<Vec<f64>> {
        self.check_grid(gamma)?;
        let g = nalgebra::DVectorView::from_slice(gamma.values(), self.dim());
        let mg = &self.matrix * g;
        Ok(mg.iter().zip(&self.weights).map(|(v, w)| v / w).collect())
    }

    /// `max |M − Mᵀ| / max |M|`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.dim();
        let scale = self.matrix.amax();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst / scale
    }

    /// Smallest and largest eigenvalues of `Γ` acting on the cell basis.
    pub fn eigen_range(&self) -> (f64, f64) {
        let scaled = &self.matrix / self.weights[0];
        let eig = SymmetricEigen::new(scaled).eigenvalues;
        (eig.min(), eig.max())
    }

    /// `sqrt(λ_max(Γ)) / |σ|`: the sharpest `c` with `‖G_H γ‖ ≤ c ‖γ‖` on this grid.
    pub fn bound_constant(&self) -> f64 {
        if self.sigma == 0.0 {
            return f64::NAN;
        }
        self.eigen_range().1.max(0.0).sqrt() / self.sigma.abs()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let n = self.dim();
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:.16e}", self.matrix[(i, j)])).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn build_gamma_operator(grid: &TimeGrid, params: &HurstParams, sigma: f64) -> Result<GammaOperator> {
    GammaOperator::build(grid, params, sigma)
}

pub fn quadratic_form(op: &GammaOperator, gamma: &StrategyVector) -> Result<f64> {
    op.quadratic_form(gamma)
}

/// Largest observed `‖G_H γ‖ / ‖γ‖` over `strategies`, with norms from `op`
/// (`σ` is divided out).
pub fn empirical_bound_constant(op: &GammaOperator, strategies: &[StrategyVector]) -> Result<f64> {
    let s2 = op.sigma() * op.sigma();
    let mut worst: f64 = 0.0;
    for g in strategies {
        let norm = g.norm_sq();
        if norm > 0.0 {
            worst = worst.max((op.quadratic_form(g)? / s2 / norm).sqrt());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::quadrature::tanh_sinh;

    fn p75() -> HurstParams {
        HurstParams::new(0.75).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn ones_transform_is_a_single_power() {
        let g = make_grid(0.0, 1.0, 1.0, 1, 50).unwrap();
        let p = p75();
        let ones = StrategyVector::constant(&g, 1.0).unwrap();
        let gt = g_transform(&ones, &p);
        for (j, &tau) in g.future_nodes().iter().enumerate() {
            let exact = p.c_h() * (1.0 - tau).max(0.0).powf(0.25);
            assert!((gt[j] - exact).abs() < 1e-13, "node {j}");
            assert!((g_transform_at(&ones, &p, tau) - exact).abs() < 1e-13);
        }
        let zeros = StrategyVector::constant(&g, 0.0).unwrap();
        assert!(g_transform(&zeros, &p).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_cell_indicator() {
        let g = make_grid(0.0, 1.0, 1.0, 1, 10).unwrap();
        let p = p75();
        let mut v = vec![0.0; 10];
        v[9] = 1.0;
        let last = StrategyVector::new(&g, v).unwrap();
        let gt = g_transform(&last, &p);
        for (j, &tau) in g.future_nodes().iter().enumerate() {
            let exact = p.c_h() * ((1.0 - tau).max(0.0).powf(0.25) - (0.9 - tau).max(0.0).powf(0.25));
            assert!((gt[j] - exact).abs() < 1e-13);
        }
        assert_eq!(gt[10], 0.0);
    }

    #[test]
    fn transform_matches_direct_singular_integral() {
        // c_H α ∫_τ^T (t − τ)^{α−1} γ(t) dt with γ(t) = t² sampled per cell
        let g = make_grid(0.0, 1.0, 1.0, 1, 8).unwrap();
        let p = p75();
        let nodes = g.future_nodes().to_vec();
        let vals: Vec<f64> = (0..8).map(|i| (i as f64 * 0.3).sin()).collect();
        let strat = StrategyVector::new(&g, vals.clone()).unwrap();
        let tau = 0.23;
        let direct: f64 = (0..8)
            .filter(|&i| nodes[i + 1] > tau)
            .map(|i| {
                let lo = nodes[i].max(tau);
                vals[i] * tanh_sinh(|x| x.powf(-0.75), lo - tau, nodes[i + 1] - tau, 1e-13).unwrap()
            })
            .sum::<f64>()
            * p.c_h()
            * 0.25;
        assert!(rel(g_transform_at(&strat, &p, tau), direct) < 1e-9);
    }

    #[test]
    fn ones_quadratic_form_matches_closed_form() {
        let g = make_grid(0.0, 1.0, 1.0, 1, 200).unwrap();
        let p = p75();
        let op = build_gamma_operator(&g, &p, 1.0).unwrap();
        let ones = StrategyVector::constant(&g, 1.0).unwrap();
        let q = op.quadratic_form(&ones).unwrap();
        assert!(rel(q, 0.762_759_763_501_813_2) < 1e-10, "{q}");

        let op2 = build_gamma_operator(&g, &p, 0.3).unwrap();
        assert!(rel(op2.quadratic_form(&ones).unwrap(), 0.09 * 0.762_759_763_501_813_2) < 1e-10);
    }

    #[test]
    fn zero_sigma_gives_zero_operator() {
        let g = make_grid(0.0, 1.0, 1.0, 1, 20).unwrap();
        let op = build_gamma_operator(&g, &p75(), 0.0).unwrap();
        assert!(op.matrix().iter().all(|&v| v == 0.0));
        assert_eq!(op.symmetry_defect(), 0.0);
    }

    #[test]
    fn gram_entries_match_brute_force_integral() {
        let g = make_grid(0.0, 1.0, 1.0, 1, 6).unwrap();
        let p = HurstParams::new(0.65).unwrap();
        let op = build_gamma_operator(&g, &p, 1.3).unwrap();
        let indicator = |i: usize| {
            let mut v = vec![0.0; 6];
            v[i] = 1.0;
            StrategyVector::new(&g, v).unwrap()
        };
        for (i, j) in [(0, 0), (2, 5), (4, 3), (5, 5), (1, 2)] {
            let (gi, gj) = (indicator(i), indicator(j));
            let nodes = g.future_nodes();
            let brute: f64 = (0..6)
                .map(|m| {
                    tanh_sinh(
                        |tau| g_transform_at(&gi, &p, tau) * g_transform_at(&gj, &p, tau),
                        nodes[m],
                        nodes[m + 1],
                        1e-12,
                    )
                    .unwrap()
                })
                .sum::<f64>()
                * 1.69;
            assert!(rel(op.matrix()[(i, j)], brute) < 1e-9, "({i},{j}) {} vs {brute}", op.matrix()[(i, j)]);
        }
    }

    #[test]
    fn symmetric_and_positive_semidefinite() {
        let g = make_grid(0.0, 1.0, 1.0, 1, 120).unwrap();
        let op = build_gamma_operator(&g, &HurstParams::new(0.9).unwrap(), 1.0).unwrap();
        assert!(op.symmetry_defect() <= 1e-12);
        let (lo, hi) = op.eigen_range();
        assert!(hi > 0.0 && lo >= -1e-10 * hi, "({lo}, {hi})");
    }

    #[test]
    fn spectral_constant_bounds_random_strategies() {
        let g = make_grid(0.0, 1.0, 1.0, 1, 40).unwrap();
        let op = build_gamma_operator(&g, &p75(), 2.0).unwrap();
        let c = op.bound_constant();
        let strategies: Vec<_> = (0..100u64)
            .map(|k| {
                let v = (0..40)
                    .map(|i| (crate::driver::mix64(k * 1000 + i) >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
                    .collect();
                StrategyVector::new(&g, v).unwrap()
            })
            .collect();
        let observed = empirical_bound_constant(&op, &strategies).unwrap();
        assert!(observed > 0.0 && observed <= c * (1.0 + 1e-12), "{observed} vs {c}");
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let g = make_grid(0.0, 1.0, 1.0, 1, 10).unwrap();
        let other = make_grid(0.0, 2.0, 1.0, 1, 10).unwrap();
        let op = build_gamma_operator(&g, &p75(), 1.0).unwrap();
        let s = StrategyVector::constant(&other, 1.0).unwrap();
        assert!(matches!(op.quadratic_form(&s), Err(Error::GridMismatch(_))));
        assert!(StrategyVector::new(&g, vec![1.0; 9]).is_err());
        assert!(StrategyVector::new(&g, vec![f64::NAN; 10]).is_err());
    }
}
