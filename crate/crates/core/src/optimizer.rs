//! Programmed mean-variance strategy for `S(t) = S(0) + μt + σ B_H(t)`, zero short rate.
//!
//! Given the past up to `s`, the terminal wealth of a strategy `γ` fixed in advance has
//!
//! ```text
//! E₀ X(T)   = X(0) + ∫ γ (μ + σ DR_H) dt
//! Var₀ X(T) = (γ, Γγ)
//! ```
//!
//! and the optimal programmed strategy is `γ̂ = (Γ + kI)⁻¹ (μ + σ DR_H) / (2λ)`.
//! It is the exact maximizer of `(γ, μ + σ DR_H) − λ [ (γ, Γγ) + k ‖γ‖² ]`, which is
//! what [`objective`] evaluates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::decomposition::DecompositionPath;
use crate::error::{domain, Error, Result};
use crate::fracops::{GammaOperator, StrategyVector};

/// Relative residual every solve must reach.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Largest system solved by dense factorization under [`SolverKind::Auto`].
pub const DIRECT_SOLVE_LIMIT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub mu: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub k: f64,
    pub s0: f64,
    pub x0: f64,
}

impl MarketParams {
    pub fn new(mu: f64, sigma: f64, lambda: f64, k: f64, s0: f64, x0: f64) -> Result<Self> {
        let m = Self {
            mu,
            sigma,
            lambda,
            k,
            s0,
            x0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.mu, self.sigma, self.lambda, self.k, self.s0, self.x0]
            .iter()
            .any(|v| !v.is_finite())
        {
            return domain("market parameters must be finite");
        }
        if !(self.lambda > 0.0) {
            return domain(format!("risk aversion lambda must be positive, got {}", self.lambda));
        }
        if !(self.k > 0.0) {
            return domain(format!("penalty k must be positive, got {}", self.k));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Auto,
    Cholesky,
    ConjugateGradient,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizationResult {
    #[serde(serialize_with = "serialize_strategy")]
    pub gamma_hat: StrategyVector,
    pub objective_value: f64,
    /// `‖2λ(Γ + kI)γ̂ − rhs‖` in the weighted L2 norm.
    pub residual_norm: f64,
    pub rhs_norm: f64,
    /// `E₀ X(T)`, including `X(0)`.
    pub conditional_mean: f64,
    /// `Var₀ X(T)`.
    pub conditional_variance: f64,
    /// `k ∫ γ̂² dt`.
    pub penalty: f64,
    pub solver: SolverKind,
}

fn serialize_strategy<S: serde::Serializer>(g: &StrategyVector, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(g.values())
}

impl OptimizationResult {
    pub fn relative_residual(&self) -> f64 {
        if self.rhs_norm == 0.0 {
            self.residual_norm
        } else {
            self.residual_norm / self.rhs_norm
        }
    }
}

/// `μ + σ DR_H` averaged over each future cell, i.e. `μ + σ (R_H(t_i) − R_H(t_{i−1}))/Δ`.
pub fn drift_rhs(path: &DecompositionPath, market: &MarketParams) -> Vec<f64> {
    path.dr_cell_means()
        .into_iter()
        .map(|d| market.mu + market.sigma * d)
        .collect()
}

fn weighted_norm(v: &[f64], weights: &[f64]) -> f64 {
    v.iter().zip(weights).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}

fn check_operator(op: &GammaOperator, market: &MarketParams) -> Result<()> {
    market.validate()?;
    if op.sigma() != market.sigma {
        return domain(format!(
            "operator was built with sigma = {}, market has sigma = {}",
            op.sigma(),
            market.sigma
        ));
    }
    Ok(())
}

fn check_rhs(op: &GammaOperator, rhs: &[f64]) -> Result<()> {
    if rhs.len() != op.dim() {
        return Err(Error::GridMismatch(format!(
            "rhs has {} cells, operator has {}",
            rhs.len(),
            op.dim()
        )));
    }
    Ok(())
}

/// `(γ, rhs) − λ[(γ, Γγ) + k‖γ‖²]` with cell-width weights.
pub fn objective(gamma: &StrategyVector, rhs: &[f64], op: &GammaOperator, market: &MarketParams) -> Result<f64> {
    check_rhs(op, rhs)?;
    let quad = op.quadratic_form(gamma)?;
    Ok(gamma.inner(rhs) - market.lambda * (quad + market.k * gamma.norm_sq()))
}

/// `(E₀ X(T), Var₀ X(T))` for a programmed strategy given one past realization.
pub fn wealth_stats(
    gamma: &StrategyVector,
    path: &DecompositionPath,
    op: &GammaOperator,
    market: &MarketParams,
) -> Result<(f64, f64)> {
    if gamma.grid() != path.grid() {
        return Err(Error::GridMismatch("strategy and path grids differ".into()));
    }
    let rhs = drift_rhs(path, market);
    Ok((market.x0 + gamma.inner(&rhs), op.quadratic_form(gamma)?))
}

/// Jacobi-preconditioned conjugate gradient for a dense SPD system.
fn conjugate_gradient(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let n = b.len();
    let inv_diag: DVector<f64> = a.diagonal().map(|d| 1.0 / d);
    let b_norm = b.norm();
    let mut x = DVector::zeros(n);
    if b_norm == 0.0 {
        return x;
    }
    let mut r = b.clone();
    let mut z = r.component_mul(&inv_diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..10 * n.max(10) {
        let ap = a * &p;
        let step = rz / p.dot(&ap);
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        if r.norm() <= rel_tol * b_norm {
            break;
        }
        z = r.component_mul(&inv_diag);
        let rz_next = r.dot(&z);
        p = &z + (rz_next / rz) * &p;
        rz = rz_next;
    }
    x
}

/// `(Γ + kI)` assembled once, reusable across right-hand sides.
pub struct OptimalSolver<'a> {
    op: &'a GammaOperator,
    market: MarketParams,
    system: DMatrix<f64>,
    factor: Option<Cholesky<f64, Dyn>>,
    kind: SolverKind,
}

impl<'a> OptimalSolver<'a> {
    pub fn new(op: &'a GammaOperator, market: &MarketParams, kind: SolverKind) -> Result<Self> {
        check_operator(op, market)?;
        let n = op.dim();
        // M + k·diag(Δ) is the weighted form of Γ + kI
        let mut system = op.matrix().clone();
        for (i, w) in op.weights().iter().enumerate() {
            system[(i, i)] += market.k * w;
        }
        let kind = match kind {
            SolverKind::Auto if n <= DIRECT_SOLVE_LIMIT => SolverKind::Cholesky,
            SolverKind::Auto => SolverKind::ConjugateGradient,
            other => other,
        };
        let factor = match kind {
            SolverKind::Cholesky => Some(
                system
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Factorization("Γ + kI is not numerically positive definite".into()))?,
            ),
            _ => None,
        };
        Ok(Self {
            op,
            market: *market,
            system,
            factor,
            kind,
        })
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<OptimizationResult> {
        let op = self.op;
        check_rhs(op, rhs)?;
        let weights = op.weights();
        let b = DVector::from_iterator(rhs.len(), rhs.iter().zip(weights).map(|(r, w)| r * w));
        let x = match &self.factor {
            Some(f) => f.solve(&b),
            None => conjugate_gradient(&self.system, &b, 1e-13),
        };
        let two_lambda = 2.0 * self.market.lambda;
        let values: Vec<f64> = x.iter().map(|v| v / two_lambda).collect();
        let gamma_hat = StrategyVector::new(op.grid(), values)?;

        let applied = op.apply(&gamma_hat)?;
        let residual: Vec<f64> = applied
            .iter()
            .zip(gamma_hat.values())
            .zip(rhs)
            .map(|((g, v), r)| two_lambda * (g + self.market.k * v) - r)
            .collect();
        let residual_norm = weighted_norm(&residual, weights);
        let rhs_norm = weighted_norm(rhs, weights);
        let tolerance = RESIDUAL_TOLERANCE * rhs_norm;
        if !(residual_norm <= tolerance) {
            return Err(Error::Solver {
                residual: residual_norm,
                tolerance,
            });
        }

        let conditional_variance = op.quadratic_form(&gamma_hat)?;
        let penalty = self.market.k * gamma_hat.norm_sq();
        let gain = gamma_hat.inner(rhs);
        Ok(OptimizationResult {
            objective_value: gain - self.market.lambda * (conditional_variance + penalty),
            residual_norm,
            rhs_norm,
            conditional_mean: self.market.x0 + gain,
            conditional_variance,
            penalty,
            solver: self.kind,
            gamma_hat,
        })
    }
}

/// Solves `2λ(Γ + kI)γ̂ = rhs`.
pub fn solve_optimal(op: &GammaOperator, rhs: &[f64], market: &MarketParams) -> Result<OptimizationResult> {
    OptimalSolver::new(op, market, SolverKind::Auto)?.solve(rhs)
}
