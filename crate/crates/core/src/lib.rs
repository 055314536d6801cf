//! Noise/drift decomposition of fractional Brownian motion increments.
//!
//! For a Hurst exponent `H` in `(1/2, 1)` the increment `B_H(t) - B_H(s)` of the
//! Mandelbrot–Van Ness fractional Brownian motion splits into
//!
//! * `W_H(t)`, driven only by Brownian noise on `(s, t]` and independent of the past;
//! * `R_H(t)`, a functional of the noise before `s` that is differentiable in mean
//!   square with derivative `DR_H(t)`.
//!
//! The crate simulates both parts on a discretized driver, evaluates their closed-form
//! moments, builds the covariance operator `Γ` of the noise integral `∫ γ dW_H`, and
//! solves the programmed mean-variance portfolio problem
//! `γ̂ = (Γ + kI)⁻¹ (μ + σ DR_H) / (2λ)` path by path. The [`verify`] module ties it
//! together as a Monte Carlo verification harness.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod decomposition;
pub mod driver;
pub mod error;
pub mod exact;
pub mod fracops;
pub mod grid;
pub mod hurst;
pub mod optimizer;
pub mod output;
pub mod quadrature;
pub mod stats;
pub mod verify;

pub use decomposition::{DecompositionPath, PathSimulator};
pub use driver::BrownianDriver;
pub use error::{Error, Result};
pub use fracops::{GammaOperator, StrategyVector};
pub use grid::TimeGrid;
pub use hurst::HurstParams;
pub use optimizer::{MarketParams, OptimizationResult};
