//! Time discretization of the past window `[s − L, s]` and the future window `[s, T]`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Layout of the past-window cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PastSpacing {
    /// `n_past` cells of width `L / n_past`.
    Uniform,
    /// Cells grow geometrically away from `s`; the cell touching `s` has width
    /// `Δ_future / 10`. Falls back to uniform when `L / n_past` is already that fine.
    #[default]
    Graded,
}

/// Ratio between the future cell width and the finest graded past cell.
const GRADED_REFINEMENT: f64 = 10.0;

/// Discretization of `[s − L, s] ∪ [s, T]`.
///
/// The future window is always uniform. Node arrays are strictly increasing and
/// start/end exactly on the window endpoints. Cloning is cheap: node arrays are shared.
#[derive(Debug, Clone)]
pub struct TimeGrid {
    s: f64,
    horizon: f64,
    depth: f64,
    n_past: usize,
    n_future: usize,
    spacing: PastSpacing,
    growth: f64,
    past_nodes: Arc<[f64]>,
    past_widths: Arc<[f64]>,
    future_nodes: Arc<[f64]>,
}

impl PartialEq for TimeGrid {
    fn eq(&self, other: &Self) -> bool {
        self.s == other.s
            && self.horizon == other.horizon
            && self.depth == other.depth
            && self.n_past == other.n_past
            && self.n_future == other.n_future
            && self.spacing == other.spacing
    }
}

impl TimeGrid {
    pub fn new(
        s: f64,
        horizon: f64,
        depth: f64,
        n_past: usize,
        n_future: usize,
        spacing: PastSpacing,
    ) -> Result<Self> {
        if !(s.is_finite() && horizon.is_finite() && depth.is_finite()) {
            return domain("grid endpoints must be finite");
        }
        if horizon <= s {
            return domain(format!("horizon T = {horizon} must exceed s = {s}"));
        }
        if depth <= 0.0 {
            return domain(format!("past depth L = {depth} must be positive"));
        }
        if n_past < 1 {
            return domain("n_past must be at least 1");
        }
        if n_future < 2 {
            return domain("n_future must be at least 2");
        }

        let dt = (horizon - s) / n_future as f64;
        let mut future_nodes: Vec<f64> = (0..=n_future).map(|j| s + j as f64 * dt).collect();
        future_nodes[n_future] = horizon;

        let finest = dt / GRADED_REFINEMENT;
        let (past_nodes, growth) = match spacing {
            PastSpacing::Graded if depth / n_past as f64 > finest => {
                graded_past_nodes(s, depth, n_past, finest)
            }
            _ => {
                let dq = depth / n_past as f64;
                let mut nodes: Vec<f64> =
                    (0..=n_past).map(|k| s - depth + k as f64 * dq).collect();
                nodes[0] = s - depth;
                nodes[n_past] = s;
                (nodes, 1.0)
            }
        };

        let past_widths: Vec<f64> = past_nodes.windows(2).map(|w| w[1] - w[0]).collect();
        if past_widths.iter().any(|&w| !(w > 0.0)) {
            return domain("past cells collapsed to zero width; reduce n_past or increase L");
        }
        if future_nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("future cells collapsed to zero width");
        }

        Ok(Self {
            s,
            horizon,
            depth,
            n_past,
            n_future,
            spacing,
            growth,
            past_nodes: past_nodes.into(),
            past_widths: past_widths.into(),
            future_nodes: future_nodes.into(),
        })
    }

    #[inline]
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Horizon `T`.
    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Past truncation depth `L`.
    #[inline]
    pub fn depth(&self) -> f64 {
        self.depth
    }

    #[inline]
    pub fn n_past(&self) -> usize {
        self.n_past
    }

    #[inline]
    pub fn n_future(&self) -> usize {
        self.n_future
    }

    pub fn spacing(&self) -> PastSpacing {
        self.spacing
    }

    /// Width ratio between consecutive past cells (1 for uniform spacing).
    pub fn growth(&self) -> f64 {
        self.growth
    }

    /// `n_past + 1` nodes from `s − L` to `s`.
    pub fn past_nodes(&self) -> &[f64] {
        &self.past_nodes
    }

    pub fn past_widths(&self) -> &[f64] {
        &self.past_widths
    }

    /// `n_future + 1` nodes from `s` to `T`.
    pub fn future_nodes(&self) -> &[f64] {
        &self.future_nodes
    }

    /// Uniform future cell width `(T − s) / n_future`.
    pub fn delta_future(&self) -> f64 {
        (self.horizon - self.s) / self.n_future as f64
    }

    /// Width of the past cells when spacing is uniform; for graded grids the width of
    /// the cell adjacent to `s`.
    pub fn delta_past(&self) -> f64 {
        self.past_widths[self.n_past - 1]
    }

    pub fn future_midpoints(&self) -> Vec<f64> {
        self.future_nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Total number of driver cells, `n_past + n_future`.
    pub fn n_cells(&self) -> usize {
        self.n_past + self.n_future
    }
}

/// Uniform-spacing constructor.
pub fn make_grid(s: f64, horizon: f64, depth: f64, n_past: usize, n_future: usize) -> Result<TimeGrid> {
    TimeGrid::new(s, horizon, depth, n_past, n_future, PastSpacing::Uniform)
}

/// Geometrically graded past cells.
pub fn make_graded_grid(
    s: f64,
    horizon: f64,
    depth: f64,
    n_past: usize,
    n_future: usize,
) -> Result<TimeGrid> {
    TimeGrid::new(s, horizon, depth, n_past, n_future, PastSpacing::Graded)
}

/// Distance from `s` after `k` cells of a geometric progression with first width `first`
/// and growth `1 + x`.
fn geometric_span(first: f64, x: f64, k: usize) -> f64 {
    first * (k as f64 * x.ln_1p()).exp_m1() / x
}

fn graded_past_nodes(s: f64, depth: f64, n: usize, first: f64) -> (Vec<f64>, f64) {
    // Bisection on the growth excess x = ratio − 1; the span is increasing in x.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while geometric_span(first, hi, n) < depth {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if geometric_span(first, mid, n) > depth {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let mut nodes = vec![0.0; n + 1];
    for (k, node) in nodes.iter_mut().enumerate() {
        // node k sits n − k cells before s
        *node = s - geometric_span(first, x, n - k);
    }
    nodes[0] = s - depth;
    nodes[n] = s;
    (nodes, 1.0 + x)
}
