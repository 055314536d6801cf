//! Gauss–Legendre rules and double-exponential (tanh-sinh) quadrature.

use std::f64::consts::PI;

use crate::error::{domain, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|&xi| mid + half * xi).collect(),
        w.iter().map(|&wi| half * wi).collect(),
    )
}

/// Tanh-sinh quadrature of `f` over `[a, b]`, refined until two successive levels agree
/// to `rel_tol`. Integrable endpoint singularities are fine: `f` is never evaluated
/// exactly at `a` or `b`.
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if !(b > a) {
        return domain("tanh-sinh needs b > a");
    }
    let width = b - a;
    let half = 0.5 * width;
    let mid = a + half;

    // Contribution of abscissa ±u (u ≥ 0 in the sinh variable) at step h.
    let pair = |t: f64| -> Option<f64> {
        let u = 0.5 * PI * t.sinh();
        let ch = u.cosh();
        let weight = 0.5 * PI * t.cosh() / (ch * ch);
        // distance of the abscissa from the nearest endpoint
        let d = width / ((2.0 * u).exp() + 1.0);
        if !(d > 0.0) || weight == 0.0 {
            return None;
        }
        Some(weight * (f(a + d) + f(b - d)))
    };

    let mut h = 1.0;
    let mut sum = f(mid) * 0.5 * PI;
    let mut k = 1;
    while let Some(v) = pair(k as f64 * h) {
        sum += v;
        k += 1;
    }
    let mut estimate = half * h * sum;

    for _level in 0..14 {
        h *= 0.5;
        let mut k = 1;
        while let Some(v) = pair((2 * k - 1) as f64 * h) {
            sum += v;
            k += 1;
        }
        let next = half * h * sum;
        if (next - estimate).abs() <= rel_tol * next.abs() {
            return Ok(next);
        }
        estimate = next;
    }
    domain(format!("tanh-sinh did not reach relative tolerance {rel_tol:e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..2 * n {
                let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn mapped_rule() {
        let (x, w) = gauss_legendre_on(8, 1.0, 3.0);
        let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.exp()).sum();
        assert!((got - (3f64.exp() - 1f64.exp())).abs() < 1e-12);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularities() {
        let got = tanh_sinh(|t| t.powf(-0.5), 0.0, 1.0, 1e-13).unwrap();
        assert!((got - 2.0).abs() < 1e-12, "{got}");
        let got = tanh_sinh(|t| t.powf(-0.75) * (1.0 - t).powf(0.3), 0.0, 1.0, 1e-12).unwrap();
        let exact = statrs::function::beta::beta(0.25, 1.3);
        assert!((got / exact - 1.0).abs() < 1e-10, "{got} vs {exact}");
    }
}
