//! Quadrature rules shared by the solvers and oracles.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Composite rule over `panels` equal panels of `[a, b]`.
    pub fn integrate_composite(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: impl FnMut(f64) -> f64,
    ) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + p as f64 * h;
                self.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }

    /// Nodes and weights of the composite rule mapped onto `[a, b]`.
    pub fn composite_points(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let h = (b - a) / panels as f64;
        let mut out = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                out.push((mid + 0.5 * h * x, 0.5 * h * w));
            }
        }
        out
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// Weights `w[m]` such that `sum_m w[m] g(m / cells)` integrates the
/// piecewise-linear interpolant of `g` against the density
/// `order * (1 - s)^(order - 1)` on `[0, 1]` exactly.
///
/// This is the law of the smallest of `order` uniforms, rescaled to `[0, 1]`.
/// The weights are nonnegative and sum to one.
pub fn min_uniform_hat_weights(order: usize, cells: usize) -> Vec<f64> {
    assert!(order >= 1);
    if cells == 0 {
        return vec![1.0];
    }
    let l = order as f64;
    let h = 1.0 / cells as f64;
    // tail(s) = P(S > s), first moment piece via integration by parts.
    let tail = |s: f64| (1.0 - s).max(0.0).powf(l);
    let tail1 = |s: f64| (1.0 - s).max(0.0).powf(l + 1.0) / (l + 1.0);
    let mut w = vec![0.0; cells + 1];
    for m in 0..cells {
        let a = m as f64 * h;
        let b = if m + 1 == cells { 1.0 } else { (m + 1) as f64 * h };
        let mass = tail(a) - tail(b);
        let first = a * tail(a) - b * tail(b) + tail1(a) - tail1(b);
        let right = ((first - a * mass) / h).max(0.0);
        let left = ((b * mass - first) / h).max(0.0);
        w[m] += left;
        w[m + 1] += right;
    }
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}
