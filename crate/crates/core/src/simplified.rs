//! Simplified model: `N~` relays whose wake-ups form a Poisson stream of rate
//! `N~ / T`. Its optimal rule is a single reward threshold `alpha`, the fixed
//! point of `beta_1(b) = E[max{b, R}] - T / (eta N~)`.

use rand_distr::{Distribution, Exp};

use crate::error::{domain, Result};
use crate::model::{CdfTable, RewardDistribution};
use crate::rng::stream_rng;
use crate::stats::MeanSe;

/// Residual target of the fixed-point bisection.
pub const ALPHA_RESIDUAL: f64 = 1e-9;
/// Bracket width at which the gamma inversion stops.
pub const GAMMA_ALPHA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct SimplifiedSpec<'a> {
    pub n_tilde: usize,
    pub t: f64,
    pub eta: f64,
    pub dist: &'a RewardDistribution,
}

impl<'a> SimplifiedSpec<'a> {
    pub fn new(n_tilde: usize, t: f64, eta: f64, dist: &'a RewardDistribution) -> Result<Self> {
        if n_tilde < 1 {
            return Err(domain("relay count must be at least 1"));
        }
        if !(eta > 0.0 && t > 0.0) {
            return Err(domain("eta and T must be positive"));
        }
        Ok(Self { n_tilde, t, eta, dist })
    }

    /// Per-stage waiting cost in reward units, `T / (eta N~)`.
    pub fn step_cost(&self) -> f64 {
        self.t / (self.eta * self.n_tilde as f64)
    }

    /// `beta_1(b) = b + int_b^R (1 - F) - T / (eta N~)`.
    pub fn beta1(&self, b: f64) -> f64 {
        self.dist.expected_max_with(b) - self.step_cost()
    }

    /// The stopping threshold: `0` when `beta_1(0) < 0`, else the unique
    /// root of `b - beta_1(b)` in `[0, R_max)`.
    pub fn solve_alpha(&self) -> f64 {
        if self.beta1(0.0) < 0.0 {
            return 0.0;
        }
        let g = |b: f64| b - self.beta1(b);
        let (mut lo, mut hi) = (0.0, self.dist.support_max());
        loop {
            let mid = 0.5 * (lo + hi);
            let v = g(mid);
            if v.abs() < ALPHA_RESIDUAL * 1e-3 || hi - lo < 1e-15 {
                return mid;
            }
            if v > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }

    /// `beta_1..beta_levels` on `points` equally spaced rewards, via
    /// `beta_{j+1}(b) = E[max{b, R, beta_j(max{b, R})}] - T / (eta N~)`.
    /// Returns `(grid, tables)` with `tables[j - 1][i] = beta_j(grid[i])`.
    pub fn beta_sequence(&self, levels: usize, points: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if levels < 1 || points < 2 {
            return Err(domain("need at least one level and two grid points"));
        }
        let r_max = self.dist.support_max();
        let h = r_max / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|i| if i + 1 == points { r_max } else { i as f64 * h }).collect();
        let table = self.dist.table();
        let cdf: Vec<f64> = grid.iter().map(|&b| table.cdf(b)).collect();
        let mut lo = vec![0.0; points - 1];
        let mut hi = vec![0.0; points - 1];
        for m in 0..points - 1 {
            let avg = table.cdf_integral(grid[m], grid[m + 1]) / (grid[m + 1] - grid[m]);
            hi[m] = (cdf[m + 1] - avg).max(0.0);
            lo[m] = (avg - cdf[m]).max(0.0);
        }
        let c = self.step_cost();
        let mut tables = vec![grid.iter().map(|&b| self.beta1(b)).collect::<Vec<_>>()];
        for _ in 1..levels {
            let prev = tables.last().unwrap();
            let hv: Vec<f64> = grid.iter().zip(prev).map(|(b, p)| b.max(*p)).collect();
            let mut next = vec![0.0; points];
            let mut suffix = 0.0;
            next[points - 1] = hv[points - 1] - c;
            for j in (0..points - 1).rev() {
                suffix += lo[j] * hv[j] + hi[j] * hv[j + 1];
                next[j] = cdf[j] * hv[j] + suffix - c;
            }
            tables.push(next);
        }
        Ok((grid, tables))
    }

    pub fn expected_reward_alpha(&self, alpha: f64) -> f64 {
        AlphaCurve::new(self.dist.table(), self.n_tilde).expected_reward(alpha)
    }

    pub fn solve_alpha_for_gamma(&self, gamma: f64) -> f64 {
        AlphaCurve::new(self.dist.table(), self.n_tilde).alpha_for(gamma)
    }

    /// Monte Carlo of the threshold rule on the simplified process: stop at
    /// the first reward `>= alpha`, else take the best of all `N~`.
    pub fn simulate_reward(&self, alpha: f64, episodes: usize, seed: u64) -> MeanSe {
        let exp = Exp::new(self.n_tilde as f64 / self.t).expect("positive rate");
        let mut rng = stream_rng(seed, 0);
        let rewards: Vec<f64> = (0..episodes)
            .map(|_| {
                let mut best = 0.0f64;
                for _ in 0..self.n_tilde {
                    // wake gaps do not affect the reward; drawn to keep the process faithful
                    let _gap: f64 = exp.sample(&mut rng);
                    let r = self.dist.sample(&mut rng);
                    best = best.max(r);
                    if r >= alpha {
                        return r;
                    }
                }
                best
            })
            .collect();
        MeanSe::from_samples(&rewards)
    }
}

/// `alpha -> E[R_alpha]` for a fixed relay count, with prefix integrals so
/// that evaluation is O(1) after construction.
#[derive(Debug, Clone)]
pub struct AlphaCurve<'a> {
    table: &'a CdfTable,
    n: usize,
    h: f64,
    /// `prefix[i] = int_0^{x_i} (1 - F^n)`.
    prefix: Vec<f64>,
}

impl<'a> AlphaCurve<'a> {
    pub fn new(table: &'a CdfTable, n: usize) -> Self {
        let cells = table.cells();
        let h = table.support_max() / cells as f64;
        let mut prefix = Vec::with_capacity(cells + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for i in 0..cells {
            let a = i as f64 * h;
            acc += h - power_integral(table.cdf(a), table.cdf(a + h), n, h);
            prefix.push(acc);
        }
        Self { table, n, h, prefix }
    }

    fn survival_power_integral(&self, x: f64) -> f64 {
        let r_max = self.table.support_max();
        let x = x.clamp(0.0, r_max);
        let i = ((x / self.h) as usize).min(self.prefix.len() - 2);
        let a = i as f64 * self.h;
        let dx = x - a;
        if dx <= 0.0 {
            return self.prefix[i];
        }
        self.prefix[i] + dx - power_integral(self.table.cdf(a), self.table.cdf(x), self.n, dx)
    }

    /// `E[R_alpha] = int_0^alpha (1 - F^N) + (1 - F(alpha)^N) / (1 - F(alpha)) int_alpha^R (1 - F)`.
    pub fn expected_reward(&self, alpha: f64) -> f64 {
        let r_max = self.table.support_max();
        let alpha = alpha.clamp(0.0, r_max);
        let left = self.survival_power_integral(alpha);
        let f = self.table.cdf(alpha);
        if f >= 1.0 {
            return left;
        }
        // (1 - f^n) / (1 - f) as a geometric sum, stable near f = 1
        let mut geo = 0.0;
        let mut pw = 1.0;
        for _ in 0..self.n {
            geo += pw;
            pw *= f;
        }
        let upper_tail = (r_max - alpha) - self.table.cdf_integral(alpha, r_max);
        left + geo * upper_tail
    }

    /// Smallest-error `alpha` with `E[R_alpha] = gamma`, clamped to
    /// `[0, R_max]` outside the attainable range.
    pub fn alpha_for(&self, gamma: f64) -> f64 {
        let r_max = self.table.support_max();
        if gamma <= self.expected_reward(0.0) {
            return 0.0;
        }
        if gamma >= self.expected_reward(r_max) {
            return r_max;
        }
        let (mut lo, mut hi) = (0.0, r_max);
        while hi - lo > GAMMA_ALPHA_TOL {
            let mid = 0.5 * (lo + hi);
            if self.expected_reward(mid) < gamma {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `int (F0 + (F1 - F0) s / len)^n ds` over a cell of length `len`.
fn power_integral(f0: f64, f1: f64, n: usize, len: f64) -> f64 {
    let d = f1 - f0;
    if d.abs() < 1e-12 {
        let m = 0.5 * (f0 + f1);
        return len * m.powi(n as i32);
    }
    len * (f1.powi(n as i32 + 1) - f0.powi(n as i32 + 1)) / ((n as f64 + 1.0) * d)
}

/// Sup-norm distance on `[0, T]` between the law of the first of `n` uniform
/// wake-ups and an exponential of rate `n / T`.
pub fn exponential_approximation_gap(n: usize, t: f64) -> f64 {
    (0..=10_000)
        .map(|i| {
            let u = t * i as f64 / 10_000.0;
            let exact = 1.0 - (1.0 - u / t).powi(n as i32);
            let approx = 1.0 - (-(n as f64) * u / t).exp();
            (exact - approx).abs()
        })
        .fold(0.0, f64::max)
}
