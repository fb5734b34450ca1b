//! Inner and outer approximations of the optimum stopping set, as linear
//! tests on the belief, and a brute-force oracle for at most three relays.
//!
//! With edge thresholds `delta_l` at stage `k`, the inner set is the hull of
//! the stopping corner and the points `(1 - delta_l) e_k + delta_l e_{k+l}`;
//! membership reduces to `sum_l p(k + l) / delta_l <= 1`. The outer set is
//! `p(k) >= 1 - max_l delta_l`.

use rayon::prelude::*;

use crate::belief::BeliefState;
use crate::error::{domain, Error, Result};
use crate::model::{RewardDistribution, WakeModel};
use crate::quadrature::GaussLegendre;

/// Roundoff slack on the hull inequality; ties count as members.
const HULL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    Inner,
    Outer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSpec {
    pub kind: BoundKind,
    pub delta: Vec<f64>,
}

impl BoundSpec {
    pub fn new(kind: BoundKind, delta: Vec<f64>) -> Result<Self> {
        if delta.iter().any(|&d| !(d > 0.0)) {
            return Err(domain("edge thresholds must be positive or +inf"));
        }
        Ok(Self { kind, delta })
    }

    pub fn contains(&self, p: &BeliefState) -> bool {
        match self.kind {
            BoundKind::Inner => inner_membership(p, &self.delta),
            BoundKind::Outer => outer_membership(p, &self.delta),
        }
    }
}

pub fn inner_membership(p: &BeliefState, delta: &[f64]) -> bool {
    inner_contains(p.masses(), delta)
}

pub fn outer_membership(p: &BeliefState, delta: &[f64]) -> bool {
    outer_contains(p.masses(), delta)
}

/// Hull test on masses `[p(k), p(k+1), ...]`.
#[inline]
pub fn inner_contains(masses: &[f64], delta: &[f64]) -> bool {
    let load: f64 = masses
        .iter()
        .skip(1)
        .zip(delta)
        .map(|(p, d)| if d.is_infinite() { 0.0 } else { p / d })
        .sum();
    load <= 1.0 + HULL_SLACK
}

/// Outer test on masses `[p(k), p(k+1), ...]`.
#[inline]
pub fn outer_contains(masses: &[f64], delta: &[f64]) -> bool {
    let top = delta.iter().cloned().fold(0.0, f64::max);
    if delta.is_empty() || top >= 1.0 {
        return true;
    }
    masses[0] >= 1.0 - top - HULL_SLACK
}

/// Brute-force stopping costs for `K <= 3` by direct quadrature of the
/// continuation cost over the next gap and the next reward.
#[derive(Debug, Clone)]
pub struct ExactOracle {
    dist: RewardDistribution,
    model: WakeModel,
    eta: f64,
    k_max: usize,
    /// Composite Gauss-Legendre points `(s, weight)` on `[0, 1]`.
    unit_rule: Vec<(f64, f64)>,
    panels: usize,
    gl: GaussLegendre,
    closed_last: bool,
}

/// One meshed oracle state with its decision.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub stage: usize,
    pub masses: Vec<f64>,
    pub w: f64,
    pub b: f64,
    pub stop_cost: f64,
    pub continue_cost: f64,
}

impl OracleRow {
    pub fn stops(&self) -> bool {
        self.stop_cost <= self.continue_cost
    }
}

impl ExactOracle {
    pub const MAX_RELAYS: usize = 3;

    pub fn new(dist: &RewardDistribution, model: &WakeModel, eta: f64, k_max: usize) -> Result<Self> {
        if k_max > Self::MAX_RELAYS {
            return Err(Error::Refused(format!(
                "exact oracle supports K <= {}, got K = {k_max}",
                Self::MAX_RELAYS
            )));
        }
        if k_max < 1 || !(eta > 0.0) {
            return Err(domain("oracle needs K >= 1 and eta > 0"));
        }
        let gl = GaussLegendre::new(8);
        let panels = 8;
        Ok(Self {
            dist: dist.clone(),
            model: *model,
            eta,
            k_max,
            unit_rule: gl.composite_points(0.0, 1.0, panels),
            panels,
            gl,
            closed_last: true,
        })
    }

    /// With `false`, the stage `K - 1` continuation is also integrated by
    /// quadrature instead of its closed form. Slower; used to cross-check.
    pub fn with_closed_last_stage(mut self, closed: bool) -> Self {
        self.closed_last = closed;
        self
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `J_k = min{-eta b, c_k}`; at stage `K` only stopping remains sensible.
    pub fn optimal_cost(&self, p: &BeliefState, w: f64, b: f64) -> Result<f64> {
        if p.stage() == self.k_max {
            // continuing costs T - w - eta b >= -eta b
            return Ok(-self.eta * b);
        }
        Ok((-self.eta * b).min(self.continue_cost(p, w, b)?))
    }

    /// Continuation cost `c_k(p, w, b)`.
    pub fn continue_cost(&self, p: &BeliefState, w: f64, b: f64) -> Result<f64> {
        self.check(p)?;
        let t = self.model.period();
        let span = t - w;
        if !(span > 0.0) {
            return Err(domain("oracle needs w < T"));
        }
        let k = p.stage();
        let mut cost = p.prob(k) * (span - self.eta * b);
        if k == self.k_max {
            return Ok(cost);
        }
        if self.closed_last && k + 1 == self.k_max {
            // one relay left: U uniform on (0, T - w), then stop with max{b, R}
            let last = p.prob(self.k_max);
            return Ok(cost + last * (0.5 * span - self.eta * self.dist.expected_max_with(b)));
        }
        // weight of each gap node: sum_n p(n) f_k(u | w, n)
        for &(s, ws) in &self.unit_rule {
            let u = s * span;
            let weight: f64 = (k + 1..=self.k_max)
                .map(|n| {
                    let l = (n - k) as f64;
                    p.prob(n) * l * (1.0 - s).powf(l - 1.0)
                })
                .sum::<f64>()
                * ws;
            if weight == 0.0 || !(u > 0.0 && u < span) {
                continue;
            }
            let next = p.update(&self.model, w, u)?;
            let future = self.expect_over_reward(b, |b2| self.optimal_cost(&next, w + u, b2))?;
            cost += weight * (u + future);
        }
        Ok(cost)
    }

    /// `E[g(max{b, R})]`.
    fn expect_over_reward(&self, b: f64, g: impl Fn(f64) -> Result<f64>) -> Result<f64> {
        let r_max = self.dist.support_max();
        let mut acc = self.dist.cdf(b) * g(b)?;
        if b < r_max {
            let h = (r_max - b) / self.panels as f64;
            for q in 0..self.panels {
                let mid = b + (q as f64 + 0.5) * h;
                for (x, wq) in self.gl.nodes.iter().zip(&self.gl.weights) {
                    let r = mid + 0.5 * h * x;
                    acc += 0.5 * h * wq * self.dist.pdf(r)? * g(r)?;
                }
            }
        }
        Ok(acc)
    }

    fn check(&self, p: &BeliefState) -> Result<()> {
        if p.max_relays() != self.k_max || p.stage() < 1 {
            return Err(domain("oracle belief must be at a stage >= 1 with the oracle's K"));
        }
        Ok(())
    }

    /// Decisions on every belief of the simplex mesh at `stage` with
    /// `mesh + 1` points per axis, crossed with the `(w, b)` pairs.
    pub fn decision_table(&self, stage: usize, mesh: usize, ws: &[f64], bs: &[f64]) -> Result<Vec<OracleRow>> {
        if !(1..=self.k_max).contains(&stage) || mesh < 1 {
            return Err(domain("bad oracle stage or mesh"));
        }
        let beliefs = simplex_mesh(self.k_max - stage + 1, mesh);
        let mut states = Vec::new();
        for m in &beliefs {
            for &w in ws {
                for &b in bs {
                    states.push((m.clone(), w, b));
                }
            }
        }
        states
            .into_par_iter()
            .map(|(masses, w, b)| {
                let p = BeliefState::new(stage, self.k_max, masses.clone())?;
                Ok(OracleRow {
                    stage,
                    masses,
                    w,
                    b,
                    stop_cost: -self.eta * b,
                    continue_cost: self.continue_cost(&p, w, b)?,
                })
            })
            .collect()
    }
}

/// All pmfs on `dim` points with entries in multiples of `1 / mesh`.
pub fn simplex_mesh(dim: usize, mesh: usize) -> Vec<Vec<f64>> {
    fn rec(dim: usize, left: usize, mesh: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if dim == 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / mesh as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(dim - 1, left - c, mesh, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, mesh, mesh, &mut Vec::new(), &mut out);
    out
}
