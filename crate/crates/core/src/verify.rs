//! Self-check property suites. Each check recomputes an invariant that the
//! solvers must satisfy and reports pass/fail with a short diagnostic.

use rand::Rng;
use rayon::prelude::*;

use crate::belief::BeliefState;
use crate::bounds::{inner_contains, outer_contains, ExactOracle};
use crate::error::Result;
use crate::model::{BeliefKind, InitialBelief, RewardDistribution, WakeModel};
use crate::rng::{stream_rng, SimRng};
use crate::simplified::SimplifiedSpec;
use crate::threshold::{solve_phi, SolverGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name, passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random cases for the membership checks.
    pub samples: usize,
    /// Include the brute-force oracle checks, which dominate the runtime.
    pub oracle: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 2024, samples: 10_000, oracle: true }
    }
}

/// Multipliers at which the threshold tables are checked.
pub const BOUND_ETAS: [f64; 4] = [0.1, 1.0, 10.0, 1000.0];

/// `phi_l(w, b) >= b - (T - w) / eta` at every node of the default grid for
/// the progress law with `K = 50`.
pub fn lower_bound_on_thresholds() -> Result<CheckResult> {
    let dist = RewardDistribution::preset("progress10")?;
    let model = WakeModel::new(1.0)?;
    let k_max = 50;
    let mut worst = f64::INFINITY;
    let mut nodes = 0usize;
    for &eta in &BOUND_ETAS {
        let tg = solve_phi(SolverGrid::default(), &dist, &model, eta, k_max)?;
        let g = tg.grid();
        for l in 1..k_max {
            for i in 0..g.w_points {
                let w = tg.w_node(i);
                for j in 0..g.b_points {
                    let b = tg.b_node(j);
                    // -eta phi <= T - w - eta b, scaled to reward units
                    let slack = tg.node(l, i, j) - (b - (1.0 - w) / eta);
                    worst = worst.min(slack);
                    nodes += 1;
                }
            }
        }
    }
    Ok(CheckResult::new("threshold-lower-bound", worst >= -1e-12, format!("{nodes} nodes, min slack {worst:.3e}")))
}

fn random_pmf(rng: &mut SimRng, dim: usize) -> Vec<f64> {
    // sparse draws exercise the simplex faces
    let v: Vec<f64> = (0..dim).map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() }).collect();
    let s: f64 = v.iter().sum();
    if s == 0.0 {
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        return e;
    }
    v.into_iter().map(|x| x / s).collect()
}

fn random_deltas(rng: &mut SimRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| if rng.random::<f64>() < 0.1 { f64::INFINITY } else { 1e-3 + 3.0 * rng.random::<f64>() }).collect()
}

/// Inner membership implies outer membership.
pub fn inner_implies_outer(opts: &VerifyOptions) -> CheckResult {
    let mut rng = stream_rng(opts.seed, 1);
    let (mut inner, mut bad) = (0usize, 0usize);
    for _ in 0..opts.samples {
        let len = rng.random_range(1..10usize);
        let delta = random_deltas(&mut rng, len);
        let p = random_pmf(&mut rng, len + 1);
        if inner_contains(&p, &delta) {
            inner += 1;
            if !outer_contains(&p, &delta) {
                bad += 1;
            }
        }
    }
    CheckResult::new(
        "inner-implies-outer",
        bad == 0 && inner > 0,
        format!("{} cases, {inner} inside inner set, {bad} violations", opts.samples),
    )
}

/// Convex combinations of inner members stay inner members.
pub fn inner_convexity(opts: &VerifyOptions) -> CheckResult {
    let mut rng = stream_rng(opts.seed, 2);
    let (mut tried, mut bad) = (0usize, 0usize);
    let mut attempts = 0usize;
    while tried < opts.samples && attempts < 100 * opts.samples {
        attempts += 1;
        let len = rng.random_range(1..10usize);
        let delta = random_deltas(&mut rng, len);
        let p = random_pmf(&mut rng, len + 1);
        let q = random_pmf(&mut rng, len + 1);
        if !(inner_contains(&p, &delta) && inner_contains(&q, &delta)) {
            continue;
        }
        tried += 1;
        let lam: f64 = rng.random();
        let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        if !inner_contains(&mix, &delta) {
            bad += 1;
        }
    }
    CheckResult::new("inner-convexity", bad == 0 && tried == opts.samples, format!("{tried} combinations, {bad} violations"))
}

/// With `K = 2` and a known count, the oracle's optimal cost equals
/// `min{-eta b, -eta phi_{n-k}}` (with continuation `T - w - eta b` at `n = k`).
pub fn oracle_matches_known_count() -> Result<CheckResult> {
    let model = WakeModel::new(1.0)?;
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    let mut ok = true;
    for preset in ["uniform01", "progress10"] {
        let dist = RewardDistribution::preset(preset)?;
        let r_max = dist.support_max();
        for &eta in &[0.5, 2.0, 10.0] {
            let oracle = ExactOracle::new(&dist, &model, eta, 2)?.with_closed_last_stage(false);
            let tg = solve_phi(SolverGrid::default(), &dist, &model, eta, 2)?;
            let tol = 1e-3 * eta * r_max;
            for &w in &[0.0, 0.25, 0.5, 0.8] {
                for &b in &[0.0, 0.2, 0.5, 0.8, 0.95] {
                    let b = b * r_max;
                    for n in 1..=2usize {
                        let p = BeliefState::corner(1, n, 2)?;
                        let exact = oracle.optimal_cost(&p, w, b)?;
                        let known = if n == 1 {
                            (-eta * b).min(1.0 - w - eta * b)
                        } else {
                            (-eta * b).min(-eta * tg.phi(1, w, b))
                        };
                        let err = (exact - known).abs();
                        worst = worst.max(err / eta);
                        ok &= err <= tol;
                        cases += 1;
                    }
                }
            }
        }
    }
    Ok(CheckResult::new("oracle-known-count", ok, format!("{cases} states, max error/eta {worst:.2e}")))
}

/// Mesh resolutions of the `K = 3` nesting check per stage.
pub const NESTING_MESH: [(usize, usize); 2] = [(1, 9), (2, 50)];

/// With `K = 3`, inner members stop and stopping beliefs are outer members,
/// up to a cost tolerance of `1e-3 eta R_max`.
pub fn oracle_nesting() -> Result<CheckResult> {
    let model = WakeModel::new(1.0)?;
    let dist = RewardDistribution::preset("uniform01")?;
    let eta = 3.0;
    let k_max = 3;
    let oracle = ExactOracle::new(&dist, &model, eta, k_max)?;
    let tg = solve_phi(SolverGrid::default(), &dist, &model, eta, k_max)?;
    let tol = 1e-3 * eta * dist.support_max();
    let ws = [0.0, 0.3, 0.6];
    let bs = [0.3, 0.5, 0.7];
    let (mut rows_seen, mut inner_bad, mut outer_bad) = (0usize, 0usize, 0usize);
    for (stage, mesh) in NESTING_MESH {
        let rows = oracle.decision_table(stage, mesh, &ws, &bs)?;
        let verdicts: Vec<(bool, bool)> = rows
            .par_iter()
            .map(|row| {
                let delta = tg.delta_thresholds(stage, row.w, row.b)?;
                let gap = row.stop_cost - row.continue_cost;
                let in_inner = inner_contains(&row.masses, &delta);
                let in_outer = outer_contains(&row.masses, &delta);
                Ok((in_inner && gap > tol, gap < -tol && !in_outer))
            })
            .collect::<Result<_>>()?;
        rows_seen += rows.len();
        inner_bad += verdicts.iter().filter(|v| v.0).count();
        outer_bad += verdicts.iter().filter(|v| v.1).count();
    }
    Ok(CheckResult::new(
        "oracle-nesting",
        inner_bad == 0 && outer_bad == 0,
        format!("{rows_seen} states, {inner_bad} inner violations, {outer_bad} outer violations"),
    ))
}

/// `beta_{j+1} >= beta_j` everywhere and `beta_j = beta_1` above `alpha`.
pub fn beta_ordering() -> Result<CheckResult> {
    let mut ok = true;
    let mut checked = 0usize;
    for (preset, n, eta) in [("progress10", 11, 20.0), ("uniform01", 10, 5.0), ("example4", 8, 4.0)] {
        let dist = RewardDistribution::preset(preset)?;
        let spec = SimplifiedSpec::new(n, 1.0, eta, &dist)?;
        let alpha = spec.solve_alpha();
        let (grid, betas) = spec.beta_sequence(n - 1, 201)?;
        for j in 1..betas.len() {
            for (i, &b) in grid.iter().enumerate() {
                ok &= betas[j][i] >= betas[j - 1][i] - 1e-12;
                if b >= alpha {
                    ok &= (betas[j][i] - betas[0][i]).abs() <= 1e-9;
                }
                checked += 1;
            }
        }
    }
    Ok(CheckResult::new("beta-ordering", ok, format!("{checked} grid values")))
}

/// Every reward preset integrates to one, and every prior sums to one.
pub fn densities_normalized() -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for preset in ["progress10", "example1", "example2", "example3", "example4"] {
        let d = RewardDistribution::preset(preset)?;
        worst = worst.max((d.pdf_mass() - 1.0).abs());
        worst = worst.max((d.cdf(d.support_max()) - 1.0).abs());
    }
    let priors = [
        InitialBelief::new(BeliefKind::TruncatedPoisson { lambda: 10.0 }, 50)?,
        InitialBelief::new(BeliefKind::TruncatedPoisson { lambda: 5.0 }, 40)?,
        InitialBelief::new(BeliefKind::Binomial { q: 0.5 }, 30)?,
        InitialBelief::new(BeliefKind::Binomial { q: 0.5 }, 20)?,
        InitialBelief::new(BeliefKind::Uniform, 15)?,
    ];
    for p in &priors {
        worst = worst.max((p.masses().iter().sum::<f64>() - 1.0).abs());
    }
    Ok(CheckResult::new("density-normalization", worst <= 1e-6, format!("max deviation {worst:.2e}")))
}

/// Run every suite; errors count as failures.
pub fn run_all(opts: &VerifyOptions) -> Vec<CheckResult> {
    let wrap = |name: &'static str, r: Result<CheckResult>| {
        r.unwrap_or_else(|e| CheckResult::new(name, false, format!("error: {e}")))
    };
    let mut out = vec![
        wrap("threshold-lower-bound", lower_bound_on_thresholds()),
        inner_implies_outer(opts),
        inner_convexity(opts),
    ];
    if opts.oracle {
        out.push(wrap("oracle-known-count", oracle_matches_known_count()));
        out.push(wrap("oracle-nesting", oracle_nesting()));
    }
    out.push(wrap("beta-ordering", beta_ordering()));
    out.push(wrap("density-normalization", densities_normalized()));
    out
}
