//! Monte Carlo evaluation of one-hop policies over a sweep of `eta`, and
//! selection of the sweep row that meets a reward target.

use std::sync::Arc;

use rayon::prelude::*;

use crate::belief::{BeliefState, HopObservation};
use crate::error::{Error, Result};
use crate::model::{sample_episode, Episode, InitialBelief, RewardDistribution, WakeModel};
use crate::policy::{Action, CeilingRule, DecisionContext, Policy, PolicyKind, PolicySpec};
use crate::rng::stream_rng;
use crate::simplified::SimplifiedSpec;
use crate::stats::MeanSe;
use crate::threshold::{solve_phi, SolverGrid, ThresholdGrid};

#[derive(Debug, Clone)]
pub struct OneHopConfig {
    pub model: WakeModel,
    pub dist: RewardDistribution,
    pub belief: InitialBelief,
    pub policies: Vec<PolicyKind>,
    /// Ascending.
    pub etas: Vec<f64>,
    pub replications: usize,
    pub master_seed: u64,
    pub grid: SolverGrid,
    pub ceiling: CeilingRule,
}

impl OneHopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.etas.is_empty() || self.etas.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::Config("etas must be a nonempty list of positive numbers".into()));
        }
        if self.etas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("etas must be sorted ascending".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("no policies selected".into()));
        }
        Ok(())
    }

    /// Rounded-up mean relay count, capped at `K`.
    pub fn n_bar(&self) -> usize {
        self.ceiling.apply(self.belief.mean()).min(self.belief.max_relays())
    }
}

/// Aggregated outcome of one `(policy, eta)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub policy: PolicyKind,
    pub eta: f64,
    pub mean_delay: f64,
    pub se_delay: f64,
    pub mean_reward: f64,
    pub se_reward: f64,
    pub replications: usize,
}

/// Episodes for replications `0..replications`; replication `i` always gets
/// the same draw, so every policy and `eta` sees common random numbers.
pub fn generate_episodes(cfg: &OneHopConfig) -> Vec<Episode> {
    (0..cfg.replications as u64)
        .into_par_iter()
        .map(|i| sample_episode(&cfg.model, &cfg.dist, &cfg.belief, &mut stream_rng(cfg.master_seed, i)))
        .collect()
}

/// Walk one episode under `policy`; returns `(delay, reward)`. A policy that
/// never stops waits until `T` and takes the best reward seen.
pub fn run_episode(ep: &Episode, policy: &Policy, model: &WakeModel, prior: &InitialBelief) -> Result<(f64, f64)> {
    let t = model.period();
    let n = ep.relays();
    let mut obs = HopObservation::start();
    let mut belief = policy.kind().needs_belief().then(|| BeliefState::prior(prior));
    for (&wake, &r) in ep.wake.iter().zip(&ep.rewards) {
        let u = wake - obs.w;
        if let Some(b) = belief.as_mut() {
            b.update_in_place(model, obs.w, u)?;
        }
        obs = obs.advance(u, r, t);
        let ctx = DecisionContext { belief: belief.as_ref(), obs, known_n: Some(n) };
        if policy.decide(&ctx)? == Action::Stop {
            return Ok((obs.w, obs.b));
        }
    }
    Ok((t, obs.b))
}

/// Mean and standard error of delay and reward over `episodes`.
pub fn evaluate(
    policy: &Policy,
    episodes: &[Episode],
    model: &WakeModel,
    prior: &InitialBelief,
) -> Result<(MeanSe, MeanSe)> {
    let pairs: Vec<(f64, f64)> =
        episodes.par_iter().map(|ep| run_episode(ep, policy, model, prior)).collect::<Result<_>>()?;
    let (d, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok((MeanSe::from_samples(&d), MeanSe::from_samples(&r)))
}

/// Build the runnable policy for one `eta`.
pub fn build_policy(
    cfg: &OneHopConfig,
    kind: PolicyKind,
    eta: f64,
    thresholds: Option<Arc<ThresholdGrid>>,
) -> Result<Policy> {
    let mut spec = PolicySpec::new(kind);
    spec.eta = Some(eta);
    match kind {
        PolicyKind::ASimpl => {
            let n_bar = cfg.n_bar();
            spec.n_bar = Some(n_bar);
            spec.alpha = Some(SimplifiedSpec::new(n_bar, cfg.model.period(), eta, &cfg.dist)?.solve_alpha());
        }
        PolicyKind::AComdp => spec.n_bar = Some(cfg.n_bar()),
        _ => {}
    }
    let tables = if kind.needs_thresholds() { thresholds } else { None };
    Policy::new(spec, cfg.model.period(), tables)
}

/// Sweep with thresholds solved in process.
pub fn sweep(cfg: &OneHopConfig) -> Result<Vec<SimOutcome>> {
    sweep_with(cfg, |eta| {
        solve_phi(cfg.grid, &cfg.dist, &cfg.model, eta, cfg.belief.max_relays()).map(Arc::new)
    })
}

/// Sweep with a caller-supplied threshold source (for caching). Rows are
/// ordered by policy (as listed in the config), then by `eta`.
pub fn sweep_with(
    cfg: &OneHopConfig,
    mut thresholds: impl FnMut(f64) -> Result<Arc<ThresholdGrid>>,
) -> Result<Vec<SimOutcome>> {
    cfg.validate()?;
    let episodes = generate_episodes(cfg);
    let need_tables = cfg.policies.iter().any(|k| k.needs_thresholds());
    let mut rows = Vec::with_capacity(cfg.policies.len() * cfg.etas.len());
    for &eta in &cfg.etas {
        let tables = if need_tables { Some(thresholds(eta)?) } else { None };
        for &kind in &cfg.policies {
            rows.push(cell(cfg, kind, eta, tables.clone(), &episodes)?);
        }
    }
    sort_rows(cfg, &mut rows);
    Ok(rows)
}

fn cell(
    cfg: &OneHopConfig,
    kind: PolicyKind,
    eta: f64,
    tables: Option<Arc<ThresholdGrid>>,
    episodes: &[Episode],
) -> Result<SimOutcome> {
    let policy = build_policy(cfg, kind, eta, tables)?;
    let (d, r) = evaluate(&policy, episodes, &cfg.model, &cfg.belief)?;
    Ok(SimOutcome {
        policy: kind,
        eta,
        mean_delay: d.mean,
        se_delay: d.se,
        mean_reward: r.mean,
        se_reward: r.se,
        replications: cfg.replications,
    })
}

fn sort_rows(cfg: &OneHopConfig, rows: &mut [SimOutcome]) {
    let order = |k: PolicyKind| cfg.policies.iter().position(|&p| p == k).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| order(a.policy).cmp(&order(b.policy)).then(a.eta.total_cmp(&b.eta)));
}

/// Consecutive swept `eta` values of `policy` whose mean rewards straddle
/// `gamma`, if any.
pub fn gamma_bracket(rows: &[SimOutcome], policy: PolicyKind, gamma: f64) -> Option<(f64, f64)> {
    let mut own: Vec<&SimOutcome> = rows.iter().filter(|r| r.policy == policy).collect();
    own.sort_by(|a, b| a.eta.total_cmp(&b.eta));
    own.windows(2)
        .find(|w| (w[0].mean_reward - gamma) * (w[1].mean_reward - gamma) <= 0.0)
        .map(|w| (w[0].eta, w[1].eta))
}

/// Add `points` log-spaced `eta` values inside each policy's bracket around
/// `gamma` and return the merged, re-sorted table. Replications reuse the
/// same episodes, so new rows share common random numbers with the old.
pub fn refine_with(
    cfg: &OneHopConfig,
    rows: &[SimOutcome],
    gamma: f64,
    points: usize,
    mut thresholds: impl FnMut(f64) -> Result<Arc<ThresholdGrid>>,
) -> Result<Vec<SimOutcome>> {
    cfg.validate()?;
    let episodes = generate_episodes(cfg);
    let mut out = rows.to_vec();
    for &kind in &cfg.policies {
        let Some((lo, hi)) = gamma_bracket(rows, kind, gamma) else { continue };
        let inner = log_spaced(lo, hi, points + 2);
        for &eta in &inner[1..=points] {
            let tables = if kind.needs_thresholds() { Some(thresholds(eta)?) } else { None };
            out.push(cell(cfg, kind, eta, tables, &episodes)?);
        }
    }
    sort_rows(cfg, &mut out);
    Ok(out)
}

/// Row of `policy` whose mean reward is closest to `gamma`; ties go to the
/// smaller `eta`.
pub fn match_gamma(rows: &[SimOutcome], policy: PolicyKind, gamma: f64) -> Result<SimOutcome> {
    rows.iter()
        .filter(|r| r.policy == policy)
        .min_by(|a, b| {
            (a.mean_reward - gamma)
                .abs()
                .total_cmp(&(b.mean_reward - gamma).abs())
                .then(a.eta.total_cmp(&b.eta))
        })
        .cloned()
        .ok_or_else(|| Error::EmptyTable(policy.name().to_string()))
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BeliefKind;

    fn small_cfg(policies: Vec<PolicyKind>, etas: Vec<f64>, reps: usize) -> OneHopConfig {
        OneHopConfig {
            model: WakeModel::new(1.0).unwrap(),
            dist: RewardDistribution::preset("uniform01").unwrap(),
            belief: InitialBelief::new(BeliefKind::Binomial { q: 0.5 }, 12).unwrap(),
            policies,
            etas,
            replications: reps,
            master_seed: 17,
            grid: SolverGrid::new(60, 60).unwrap(),
            ceiling: CeilingRule::StrictlyGreater,
        }
    }

    fn row(policy: PolicyKind, eta: f64, reward: f64) -> SimOutcome {
        SimOutcome {
            policy,
            eta,
            mean_delay: eta / 10.0,
            se_delay: 0.0,
            mean_reward: reward,
            se_reward: 0.0,
            replications: 1,
        }
    }

    #[test]
    fn match_gamma_contract() {
        let rows = vec![
            row(PolicyKind::Comdp, 1.0, 0.79),
            row(PolicyKind::Comdp, 2.0, 0.8003),
            row(PolicyKind::Comdp, 3.0, 0.81),
        ];
        assert_eq!(match_gamma(&rows, PolicyKind::Comdp, 0.8).unwrap().eta, 2.0);
        assert_eq!(match_gamma(&rows, PolicyKind::Comdp, 0.5).unwrap().eta, 1.0);
        assert_eq!(match_gamma(&rows, PolicyKind::Comdp, 0.99).unwrap().eta, 3.0);
        let tie = vec![row(PolicyKind::Inner, 5.0, 0.7), row(PolicyKind::Inner, 4.0, 0.9)];
        assert_eq!(match_gamma(&tie, PolicyKind::Inner, 0.8).unwrap().eta, 4.0);
        assert!(matches!(match_gamma(&rows, PolicyKind::Outer, 0.8), Err(Error::EmptyTable(_))));
    }

    #[test]
    fn definitional_episodes() {
        let cfg = small_cfg(vec![PolicyKind::FirstForward], vec![1.0], 200);
        let eps = generate_episodes(&cfg);
        let ff = build_policy(&cfg, PolicyKind::FirstForward, 1.0, None).unwrap();
        let mf = build_policy(&cfg, PolicyKind::MaxForward, 1.0, None).unwrap();
        let tg = Arc::new(solve_phi(cfg.grid, &cfg.dist, &cfg.model, 2.0, 12).unwrap());
        let comdp = build_policy(&cfg, PolicyKind::Comdp, 2.0, Some(tg)).unwrap();
        for ep in &eps {
            let (d, r) = run_episode(ep, &ff, &cfg.model, &cfg.belief).unwrap();
            assert_eq!((d, r), (ep.wake[0], ep.rewards[0]));
            let (d, r) = run_episode(ep, &mf, &cfg.model, &cfg.belief).unwrap();
            let best = ep.rewards.iter().cloned().fold(0.0, f64::max);
            assert_eq!((d, r), (*ep.wake.last().unwrap(), best));
            let (dc, rc) = run_episode(ep, &comdp, &cfg.model, &cfg.belief).unwrap();
            assert!(dc >= ep.wake[0] && dc <= *ep.wake.last().unwrap());
            assert!(rc <= best);
            if ep.relays() == 1 {
                assert_eq!((dc, rc), (ep.wake[0], ep.rewards[0]));
            }
        }
    }

    #[test]
    fn a_simpl_that_never_meets_alpha_waits_to_the_horizon() {
        let cfg = small_cfg(vec![PolicyKind::ASimpl], vec![1.0], 1);
        let mut spec = PolicySpec::new(PolicyKind::ASimpl);
        spec.alpha = Some(2.0);
        let p = Policy::new(spec, 1.0, None).unwrap();
        let ep = Episode { wake: vec![0.3], rewards: vec![0.6] };
        assert_eq!(run_episode(&ep, &p, &cfg.model, &cfg.belief).unwrap(), (1.0, 0.6));
    }

    #[test]
    fn sweep_is_deterministic_and_ff_ignores_eta() {
        let cfg = small_cfg(
            vec![PolicyKind::Comdp, PolicyKind::Inner, PolicyKind::Outer, PolicyKind::AComdp, PolicyKind::ASimpl, PolicyKind::FirstForward],
            vec![0.5, 5.0, 50.0],
            3000,
        );
        let a = sweep(&cfg).unwrap();
        let b = sweep(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 18);
        let ff: Vec<_> = a.iter().filter(|r| r.policy == PolicyKind::FirstForward).collect();
        assert!(ff.windows(2).all(|w| w[0].mean_delay == w[1].mean_delay && w[0].mean_reward == w[1].mean_reward));
        for r in &a {
            assert!(r.mean_delay > 0.0 && r.mean_delay <= 1.0);
            assert!(r.mean_reward >= 0.0 && r.mean_reward <= 1.0);
            assert!(r.mean_delay >= ff[0].mean_delay - 1e-12);
        }
        let comdp: Vec<_> = a.iter().filter(|r| r.policy == PolicyKind::Comdp).collect();
        for w in comdp.windows(2) {
            assert!(w[1].mean_delay >= w[0].mean_delay - 2.0 * (w[0].se_delay + w[1].se_delay));
        }
    }

    #[test]
    fn refinement_lands_inside_the_bracket() {
        let cfg = small_cfg(vec![PolicyKind::Comdp, PolicyKind::FirstForward], vec![0.5, 5.0, 50.0], 2000);
        let rows = sweep(&cfg).unwrap();
        let gamma = 0.5 * (rows[0].mean_reward + rows[2].mean_reward);
        let (lo, hi) = gamma_bracket(&rows, PolicyKind::Comdp, gamma).unwrap();
        let solve = |eta| solve_phi(cfg.grid, &cfg.dist, &cfg.model, eta, 12).map(Arc::new);
        let fine = refine_with(&cfg, &rows, gamma, 4, solve).unwrap();
        let added: Vec<_> = fine.iter().filter(|r| r.policy == PolicyKind::Comdp && r.eta > lo && r.eta < hi).collect();
        assert_eq!(added.len(), 4);
        // ff has no reward spread, so no bracket and no new rows
        assert_eq!(fine.iter().filter(|r| r.policy == PolicyKind::FirstForward).count(), 3);
        let before = match_gamma(&rows, PolicyKind::Comdp, gamma).unwrap();
        let after = match_gamma(&fine, PolicyKind::Comdp, gamma).unwrap();
        assert!((after.mean_reward - gamma).abs() <= (before.mean_reward - gamma).abs());
    }

    #[test]
    fn log_spacing() {
        let v = log_spaced(0.1, 1000.0, 5);
        assert_eq!(v.len(), 5);
        assert!((v[0] - 0.1).abs() < 1e-12 && (v[4] - 1000.0).abs() < 1e-9);
        assert!((v[2] - 10.0).abs() < 1e-9);
    }
}
