//! Multihop geographical forwarding over a random sleep-wake network.
//!
//! Nodes wake periodically at their own phase. A packet holder beacons in
//! slots of length `t_I`; a forwarding-set neighbor that wakes inside a slot
//! answers in that slot, and contention inside a slot goes to the neighbor
//! with the most progress. The sink is always awake.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::model::{forwarding_area, RewardDistribution};
use crate::policy::CeilingRule;
use crate::rng::{derive_seed, stream_rng};
use crate::simplified::AlphaCurve;
use crate::stats::MeanSe;

/// Placement attempts before giving up on a network with no dead ends.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
/// Cells of the per-node progress cdf tables.
const PROGRESS_TABLE_CELLS: usize = 4_000;

pub const SOURCE: usize = 0;
pub const SINK: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    pub side: f64,
    pub lambda: f64,
    pub r_c: f64,
    /// Index 0 is the source at the origin, 1 the sink at `(L, L)`.
    pub positions: Vec<[f64; 2]>,
    /// Wake phase in `[0, T)` of every node.
    pub phases: Vec<f64>,
    /// Neighbors within `r_c` that are strictly closer to the sink.
    pub forwarding: Vec<Vec<usize>>,
    pub to_sink: Vec<f64>,
    pub period: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolTiming {
    /// Beacon slot length.
    pub t_i: f64,
    /// Packet transmission time.
    pub t_d: f64,
    pub period: f64,
}

impl ProtocolTiming {
    pub fn new(t_i: f64, t_d: f64, period: f64) -> Result<Self> {
        if !(0.0 < t_i && t_i < t_d && t_d < period) {
            return Err(domain(format!("need 0 < t_I < t_D < T, got {t_i}, {t_d}, {period}")));
        }
        Ok(Self { t_i, t_d, period })
    }

    pub fn slots_per_cycle(&self) -> usize {
        (self.period / self.t_i).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum E2EPolicy {
    FirstForward,
    MaxForward,
    /// Threshold per hop from the exact forwarding-set size.
    Simplified,
    /// Threshold per hop from the density-based size estimate.
    SimplifiedEstimated,
}

impl E2EPolicy {
    pub const ALL: [E2EPolicy; 4] =
        [E2EPolicy::FirstForward, E2EPolicy::MaxForward, E2EPolicy::Simplified, E2EPolicy::SimplifiedEstimated];

    pub fn name(self) -> &'static str {
        match self {
            E2EPolicy::FirstForward => "ff",
            E2EPolicy::MaxForward => "mf",
            E2EPolicy::Simplified => "sf",
            E2EPolicy::SimplifiedEstimated => "sf-hat",
        }
    }

    pub fn uses_threshold(self) -> bool {
        matches!(self, E2EPolicy::Simplified | E2EPolicy::SimplifiedEstimated)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    pub total_delay: f64,
    pub hops: usize,
    pub path: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2EOutcome {
    pub policy: E2EPolicy,
    pub gamma: f64,
    pub mean_total_delay: f64,
    pub se_delay: f64,
    pub mean_hop_count: f64,
    pub se_hops: f64,
    pub transfers: usize,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Place `Poisson(lambda L^2)` nodes uniformly in `[0, L]^2`, resampling the
/// whole placement until no node is a dead end.
pub fn generate_network(side: f64, lambda: f64, r_c: f64, period: f64, seed: u64) -> Result<NetworkInstance> {
    if !(side > 0.0 && lambda > 0.0 && r_c > 0.0 && period > 0.0) {
        return Err(domain("network needs positive L, lambda, r_c and T"));
    }
    let mut rng = stream_rng(seed, 0);
    let count = Poisson::new(lambda * side * side).map_err(|e| domain(e.to_string()))?;
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let m = count.sample(&mut rng) as usize;
        let mut positions = vec![[0.0, 0.0], [side, side]];
        positions.extend((0..m).map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side]));
        let to_sink: Vec<f64> = positions.iter().map(|&p| dist(p, [side, side])).collect();
        let forwarding = forwarding_sets(&positions, &to_sink, r_c, side);
        let dead_end = forwarding.iter().enumerate().any(|(i, f)| i != SINK && f.is_empty());
        if dead_end {
            continue;
        }
        let phases = (0..positions.len()).map(|_| rng.random::<f64>() * period).collect();
        return Ok(NetworkInstance { side, lambda, r_c, positions, phases, forwarding, to_sink, period });
    }
    Err(Error::Network(format!(
        "no placement without dead ends after {MAX_PLACEMENT_ATTEMPTS} attempts; increase the node density"
    )))
}

fn forwarding_sets(pos: &[[f64; 2]], to_sink: &[f64], r_c: f64, side: f64) -> Vec<Vec<usize>> {
    let cells = ((side / r_c).ceil() as usize).max(1);
    let cell_of = |p: [f64; 2]| {
        let cx = ((p[0] / r_c) as usize).min(cells - 1);
        let cy = ((p[1] / r_c) as usize).min(cells - 1);
        (cx, cy)
    };
    let mut buckets = vec![Vec::new(); cells * cells];
    for (i, &p) in pos.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        buckets[cy * cells + cx].push(i);
    }
    pos.iter()
        .enumerate()
        .map(|(i, &p)| {
            if i == SINK {
                return Vec::new();
            }
            let (cx, cy) = cell_of(p);
            let mut out = Vec::new();
            for y in cy.saturating_sub(1)..=(cy + 1).min(cells - 1) {
                for x in cx.saturating_sub(1)..=(cx + 1).min(cells - 1) {
                    for &j in &buckets[y * cells + x] {
                        if j != i && dist(p, pos[j]) <= r_c && to_sink[j] < to_sink[i] {
                            out.push(j);
                        }
                    }
                }
            }
            out.sort_unstable();
            out
        })
        .collect()
}

impl NetworkInstance {
    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    fn sink_in_range(&self, i: usize) -> bool {
        self.to_sink[i] <= self.r_c
    }

    /// Fresh iid phases for one transfer.
    pub fn resample_phases(&self, seed: u64, transfer: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, transfer);
        (0..self.node_count()).map(|_| rng.random::<f64>() * self.period).collect()
    }

    /// Density-based estimate of the forwarding-set size of node `i`.
    pub fn estimated_relays(&self, i: usize, ceiling: CeilingRule) -> Result<usize> {
        Ok(ceiling.apply(self.lambda * forwarding_area(self.to_sink[i], self.r_c)?))
    }
}

/// Per-node progress laws, built once per topology.
#[derive(Debug, Clone)]
pub struct ProgressModels {
    laws: Vec<Option<RewardDistribution>>,
}

impl ProgressModels {
    pub fn new(net: &NetworkInstance) -> Result<Self> {
        let laws = (0..net.node_count())
            .into_par_iter()
            .map(|i| {
                if i == SINK || net.sink_in_range(i) {
                    return Ok(None);
                }
                RewardDistribution::with_cells(
                    crate::model::RewardKind::ProgressGeometric { d: net.to_sink[i], r_c: net.r_c },
                    PROGRESS_TABLE_CELLS,
                )
                .map(Some)
            })
            .collect::<Result<_>>()?;
        Ok(Self { laws })
    }

    /// Per-node thresholds meeting mean progress `gamma` in the simplified model.
    pub fn thresholds(
        &self,
        net: &NetworkInstance,
        policy: E2EPolicy,
        gamma: f64,
        ceiling: CeilingRule,
    ) -> Result<Vec<f64>> {
        if !(0.0..=net.r_c).contains(&gamma) {
            return Err(domain(format!("gamma {gamma} outside [0, r_c]")));
        }
        (0..net.node_count())
            .map(|i| {
                let Some(law) = &self.laws[i] else { return Ok(0.0) };
                let n = match policy {
                    E2EPolicy::Simplified => net.forwarding[i].len(),
                    E2EPolicy::SimplifiedEstimated => net.estimated_relays(i, ceiling)?,
                    E2EPolicy::FirstForward => return Ok(0.0),
                    E2EPolicy::MaxForward => return Ok(net.r_c),
                };
                Ok(AlphaCurve::new(law.table(), n.max(1)).alpha_for(gamma))
            })
            .collect()
    }
}

/// Route one packet from the source with the given phases. `alphas` holds
/// the per-node thresholds for the threshold policies and is ignored otherwise.
pub fn run_transfer_with(
    net: &NetworkInstance,
    timing: &ProtocolTiming,
    policy: E2EPolicy,
    alphas: &[f64],
    phases: &[f64],
) -> Result<TransferOutcome> {
    let slots = timing.slots_per_cycle();
    let mut holder = SOURCE;
    let mut now = 0.0;
    let mut path = vec![SOURCE];
    let mut responders: Vec<(usize, f64, usize)> = Vec::new();
    while holder != SINK {
        if path.len() > net.node_count() + 1 {
            return Err(Error::Network("hop limit exceeded".into()));
        }
        let (next, slot) = if net.sink_in_range(holder) {
            (SINK, 0)
        } else {
            responders.clear();
            for &j in &net.forwarding[holder] {
                let wait = (phases[j] - now).rem_euclid(timing.period);
                let slot = ((wait / timing.t_i) as usize).min(slots - 1);
                responders.push((slot, net.to_sink[holder] - net.to_sink[j], j));
            }
            // by slot, and by decreasing progress inside a slot
            responders.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
            let alpha = if policy.uses_threshold() { alphas[holder] } else { 0.0 };
            select(policy, alpha, &responders, slots)
        };
        if next != SINK && net.to_sink[next] >= net.to_sink[holder] {
            return Err(Error::Network(format!("hop {holder} -> {next} makes no progress")));
        }
        now += (slot + 1) as f64 * timing.t_i + timing.t_d;
        holder = next;
        path.push(next);
    }
    Ok(TransferOutcome { total_delay: now, hops: path.len() - 1, path })
}

/// Pick `(relay, answering slot)` from responders sorted by slot, best first.
fn select(policy: E2EPolicy, alpha: f64, resp: &[(usize, f64, usize)], slots: usize) -> (usize, usize) {
    let last_slot = resp[resp.len() - 1].0;
    let overall_best = || {
        let mut best = resp[0];
        for &r in resp {
            if r.1 > best.1 {
                best = r;
            }
        }
        best
    };
    match policy {
        E2EPolicy::FirstForward => (resp[0].2, resp[0].0),
        E2EPolicy::MaxForward => (overall_best().2, last_slot),
        E2EPolicy::Simplified | E2EPolicy::SimplifiedEstimated => {
            // the first entry of each slot is its contention winner
            let mut prev_slot = usize::MAX;
            for &(slot, progress, j) in resp {
                if slot != prev_slot && progress >= alpha {
                    return (j, slot);
                }
                prev_slot = slot;
            }
            let give_up = if policy == E2EPolicy::Simplified { last_slot } else { slots - 1 };
            (overall_best().2, give_up)
        }
    }
}

/// Single transfer at target `gamma`, with phases drawn from `seed`.
pub fn run_transfer(
    net: &NetworkInstance,
    timing: &ProtocolTiming,
    policy: E2EPolicy,
    gamma: f64,
    seed: u64,
    ceiling: CeilingRule,
) -> Result<TransferOutcome> {
    let alphas = if policy.uses_threshold() {
        ProgressModels::new(net)?.thresholds(net, policy, gamma, ceiling)?
    } else {
        Vec::new()
    };
    run_transfer_with(net, timing, policy, &alphas, &net.resample_phases(seed, 0))
}

/// Delay and hop count of every policy at every `gamma`. Topology is fixed;
/// transfer `i` uses the same phases under every policy and `gamma`. Rows are
/// ordered by policy, then `gamma`; policies without a threshold repeat their
/// single result at each `gamma`.
pub fn tradeoff_curve(
    net: &NetworkInstance,
    timing: &ProtocolTiming,
    gammas: &[f64],
    transfers: usize,
    seed: u64,
    ceiling: CeilingRule,
) -> Result<Vec<E2EOutcome>> {
    if transfers < 1 {
        return Err(domain("need at least one transfer"));
    }
    let phase_seed = derive_seed(seed, 0xE2E);
    let phases: Vec<Vec<f64>> = (0..transfers as u64).map(|i| net.resample_phases(phase_seed, i)).collect();
    let models = ProgressModels::new(net)?;
    let run = |policy: E2EPolicy, alphas: &[f64]| -> Result<(MeanSe, MeanSe)> {
        let out: Vec<(f64, f64)> = phases
            .par_iter()
            .map(|ph| run_transfer_with(net, timing, policy, alphas, ph).map(|o| (o.total_delay, o.hops as f64)))
            .collect::<Result<_>>()?;
        let (d, h): (Vec<f64>, Vec<f64>) = out.into_iter().unzip();
        Ok((MeanSe::from_samples(&d), MeanSe::from_samples(&h)))
    };
    let mut rows = Vec::new();
    for policy in E2EPolicy::ALL {
        let fixed = if policy.uses_threshold() { None } else { Some(run(policy, &[])?) };
        for &gamma in gammas {
            let (d, h) = match fixed {
                Some(v) => v,
                None => run(policy, &models.thresholds(net, policy, gamma, ceiling)?)?,
            };
            rows.push(E2EOutcome {
                policy,
                gamma,
                mean_total_delay: d.mean,
                se_delay: d.se,
                mean_hop_count: h.mean,
                se_hops: h.se,
                transfers,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn timing() -> ProtocolTiming {
        ProtocolTiming::new(0.005, 0.030, 1.0).unwrap()
    }

    #[test]
    fn timing_validation() {
        assert!(ProtocolTiming::new(0.03, 0.005, 1.0).is_err());
        assert_eq!(timing().slots_per_cycle(), 200);
    }

    #[test]
    fn networks_have_no_dead_ends_and_are_reproducible() {
        let a = generate_network(10.0, 5.0, 1.0, 1.0, 3).unwrap();
        let b = generate_network(10.0, 5.0, 1.0, 1.0, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.node_count() > 350 && a.node_count() < 650);
        for (i, f) in a.forwarding.iter().enumerate() {
            if i != SINK {
                assert!(!f.is_empty());
                for &j in f {
                    assert!(a.to_sink[j] < a.to_sink[i]);
                    assert!(dist(a.positions[i], a.positions[j]) <= 1.0);
                }
            }
        }
    }

    #[test]
    fn brute_force_forwarding_sets() {
        let net = generate_network(4.0, 3.0, 1.0, 1.0, 9).unwrap();
        for i in 0..net.node_count() {
            if i == SINK {
                continue;
            }
            let mut expect: Vec<usize> = (0..net.node_count())
                .filter(|&j| {
                    j != i && dist(net.positions[i], net.positions[j]) <= 1.0 && net.to_sink[j] < net.to_sink[i]
                })
                .collect();
            expect.sort_unstable();
            assert_eq!(net.forwarding[i], expect);
        }
    }

    #[test]
    fn single_hop_network() {
        let net = generate_network(1.0, 5.0, 2.0, 1.0, 1).unwrap();
        let out = run_transfer(&net, &timing(), E2EPolicy::FirstForward, 0.0, 1, CeilingRule::default()).unwrap();
        assert_eq!(out.hops, 1);
        assert!((out.total_delay - 0.035).abs() < 1e-12);
    }

    #[test]
    fn hop_properties_and_threshold_limits() {
        let net = generate_network(10.0, 5.0, 1.0, 1.0, 5).unwrap();
        let t = timing();
        let models = ProgressModels::new(&net).unwrap();
        let zero = models.thresholds(&net, E2EPolicy::Simplified, 0.0, CeilingRule::default()).unwrap();
        let lower = (net.side * 2f64.sqrt() / net.r_c).ceil() as usize;
        for s in 0..50 {
            let ph = net.resample_phases(77, s);
            let ff = run_transfer_with(&net, &t, E2EPolicy::FirstForward, &[], &ph).unwrap();
            let sf0 = run_transfer_with(&net, &t, E2EPolicy::Simplified, &zero, &ph).unwrap();
            assert_eq!(ff, sf0);
            assert!(ff.hops >= lower);
            assert!(ff.total_delay <= ff.hops as f64 * (1.0 + 0.03) + 1e-9);
            for w in ff.path.windows(2) {
                if w[1] != SINK {
                    assert!(net.to_sink[w[1]] < net.to_sink[w[0]]);
                }
            }
            // slot arithmetic: every delay is a sum of whole slots plus packet times
            let slots = (ff.total_delay - ff.hops as f64 * 0.03) / 0.005;
            assert!((slots - slots.round()).abs() < 1e-6);
            let mf = run_transfer_with(&net, &t, E2EPolicy::MaxForward, &[], &ph).unwrap();
            assert!(mf.total_delay >= t.t_i + t.t_d);
        }
    }

    #[test]
    fn max_forward_uses_fewer_hops_on_average() {
        let net = generate_network(10.0, 5.0, 1.0, 1.0, 6).unwrap();
        let rows = tradeoff_curve(&net, &timing(), &[0.5], 500, 2, CeilingRule::default()).unwrap();
        let get = |p| rows.iter().find(|r| r.policy == p).unwrap().clone();
        let (ff, mf) = (get(E2EPolicy::FirstForward), get(E2EPolicy::MaxForward));
        assert!(mf.mean_hop_count <= ff.mean_hop_count);
        assert!(ff.mean_total_delay <= mf.mean_total_delay);
        assert_eq!(rows.len(), 4);
    }
}
