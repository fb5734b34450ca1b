//! TOML run configuration.
//!
//! A config is a flat file of `key = value` lines grouped into `[model]`,
//! `[solver]`, `[onehop]`, `[alpha]` and `[e2e]` sections. Only
//! `experiment` is required; everything else has a default.

use anyhow::{anyhow, bail, Context, Result};
use relaysel_core::model::{BeliefKind, DEFAULT_TABLE_CELLS};
use relaysel_core::onehop::{log_spaced, OneHopConfig};
use relaysel_core::{CeilingRule, InitialBelief, PolicyKind, RewardDistribution, SolverGrid, WakeModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SolveThresholds,
    SolveAlpha,
    AlphaCurve,
    SimulateOnehop,
    MatchGamma,
    SimulateE2e,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorFamily {
    TruncatedPoisson,
    Binomial,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ceiling {
    Strict,
    Standard,
}

impl From<Ceiling> for CeilingRule {
    fn from(c: Ceiling) -> Self {
        match c {
            Ceiling::Strict => CeilingRule::StrictlyGreater,
            Ceiling::Standard => CeilingRule::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default = "defaults::seed")]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub onehop: OneHopSection,
    #[serde(default)]
    pub alpha: AlphaSection,
    #[serde(default)]
    pub e2e: E2eSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub period: f64,
    pub reward: String,
    pub max_relays: usize,
    pub prior: PriorFamily,
    /// Poisson mean or binomial success probability; family default if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_param: Option<f64>,
    pub table_cells: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            period: 1.0,
            reward: "progress10".into(),
            max_relays: 50,
            prior: PriorFamily::TruncatedPoisson,
            prior_param: None,
            table_cells: DEFAULT_TABLE_CELLS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Single multiplier for `solve-thresholds` and `solve-alpha`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub w_points: usize,
    pub b_points: usize,
    pub ceiling: Ceiling,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { eta: None, w_points: 100, b_points: 100, ceiling: Ceiling::Strict }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OneHopSection {
    pub policies: Vec<String>,
    /// Explicit multipliers; overrides the log-spaced range when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub etas: Option<Vec<f64>>,
    pub eta_min: f64,
    pub eta_max: f64,
    pub eta_count: usize,
    pub replications: usize,
    /// Add points around this reward target after the sweep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine_gamma: Option<f64>,
    pub refine_points: usize,
}

impl Default for OneHopSection {
    fn default() -> Self {
        Self {
            policies: PolicyKind::ONE_HOP.iter().map(|k| k.name().to_string()).collect(),
            etas: None,
            eta_min: 0.1,
            eta_max: 1000.0,
            eta_count: 40,
            replications: 100_000,
            refine_gamma: None,
            refine_points: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlphaSection {
    /// Relay count of the simplified model; the rounded prior mean if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relays: Option<usize>,
    pub curve_points: usize,
}

impl Default for AlphaSection {
    fn default() -> Self {
        Self { relays: None, curve_points: 1001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct E2eSection {
    pub side: f64,
    pub density: f64,
    pub radius: f64,
    pub slot_ms: f64,
    pub packet_ms: f64,
    pub transfers: usize,
    pub topology_seed: u64,
    pub gammas: Vec<f64>,
}

impl Default for E2eSection {
    fn default() -> Self {
        Self {
            side: 10.0,
            density: 5.0,
            radius: 1.0,
            slot_ms: 5.0,
            packet_ms: 30.0,
            transfers: 1000,
            topology_seed: 7,
            gammas: (1..=9).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

mod defaults {
    pub fn seed() -> u64 {
        1
    }
}

/// 1-based line of `key` inside `[section]` (top level for `""`).
fn line_of(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Checker<'a> {
    text: &'a str,
    errors: Vec<String>,
}

impl Checker<'_> {
    fn require(&mut self, ok: bool, section: &str, key: &str, what: &str) {
        if ok {
            return;
        }
        let name = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        let at = match line_of(self.text, section, key) {
            Some(n) => format!("line {n}"),
            None => "default value".to_string(),
        };
        self.errors.push(format!("`{name}` ({at}) {what}"));
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow!("invalid config: {e}"))?;
    cfg.validate(text)?;
    Ok(cfg)
}

impl RunConfig {
    pub fn minimal(experiment: Experiment) -> Self {
        Self {
            experiment,
            master_seed: defaults::seed(),
            output: None,
            model: ModelSection::default(),
            solver: SolverSection::default(),
            onehop: OneHopSection::default(),
            alpha: AlphaSection::default(),
            e2e: E2eSection::default(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing config")
    }

    /// Range checks; `text` locates offending keys.
    pub fn validate(&self, text: &str) -> Result<()> {
        let mut c = Checker { text, errors: Vec::new() };
        let m = &self.model;
        c.require(m.period > 0.0 && m.period.is_finite(), "model", "period", "must be positive");
        c.require(m.max_relays >= 1, "model", "max_relays", "must be at least 1");
        c.require(m.table_cells >= 100, "model", "table_cells", "must be at least 100");
        c.require(RewardDistribution::preset(&m.reward).is_ok(), "model", "reward", "names no known reward preset");
        if let Some(p) = m.prior_param {
            let ok = match m.prior {
                PriorFamily::TruncatedPoisson => p > 0.0 && p.is_finite(),
                PriorFamily::Binomial => p > 0.0 && p <= 1.0,
                PriorFamily::Uniform => true,
            };
            c.require(ok, "model", "prior_param", "is outside the family's range");
        }
        let s = &self.solver;
        c.require(s.eta.is_none_or(|e| e > 0.0 && e.is_finite()), "solver", "eta", "must be positive");
        c.require(s.w_points >= 2, "solver", "w_points", "must be at least 2");
        c.require(s.b_points >= 2, "solver", "b_points", "must be at least 2");
        let o = &self.onehop;
        for p in &o.policies {
            c.require(p.parse::<PolicyKind>().is_ok(), "onehop", "policies", &format!("contains unknown policy `{p}`"));
        }
        c.require(!o.policies.is_empty(), "onehop", "policies", "must not be empty");
        if let Some(etas) = &o.etas {
            let ok = !etas.is_empty() && etas.iter().all(|e| *e > 0.0) && etas.windows(2).all(|w| w[0] <= w[1]);
            c.require(ok, "onehop", "etas", "must be a nonempty ascending list of positive numbers");
        }
        c.require(o.eta_min > 0.0, "onehop", "eta_min", "must be positive");
        c.require(o.eta_max >= o.eta_min, "onehop", "eta_max", "must not be below eta_min");
        c.require(o.eta_count >= 1, "onehop", "eta_count", "must be at least 1");
        c.require(o.replications >= 1, "onehop", "replications", "must be at least 1");
        c.require(o.refine_gamma.is_none_or(|g| g >= 0.0), "onehop", "refine_gamma", "must be nonnegative");
        c.require(self.alpha.relays.is_none_or(|n| n >= 1), "alpha", "relays", "must be at least 1");
        c.require(self.alpha.curve_points >= 2, "alpha", "curve_points", "must be at least 2");
        let e = &self.e2e;
        c.require(e.side > 0.0, "e2e", "side", "must be positive");
        c.require(e.density > 0.0, "e2e", "density", "must be positive");
        c.require(e.radius > 0.0, "e2e", "radius", "must be positive");
        c.require(e.slot_ms > 0.0, "e2e", "slot_ms", "must be positive");
        c.require(e.packet_ms > e.slot_ms, "e2e", "packet_ms", "must exceed slot_ms");
        c.require(e.packet_ms / 1000.0 < m.period, "e2e", "packet_ms", "must be shorter than the period");
        c.require(e.transfers >= 1, "e2e", "transfers", "must be at least 1");
        c.require(e.gammas.iter().all(|g| (0.0..=e.radius).contains(g)), "e2e", "gammas", "must lie in [0, radius]");
        if c.errors.is_empty() {
            Ok(())
        } else {
            bail!("invalid config: {}", c.errors.join("; "))
        }
    }

    pub fn wake_model(&self) -> Result<WakeModel> {
        Ok(WakeModel::new(self.model.period)?)
    }

    pub fn reward(&self) -> Result<RewardDistribution> {
        let preset = RewardDistribution::preset(&self.model.reward)?;
        if self.model.table_cells == DEFAULT_TABLE_CELLS {
            return Ok(preset);
        }
        Ok(RewardDistribution::with_cells(preset.kind().clone(), self.model.table_cells)?)
    }

    pub fn prior(&self) -> Result<InitialBelief> {
        let m = &self.model;
        let kind = match m.prior {
            PriorFamily::TruncatedPoisson => BeliefKind::TruncatedPoisson { lambda: m.prior_param.unwrap_or(10.0) },
            PriorFamily::Binomial => BeliefKind::Binomial { q: m.prior_param.unwrap_or(0.5) },
            PriorFamily::Uniform => BeliefKind::Uniform,
        };
        Ok(InitialBelief::new(kind, m.max_relays)?)
    }

    pub fn grid(&self) -> Result<SolverGrid> {
        Ok(SolverGrid::new(self.solver.w_points, self.solver.b_points)?)
    }

    pub fn ceiling(&self) -> CeilingRule {
        self.solver.ceiling.into()
    }

    pub fn etas(&self) -> Vec<f64> {
        match &self.onehop.etas {
            Some(v) => v.clone(),
            None => log_spaced(self.onehop.eta_min, self.onehop.eta_max, self.onehop.eta_count),
        }
    }

    pub fn policies(&self) -> Result<Vec<PolicyKind>> {
        self.onehop.policies.iter().map(|p| p.parse::<PolicyKind>().map_err(Into::into)).collect()
    }

    pub fn onehop(&self, policies: Option<Vec<PolicyKind>>) -> Result<OneHopConfig> {
        Ok(OneHopConfig {
            model: self.wake_model()?,
            dist: self.reward()?,
            belief: self.prior()?,
            policies: match policies {
                Some(p) => p,
                None => self.policies()?,
            },
            etas: self.etas(),
            replications: self.onehop.replications,
            master_seed: self.master_seed,
            grid: self.grid()?,
            ceiling: self.ceiling(),
        })
    }
}
