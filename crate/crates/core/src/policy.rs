//! Stop/continue rules behind one decision interface.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::belief::{BeliefState, HopObservation};
use crate::error::{Error, Result};
use crate::threshold::{edge_threshold, ThresholdGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    /// Knows the relay count; thresholds `phi_{n-k}`.
    Comdp,
    /// Stops inside the inner approximation of the stopping set.
    Inner,
    /// Stops inside the outer approximation of the stopping set.
    Outer,
    /// Pretends the relay count equals its rounded-up mean.
    AComdp,
    /// Single reward threshold from the simplified model.
    ASimpl,
    FirstForward,
    MaxForward,
}

impl PolicyKind {
    pub const ONE_HOP: [PolicyKind; 5] =
        [PolicyKind::Comdp, PolicyKind::Inner, PolicyKind::Outer, PolicyKind::AComdp, PolicyKind::ASimpl];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Comdp => "comdp",
            PolicyKind::Inner => "inner",
            PolicyKind::Outer => "outer",
            PolicyKind::AComdp => "a-comdp",
            PolicyKind::ASimpl => "a-simpl",
            PolicyKind::FirstForward => "ff",
            PolicyKind::MaxForward => "mf",
        }
    }

    pub fn needs_thresholds(self) -> bool {
        matches!(self, PolicyKind::Comdp | PolicyKind::Inner | PolicyKind::Outer | PolicyKind::AComdp)
    }

    pub fn needs_belief(self) -> bool {
        matches!(self, PolicyKind::Inner | PolicyKind::Outer)
    }

    pub fn needs_known_count(self) -> bool {
        matches!(self, PolicyKind::Comdp | PolicyKind::MaxForward)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "comdp" => PolicyKind::Comdp,
            "inner" => PolicyKind::Inner,
            "outer" => PolicyKind::Outer,
            "a-comdp" | "acomdp" => PolicyKind::AComdp,
            "a-simpl" | "asimpl" => PolicyKind::ASimpl,
            "ff" => PolicyKind::FirstForward,
            "mf" => PolicyKind::MaxForward,
            other => {
                return Err(Error::Config(format!(
                    "unknown policy `{other}`; expected comdp, inner, outer, a-comdp, a-simpl, ff or mf"
                )))
            }
        })
    }
}

/// Integer rounding of a mean relay count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CeilingRule {
    /// Smallest integer strictly greater than `x` (10 becomes 11).
    #[default]
    StrictlyGreater,
    /// Smallest integer not below `x` (10 stays 10).
    Standard,
}

impl CeilingRule {
    pub fn apply(self, x: f64) -> usize {
        let v = match self {
            CeilingRule::StrictlyGreater => x.floor() + 1.0,
            CeilingRule::Standard => x.ceil(),
        };
        v.max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Stop,
    Continue,
}

/// Policy identity and its scalar parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub n_bar: Option<usize>,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self { kind, eta: None, alpha: None, n_bar: None }
    }
}

/// What a policy may look at when deciding.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub belief: Option<&'a BeliefState>,
    pub obs: HopObservation,
    pub known_n: Option<usize>,
}

/// A ready-to-run policy: spec plus the threshold tables it needs.
#[derive(Debug, Clone)]
pub struct Policy {
    spec: PolicySpec,
    period: f64,
    thresholds: Option<Arc<ThresholdGrid>>,
}

impl Policy {
    pub fn new(spec: PolicySpec, period: f64, thresholds: Option<Arc<ThresholdGrid>>) -> Result<Self> {
        let kind = spec.kind;
        let missing = |what: &str| Error::Config(format!("policy {kind} needs {what}"));
        if kind.needs_thresholds() && thresholds.is_none() {
            return Err(missing("threshold tables"));
        }
        if kind == PolicyKind::ASimpl && spec.alpha.is_none() {
            return Err(missing("a reward threshold alpha"));
        }
        if kind == PolicyKind::AComdp {
            let n_bar = spec.n_bar.ok_or_else(|| missing("a mean relay count"))?;
            let levels = thresholds.as_ref().map_or(0, |t| t.levels());
            if n_bar == 0 || n_bar > levels {
                return Err(Error::Config(format!("mean relay count {n_bar} outside 1..={levels}")));
            }
        }
        Ok(Self { spec, period, thresholds })
    }

    pub fn kind(&self) -> PolicyKind {
        self.spec.kind
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn decide(&self, ctx: &DecisionContext<'_>) -> Result<Action> {
        if let Some(a) = forced_terminal(&ctx.obs, self.period) {
            return Ok(a);
        }
        let obs = &ctx.obs;
        let stop_if = |c: bool| if c { Action::Stop } else { Action::Continue };
        match self.spec.kind {
            PolicyKind::FirstForward => Ok(Action::Stop),
            PolicyKind::MaxForward => Ok(stop_if(obs.stage >= self.known_n(ctx)?)),
            PolicyKind::ASimpl => Ok(stop_if(obs.b >= self.spec.alpha.unwrap_or(0.0))),
            PolicyKind::Comdp => Ok(self.tables().comdp_decision(self.known_n(ctx)?, obs)),
            PolicyKind::AComdp => Ok(self.tables().comdp_decision(self.spec.n_bar.unwrap_or(1), obs)),
            PolicyKind::Inner | PolicyKind::Outer => {
                let belief = ctx
                    .belief
                    .ok_or_else(|| Error::Config(format!("policy {} needs a belief", self.spec.kind)))?;
                self.bound_decision(belief, obs)
            }
        }
    }

    fn bound_decision(&self, belief: &BeliefState, obs: &HopObservation) -> Result<Action> {
        let tg = self.tables();
        let k = belief.stage();
        let masses = belief.masses();
        let span = self.period - obs.w;
        let p = tg.locate(obs.w, obs.b);
        let top = tg.levels().saturating_sub(k.max(1)).min(masses.len() - 1);
        let inner = self.spec.kind == PolicyKind::Inner;
        let mut load = 0.0;
        let mut widest = 0.0f64;
        for l in 1..=top {
            let mass = masses[l];
            if inner && mass == 0.0 {
                continue;
            }
            let d = edge_threshold(span, tg.eta(), obs.b, tg.phi_at(l, &p))?;
            if inner {
                if d.is_finite() {
                    load += mass / d;
                }
            } else {
                widest = widest.max(d);
            }
        }
        let stop = if inner {
            crate::bounds::inner_contains(&[masses[0], load], &[1.0])
        } else {
            top == 0 || crate::bounds::outer_contains(&masses[..1], &[widest])
        };
        Ok(if stop { Action::Stop } else { Action::Continue })
    }

    fn known_n(&self, ctx: &DecisionContext<'_>) -> Result<usize> {
        ctx.known_n
            .ok_or_else(|| Error::Config(format!("policy {} needs the true relay count", self.spec.kind)))
    }

    fn tables(&self) -> &ThresholdGrid {
        self.thresholds.as_deref().expect("checked at construction")
    }
}

/// Every rule stops once the cycle is over.
pub fn forced_terminal(obs: &HopObservation, period: f64) -> Option<Action> {
    (obs.w >= period).then_some(Action::Stop)
}
