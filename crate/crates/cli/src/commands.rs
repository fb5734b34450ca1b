//! Subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use relaysel_core::cache::{CacheStatus, ThresholdCache};
use relaysel_core::e2e::{generate_network, tradeoff_curve, ProtocolTiming};
use relaysel_core::onehop::{match_gamma, refine_with, sweep_with};
use relaysel_core::simplified::AlphaCurve;
use relaysel_core::verify::{run_all, VerifyOptions};
use relaysel_core::{PolicyKind, SimplifiedSpec, ThresholdGrid};
use serde::{Deserialize, Serialize};

use crate::config::{parse_config, RunConfig};
use crate::output::{self, emit, num, sha256_hex, Manifest, Table};

#[derive(Debug, Parser)]
#[command(name = "relaysel", version, about = "Relay selection solvers and simulators for sleep-wake sensor networks")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
pub enum Command {
    /// Solve and cache the threshold tables for every multiplier in the config.
    SolveThresholds(SolveThresholdsArgs),
    /// Threshold of the simplified model for a multiplier or a reward target.
    SolveAlpha(SolveAlphaArgs),
    /// Mean reward of the simplified rule as a function of its threshold.
    AlphaCurve(ConfigOut),
    /// One-hop Monte Carlo sweep over the multipliers.
    SimulateOnehop(SimulateOnehopArgs),
    /// Pick, per policy, the sweep row whose mean reward is closest to a target.
    MatchGamma(MatchGammaArgs),
    /// End-to-end delay and hop count over a random network.
    SimulateE2e(SimulateE2eArgs),
    /// Run the self-check property suites.
    Verify(VerifyArgs),
    /// Rerun a command from its manifest and compare outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ConfigOut {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output CSV path, or `-` for stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SolveThresholdsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub io: ConfigOut,
    /// Solve only this multiplier.
    #[arg(long)]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SolveAlphaArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub io: ConfigOut,
    /// Reward target; the threshold then meets this mean reward.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Multiplier for the fixed-point threshold (overrides `solver.eta`).
    #[arg(long)]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateOnehopArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub io: ConfigOut,
    /// Comma-separated policy names (overrides `onehop.policies`).
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub policy: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MatchGammaArgs {
    /// Sweep table written by `simulate-onehop`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub policy: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateE2eArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub io: ConfigOut,
    /// Comma-separated reward targets (overrides `e2e.gammas`).
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gammas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Skip the brute-force oracle suites.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Where to write the reproduced output (default: the recorded path).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Config text either read from disk or carried in a manifest.
struct Loaded {
    text: String,
    cfg: RunConfig,
}

fn load(path: &Path, inline: Option<&str>) -> Result<Loaded> {
    let text = match inline {
        Some(t) => t.to_string(),
        None => fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?,
    };
    let cfg = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    Ok(Loaded { text, cfg })
}

/// Result of one command: the bytes written and bookkeeping for the manifest.
struct Produced {
    bytes: Vec<u8>,
    schema: &'static str,
    seed: u64,
    hits: usize,
    misses: usize,
}

fn policies_or(names: &[String], cfg: &RunConfig) -> Result<Vec<PolicyKind>> {
    if names.is_empty() {
        return cfg.policies();
    }
    names.iter().map(|n| n.parse::<PolicyKind>().map_err(Into::into)).collect()
}

/// Threshold tables for one multiplier, through the on-disk cache.
struct Solver<'a> {
    cfg: &'a RunConfig,
    cache: ThresholdCache,
    grid: relaysel_core::SolverGrid,
    dist: relaysel_core::RewardDistribution,
    model: relaysel_core::WakeModel,
    hits: usize,
    misses: usize,
}

impl<'a> Solver<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        Ok(Self {
            cfg,
            cache: ThresholdCache::from_env(),
            grid: cfg.grid()?,
            dist: cfg.reward()?,
            model: cfg.wake_model()?,
            hits: 0,
            misses: 0,
        })
    }

    fn tables(&mut self, eta: f64) -> relaysel_core::Result<Arc<ThresholdGrid>> {
        let (table, status) =
            self.cache.get_or_solve(self.grid, &self.dist, &self.model, eta, self.cfg.model.max_relays)?;
        match status {
            CacheStatus::Hit => self.hits += 1,
            CacheStatus::Miss => self.misses += 1,
        }
        Ok(Arc::new(table))
    }
}

fn solve_thresholds(a: &SolveThresholdsArgs, l: &Loaded) -> Result<Produced> {
    let cfg = &l.cfg;
    let mut solver = Solver::new(cfg)?;
    let etas = match a.eta.or(cfg.solver.eta) {
        Some(e) => vec![e],
        None => cfg.etas(),
    };
    let mut t = Table::new(&["eta", "level", "w", "b", "phi"])?;
    for &eta in &etas {
        let tg = solver.tables(eta)?;
        if a.io.out.is_some() {
            let g = tg.grid();
            for l in 0..tg.levels() {
                for i in 0..g.w_points {
                    for j in 0..g.b_points {
                        t.row([num(eta), l.to_string(), num(tg.w_node(i)), num(tg.b_node(j)), num(tg.node(l, i, j))])?;
                    }
                }
            }
        }
    }
    let (hits, misses) = (solver.hits, solver.misses);
    eprintln!("{} tables in {} ({hits} cached, {misses} solved)", etas.len(), solver.cache.dir().display());
    Ok(Produced { bytes: t.into_bytes()?, schema: output::PHI_SCHEMA, seed: cfg.master_seed, hits, misses })
}

fn simplified_relays(cfg: &RunConfig) -> Result<usize> {
    Ok(match cfg.alpha.relays {
        Some(n) => n,
        None => cfg.ceiling().apply(cfg.prior()?.mean()),
    })
}

fn solve_alpha(a: &SolveAlphaArgs, l: &Loaded) -> Result<Produced> {
    let cfg = &l.cfg;
    let dist = cfg.reward()?;
    let n = simplified_relays(cfg)?;
    let curve = AlphaCurve::new(dist.table(), n);
    let (eta, alpha) = match (a.gamma, a.eta.or(cfg.solver.eta)) {
        (Some(g), _) => {
            if !(0.0..=dist.support_max()).contains(&g) {
                bail!("gamma {g} outside [0, {}]", dist.support_max());
            }
            (None, curve.alpha_for(g))
        }
        (None, Some(eta)) => (Some(eta), SimplifiedSpec::new(n, cfg.model.period, eta, &dist)?.solve_alpha()),
        (None, None) => bail!("solve-alpha needs --gamma, --eta or solver.eta"),
    };
    let reward = curve.expected_reward(alpha);
    println!("relays = {n}\nalpha = {}\nexpected_reward = {}", num(alpha), num(reward));
    let mut t = Table::new(&["relays", "eta", "gamma", "alpha", "expected_reward"])?;
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    t.row([n.to_string(), opt(eta), opt(a.gamma), num(alpha), num(reward)])?;
    Ok(Produced { bytes: t.into_bytes()?, schema: output::ALPHA_SCHEMA, seed: cfg.master_seed, hits: 0, misses: 0 })
}

fn alpha_curve(l: &Loaded) -> Result<Produced> {
    let cfg = &l.cfg;
    let dist = cfg.reward()?;
    let curve = AlphaCurve::new(dist.table(), simplified_relays(cfg)?);
    let points = cfg.alpha.curve_points;
    let mut t = Table::new(&["alpha", "expected_reward"])?;
    for i in 0..points {
        let alpha = dist.support_max() * i as f64 / (points - 1) as f64;
        t.row([num(alpha), num(curve.expected_reward(alpha))])?;
    }
    Ok(Produced { bytes: t.into_bytes()?, schema: output::ALPHA_CURVE_SCHEMA, seed: cfg.master_seed, hits: 0, misses: 0 })
}

fn simulate_onehop(a: &SimulateOnehopArgs, l: &Loaded) -> Result<Produced> {
    let cfg = &l.cfg;
    let sim = cfg.onehop(Some(policies_or(&a.policy, cfg)?))?;
    let mut solver = Solver::new(cfg)?;
    let mut rows = sweep_with(&sim, |eta| solver.tables(eta))?;
    if let Some(gamma) = cfg.onehop.refine_gamma {
        rows = refine_with(&sim, &rows, gamma, cfg.onehop.refine_points, |eta| solver.tables(eta))?;
    }
    let (hits, misses) = (solver.hits, solver.misses);
    let bytes = output::onehop_table(&rows, cfg.master_seed)?;
    Ok(Produced { bytes, schema: output::ONEHOP_SCHEMA, seed: cfg.master_seed, hits, misses })
}

fn match_rows(a: &MatchGammaArgs) -> Result<Produced> {
    let rows = output::read_onehop_table(&a.input)?;
    let mut kinds: Vec<PolicyKind> = Vec::new();
    if a.policy.is_empty() {
        for r in &rows {
            if !kinds.contains(&r.policy) {
                kinds.push(r.policy);
            }
        }
    } else {
        for p in &a.policy {
            kinds.push(p.parse()?);
        }
    }
    let matched = kinds.iter().map(|&k| match_gamma(&rows, k, a.gamma)).collect::<relaysel_core::Result<Vec<_>>>()?;
    let seed = csv::Reader::from_path(&a.input)?
        .records()
        .next()
        .and_then(|r| r.ok())
        .and_then(|r| r.get(7).and_then(|s| s.parse().ok()))
        .unwrap_or(0);
    let bytes = output::onehop_table(&matched, seed)?;
    Ok(Produced { bytes, schema: output::ONEHOP_SCHEMA, seed, hits: 0, misses: 0 })
}

fn simulate_e2e(a: &SimulateE2eArgs, l: &Loaded) -> Result<Produced> {
    let cfg = &l.cfg;
    let e = &cfg.e2e;
    let gammas = if a.gammas.is_empty() { e.gammas.clone() } else { a.gammas.clone() };
    if let Some(g) = gammas.iter().find(|g| !(0.0..=e.radius).contains(*g)) {
        bail!("gamma {g} outside [0, radius = {}]", e.radius);
    }
    let period = cfg.model.period;
    let net = generate_network(e.side, e.density, e.radius, period, e.topology_seed)?;
    let timing = ProtocolTiming::new(e.slot_ms / 1000.0, e.packet_ms / 1000.0, period)?;
    let rows = tradeoff_curve(&net, &timing, &gammas, e.transfers, cfg.master_seed, cfg.ceiling())?;
    let bytes = output::e2e_table(&rows, e.topology_seed)?;
    Ok(Produced { bytes, schema: output::E2E_SCHEMA, seed: cfg.master_seed, hits: 0, misses: 0 })
}

fn verify(a: &VerifyArgs) -> Result<ExitCode> {
    let opts = VerifyOptions { seed: a.seed, oracle: !a.quick, ..Default::default() };
    let results = run_all(&opts);
    for r in &results {
        println!("{:<24} {}  {}", r.name, if r.passed { "pass" } else { "FAIL" }, r.detail);
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} suites passed", results.len());
    Ok(if passed == results.len() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

/// Run a producing command; write its output and manifest.
fn produce(command: &Command, inline_config: Option<&str>, out_override: Option<&Path>) -> Result<(Manifest, PathBuf)> {
    let start = Instant::now();
    let (produced, config_text, out) = match command {
        Command::SolveThresholds(a) => {
            let l = load(&a.io.config, inline_config)?;
            (solve_thresholds(a, &l)?, l.text, a.io.out.clone())
        }
        Command::SolveAlpha(a) => {
            let l = load(&a.io.config, inline_config)?;
            (solve_alpha(a, &l)?, l.text, a.io.out.clone())
        }
        Command::AlphaCurve(a) => {
            let l = load(&a.config, inline_config)?;
            let out = a.out.clone().or_else(|| l.cfg.output.as_ref().map(PathBuf::from));
            (alpha_curve(&l)?, l.text, Some(out.unwrap_or_else(|| "-".into())))
        }
        Command::SimulateOnehop(a) => {
            let l = load(&a.io.config, inline_config)?;
            let out = a.io.out.clone().or_else(|| l.cfg.output.as_ref().map(PathBuf::from));
            (simulate_onehop(a, &l)?, l.text, Some(out.unwrap_or_else(|| "-".into())))
        }
        Command::MatchGamma(a) => (match_rows(a)?, String::new(), Some(a.out.clone().unwrap_or_else(|| "-".into()))),
        Command::SimulateE2e(a) => {
            let l = load(&a.io.config, inline_config)?;
            let out = a.io.out.clone().or_else(|| l.cfg.output.as_ref().map(PathBuf::from));
            (simulate_e2e(a, &l)?, l.text, Some(out.unwrap_or_else(|| "-".into())))
        }
        Command::Verify(_) | Command::Replay(_) => unreachable!("not a producing command"),
    };
    // Commands whose table is optional produce nothing without a destination.
    let out = out_override.map(Path::to_path_buf).or(out);
    if let Some(out) = &out {
        emit(out, &produced.bytes)?;
    }
    let out = out.unwrap_or_else(|| "-".into());
    let manifest = Manifest {
        schema: output::MANIFEST_SCHEMA.into(),
        output_schema: produced.schema.into(),
        command: toml::Table::try_from(command)?,
        config_sha256: sha256_hex(config_text.as_bytes()),
        master_seed: produced.seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        core_version: relaysel_core::VERSION.into(),
        wall_time_s: start.elapsed().as_secs_f64(),
        cache_hits: produced.hits,
        cache_misses: produced.misses,
        output: out.display().to_string(),
        output_sha256: sha256_hex(&produced.bytes),
        config: config_text,
    };
    if out != Path::new("-") {
        manifest.store(&Manifest::path_for(&out))?;
    }
    Ok((manifest, out))
}

fn replay(a: &ReplayArgs) -> Result<ExitCode> {
    let recorded = Manifest::load(&a.manifest)?;
    if recorded.schema != output::MANIFEST_SCHEMA {
        bail!("unsupported manifest schema `{}`", recorded.schema);
    }
    let command: Command = recorded.command.clone().try_into().context("decoding recorded command")?;
    let inline = (!recorded.config.is_empty()).then_some(recorded.config.as_str());
    let target = a.out.clone().unwrap_or_else(|| PathBuf::from(&recorded.output));
    let (fresh, out) = produce(&command, inline, Some(&target))?;
    let same = fresh.output_sha256 == recorded.output_sha256;
    eprintln!(
        "replayed into {}: output {}",
        out.display(),
        if same { "identical" } else { "DIFFERS from the recorded hash" }
    );
    Ok(if same { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Verify(a) => verify(a),
        Command::Replay(a) => replay(a),
        other => {
            let (m, out) = produce(other, None, None)?;
            if out != Path::new("-") {
                eprintln!(
                    "wrote {} ({} cache hits, {} misses, {:.1}s)",
                    out.display(),
                    m.cache_hits,
                    m.cache_misses,
                    m.wall_time_s
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
