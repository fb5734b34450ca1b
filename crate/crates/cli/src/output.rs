//! CSV tables and the sidecar run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use relaysel_core::e2e::E2EOutcome;
use relaysel_core::onehop::SimOutcome;
use relaysel_core::PolicyKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const ONEHOP_SCHEMA: &str = "relaysel.onehop/1";
pub const ONEHOP_HEADER: [&str; 8] =
    ["policy", "eta", "mean_delay", "se_delay", "mean_reward", "se_reward", "replications", "master_seed"];
pub const E2E_SCHEMA: &str = "relaysel.e2e/1";
pub const E2E_HEADER: [&str; 8] =
    ["policy", "gamma", "mean_total_delay", "se_delay", "mean_hop_count", "se_hops", "transfers", "topology_seed"];
pub const ALPHA_CURVE_SCHEMA: &str = "relaysel.alpha-curve/1";
pub const ALPHA_SCHEMA: &str = "relaysel.alpha/1";
pub const PHI_SCHEMA: &str = "relaysel.phi/1";
pub const MANIFEST_SCHEMA: &str = "relaysel.manifest/1";

/// Shortest round-trip decimal; never locale dependent.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A CSV table held in memory until written.
pub struct Table {
    buf: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Result<Self> {
        let mut buf = csv::Writer::from_writer(Vec::new());
        buf.write_record(header)?;
        Ok(Self { buf })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.buf.write_record(fields)?;
        Ok(())
    }

    pub fn into_bytes(self) -> Result<Vec<u8>> {
        self.buf.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))
    }
}

pub fn onehop_table(rows: &[SimOutcome], seed: u64) -> Result<Vec<u8>> {
    let mut t = Table::new(&ONEHOP_HEADER)?;
    for r in rows {
        t.row([
            r.policy.name().to_string(),
            num(r.eta),
            num(r.mean_delay),
            num(r.se_delay),
            num(r.mean_reward),
            num(r.se_reward),
            r.replications.to_string(),
            seed.to_string(),
        ])?;
    }
    t.into_bytes()
}

pub fn read_onehop_table(path: &Path) -> Result<Vec<SimOutcome>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ONEHOP_HEADER {
        anyhow::bail!("{} is not a one-hop sweep table (header {:?})", path.display(), header);
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let f = |k: usize| -> Result<f64> {
            rec[k].parse().with_context(|| format!("row {}: bad number in column {}", i + 2, ONEHOP_HEADER[k]))
        };
        out.push(SimOutcome {
            policy: rec[0].parse::<PolicyKind>()?,
            eta: f(1)?,
            mean_delay: f(2)?,
            se_delay: f(3)?,
            mean_reward: f(4)?,
            se_reward: f(5)?,
            replications: rec[6].parse().with_context(|| format!("row {}: bad replication count", i + 2))?,
        });
    }
    Ok(out)
}

pub fn e2e_table(rows: &[E2EOutcome], topology_seed: u64) -> Result<Vec<u8>> {
    let mut t = Table::new(&E2E_HEADER)?;
    for r in rows {
        t.row([
            r.policy.name().to_string(),
            num(r.gamma),
            num(r.mean_total_delay),
            num(r.se_delay),
            num(r.mean_hop_count),
            num(r.se_hops),
            r.transfers.to_string(),
            topology_seed.to_string(),
        ])?;
    }
    t.into_bytes()
}

/// Everything needed to rerun a command and check its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub output_schema: String,
    pub command: toml::Table,
    pub config_sha256: String,
    pub master_seed: u64,
    pub tool_version: String,
    pub core_version: String,
    pub wall_time_s: f64,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub output: String,
    pub output_sha256: String,
    pub config: String,
}

impl Manifest {
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.toml");
        output.with_file_name(name)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn store(&self, path: &Path) -> Result<()> {
        fs::write(path, toml::to_string(self)?).with_context(|| format!("writing {}", path.display()))
    }
}

/// Write `bytes` to `path`, or to stdout when `path` is `-`.
pub fn emit(path: &Path, bytes: &[u8]) -> Result<()> {
    if path == Path::new("-") {
        std::io::stdout().write_all(bytes)?;
        return Ok(());
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
