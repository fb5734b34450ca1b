//! On-disk cache of solved threshold tables, keyed by a content hash of every
//! input that changes `phi`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{RewardDistribution, WakeModel};
use crate::threshold::{solve_phi, SolverGrid, ThresholdGrid};

/// Environment variable naming the cache directory.
pub const CACHE_DIR_ENV: &str = "RELAYSEL_CACHE_DIR";
const DEFAULT_DIR: &str = ".relaysel-cache";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdCache {
    dir: PathBuf,
}

/// Whether a lookup was served from disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
}

impl ThresholdCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `$RELAYSEL_CACHE_DIR`, or `.relaysel-cache` in the working directory.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| DEFAULT_DIR.into()))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Hex SHA-256 of the solver inputs.
    pub fn key(grid: SolverGrid, dist: &RewardDistribution, model: &WakeModel, eta: f64, k_max: usize) -> String {
        let desc = format!(
            "phi-v1|eta={:016x}|K={k_max}|T={:016x}|grid={}x{}|reward={:?}|cells={}",
            eta.to_bits(),
            model.period().to_bits(),
            grid.w_points,
            grid.b_points,
            dist.kind(),
            dist.table().cells(),
        );
        let digest = Sha256::digest(desc.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.phi"))
    }

    pub fn load(&self, key: &str) -> Result<Option<ThresholdGrid>> {
        let path = self.path(key);
        if !path.exists() {
            return Ok(None);
        }
        let file = fs::File::open(&path)?;
        ThresholdGrid::read_from(BufReader::new(file))
            .map(Some)
            .map_err(|e| Error::Cache(format!("{}: {e}", path.display())))
    }

    /// Write atomically through a temporary file in the same directory.
    pub fn store(&self, key: &str, table: &ThresholdGrid) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!("{key}.phi.tmp{}", std::process::id()));
        {
            let mut out = BufWriter::new(fs::File::create(&tmp)?);
            table.write_to(&mut out)?;
            std::io::Write::flush(&mut out)?;
        }
        fs::rename(&tmp, self.path(key))?;
        Ok(())
    }

    /// Cached table if present, otherwise solve and store.
    pub fn get_or_solve(
        &self,
        grid: SolverGrid,
        dist: &RewardDistribution,
        model: &WakeModel,
        eta: f64,
        k_max: usize,
    ) -> Result<(ThresholdGrid, CacheStatus)> {
        let key = Self::key(grid, dist, model, eta, k_max);
        if let Some(table) = self.load(&key)? {
            return Ok((table, CacheStatus::Hit));
        }
        let table = solve_phi(grid, dist, model, eta, k_max)?;
        self.store(&key, &table)?;
        Ok((table, CacheStatus::Miss))
    }
}
