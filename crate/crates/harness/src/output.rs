use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use iic_core::rng::derive_seed;

use crate::config::{ExperimentConfig, Kind, ModelConfig};
use crate::{Flags, RunError, RunOutput};

/// Seeds are listed in the manifest up to this many trials.
const LISTED_SEEDS: u64 = 10_000;

pub const SEED_RULE: &str = "trial i uses derive_seed(master_seed, i) = mix64(mix64(master_seed ^ 0x5eed0f7a1a1000) + i * 0x9e3779b97f4a7c15), mix64 = SplitMix64 finalizer";

/// CSV body: a header and string cells.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j].as_str()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub kind: Kind,
    pub config: ExperimentConfig,
    pub seed_rule: String,
    pub master_seed: u64,
    pub seed_count: u64,
    /// All derived seeds when there are at most 10^4 of them.
    pub seeds: Option<Vec<u64>>,
    /// `p` and its uncertainty for lattice models.
    pub p: Option<f64>,
    pub p_uncertainty: Option<f64>,
    /// SHA-256 of every file written, by path relative to the output dir.
    pub artifacts: BTreeMap<String, String>,
    pub elapsed_secs: f64,
    pub threads: usize,
    pub flags: Flags,
    pub status: String,
    pub partial: bool,
    pub summary: serde_json::Value,
}

fn sha256_file(path: &Path) -> Result<String, RunError> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn csv_error(e: csv::Error) -> RunError {
    RunError::Io(e.to_string())
}

/// Writes `<kind>.csv`, any sample graphs and `manifest.json` into `out`.
pub fn write_run(
    kind: Kind,
    config: &ExperimentConfig,
    output: &RunOutput,
    out: &Path,
    elapsed_secs: f64,
) -> Result<Manifest, RunError> {
    fs::create_dir_all(out)?;
    let mut artifacts = BTreeMap::new();
    let csv_name = format!("{}.csv", kind.name());
    let csv_path = out.join(&csv_name);
    {
        let mut w = csv::Writer::from_path(&csv_path).map_err(csv_error)?;
        w.write_record(&output.table.header).map_err(csv_error)?;
        for row in &output.table.rows {
            w.write_record(row).map_err(csv_error)?;
        }
        w.flush()?;
    }
    artifacts.insert(csv_name, sha256_file(&csv_path)?);
    if !output.graphs.is_empty() {
        fs::create_dir_all(out.join("graphs"))?;
        for (name, g) in &output.graphs {
            let rel = format!("graphs/{name}.graph");
            let path = out.join(&rel);
            g.write_to(BufWriter::new(fs::File::create(&path)?))?;
            artifacts.insert(rel, sha256_file(&path)?);
        }
    }
    let (p, p_uncertainty) = match config.model {
        Some(ModelConfig::Lattice { p, p_uncertainty, .. } | ModelConfig::LatticeIic { p, p_uncertainty, .. }) => {
            (Some(p), p_uncertainty)
        }
        Some(ModelConfig::Bethe { ell, p }) => (Some(p.unwrap_or(1.0 / (ell as f64 - 1.0))), None),
        _ => (None, None),
    };
    let seeds = (output.seeds <= LISTED_SEEDS).then(|| (0..output.seeds).map(|i| derive_seed(config.master_seed, i)).collect());
    let manifest = Manifest {
        tool: "iic-lab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind,
        config: config.clone(),
        seed_rule: SEED_RULE.into(),
        master_seed: config.master_seed,
        seed_count: output.seeds,
        seeds,
        p,
        p_uncertainty,
        artifacts,
        elapsed_secs,
        threads: rayon::current_num_threads(),
        flags: output.flags,
        status: output.failure.as_ref().map_or("ok".into(), |e| format!("failed: {e}")),
        partial: output.failure.is_some(),
        summary: output.summary.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::Io(e.to_string()))?;
    fs::write(out.join("manifest.json"), text + "\n")?;
    Ok(manifest)
}
