use epr_core::{EprConfig, ThresholdModel};
use serde::Serialize;

/// JSON side-file written next to every sparse similarity CSV.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub strategy: String,
    pub config: EprConfig,
    pub db_path: String,
    pub query_path: String,
    pub similarity_path: String,
    pub manifest_path: String,
    pub db_count: usize,
    pub q_count: usize,
    pub timing: Timing,
    /// 0-based query indices that triggered a full comparison.
    pub reloc_events: Vec<usize>,
    pub evaluated_pairs: usize,
    /// Evaluated pairs as a percentage of |DB| x |Q|.
    pub density: f64,
    pub theta_db: Option<ThresholdModel>,
    pub theta_reloc: Option<ThresholdModel>,
}

/// Wall-clock seconds per phase: loading inputs, intra-database setup and
/// the query loop. `total_seconds` also covers writing the outputs.
#[derive(Debug, Serialize)]
pub struct Timing {
    pub init_seconds: f64,
    pub sdb_seconds: f64,
    pub query_loop_seconds: f64,
    pub total_seconds: f64,
}
