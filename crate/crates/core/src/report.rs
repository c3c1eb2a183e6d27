//! Trust reports and their JSON / CSV exports.
//!
//! A trust report is a serialized [`Ranking`]:
//!
//! ```json
//! {
//!   "requested_at": 3600.0,
//!   "weights": { "alpha": 0.5, "beta": 0.5 },
//!   "ranking": [
//!     { "rank": 1, "service_id": "S21", "trust": 0.61, "performance": 0.92,
//!       "performance_evaluated_at": 3600.0, "data_quality": 0.30,
//!       "data_quality_evaluated_at": 3600.0, "data_timeliness": 0.40,
//!       "database_timeliness": 0.75 }
//!   ],
//!   "omitted": [ { "service_id": "S99", "reason": "..." } ]
//! }
//! ```
//!
//! A sweep report bundles one trust report per weight pair. Its CSV form is
//! the rank-by-weights table: one row per rank position, one column per
//! weight pair, cells holding service ids.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::scenario::ScenarioConfig;
use crate::sim::LogEntry;
use crate::tmm::Ranking;
use crate::trust::TrustWeights;

pub type TrustReport = Ranking;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario: String,
    pub seed: u64,
    pub requested_at: f64,
    pub reports: Vec<TrustReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(format!("unknown format {other:?}, expected json or csv")),
        }
    }
}

/// Column label for a weight pair, e.g. `alpha=0.7 beta=0.3`.
pub fn column_label(w: &TrustWeights) -> String {
    format!("alpha={} beta={}", w.alpha(), w.beta())
}

/// File name of the trust report for a weight pair.
pub fn report_file_name(w: &TrustWeights) -> String {
    format!("trust_report_alpha{}_beta{}.json", w.alpha(), w.beta())
}

impl SweepReport {
    pub fn new(config: &ScenarioConfig, requested_at: f64, reports: Vec<TrustReport>) -> Self {
        SweepReport {
            scenario: config.name.clone(),
            seed: config.seed,
            requested_at,
            reports,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// Rank rows by sweep columns. With no ranked service at all only the
    /// header is written.
    pub fn summary_csv(&self) -> String {
        summary_csv(&self.reports)
    }

    pub fn export(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Json => self.to_json(),
            ExportFormat::Csv => self.summary_csv(),
        }
    }
}

pub fn summary_csv(reports: &[TrustReport]) -> String {
    let mut out = String::from("rank");
    for r in reports {
        let _ = write!(out, ",{}", column_label(&r.weights));
    }
    out.push('\n');
    let rows = reports.iter().map(|r| r.ranking.len()).max().unwrap_or(0);
    for i in 0..rows {
        let _ = write!(out, "{}", i + 1);
        for r in reports {
            out.push(',');
            if let Some(entry) = r.ranking.get(i) {
                out.push_str(entry.service_id.as_str());
            }
        }
        out.push('\n');
    }
    out
}

pub fn trust_report_json(report: &TrustReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

/// Files written by a run.
pub struct RunArtifacts<'a> {
    pub sweep: &'a SweepReport,
    pub probes_csv: Vec<u8>,
    pub samples_csv: Vec<u8>,
    pub event_log: &'a [LogEntry],
}

/// Writes the per-request trust reports, the sweep summary (JSON and CSV),
/// the probe and sample exports and the simulation event log into `dir`.
pub fn write_run(dir: &Path, artifacts: &RunArtifacts<'_>) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, contents: &[u8]| -> std::io::Result<()> {
        let path = dir.join(name);
        fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    for report in &artifacts.sweep.reports {
        put(
            report_file_name(&report.weights),
            trust_report_json(report).as_bytes(),
        )?;
    }
    put(
        "sweep_report.json".into(),
        artifacts.sweep.to_json().as_bytes(),
    )?;
    put(
        "summary.csv".into(),
        artifacts.sweep.summary_csv().as_bytes(),
    )?;
    put("probes.csv".into(), &artifacts.probes_csv)?;
    put("samples.csv".into(), &artifacts.samples_csv)?;
    if !artifacts.event_log.is_empty() {
        let mut log = String::new();
        for e in artifacts.event_log {
            let _ = writeln!(log, "{e}");
        }
        put("events.log".into(), log.as_bytes())?;
    }
    Ok(written)
}
