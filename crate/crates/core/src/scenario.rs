//! Scenario files.
//!
//! A scenario is a TOML document: top-level run settings, a
//! `[performance_weights]` table, one `[[sweep]]` table per trust request
//! and one `[[service]]` table per simulated data service. See
//! `docs/scenario-format.md` for the full grammar.

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::sim::ServiceProfile;
use crate::trust::{PerformanceWeights, TrustWeights};
use crate::ServiceId;

/// The bundled seven-service, three-tier scenario.
pub const BUNDLED_SCENARIO: &str = include_str!("../scenarios/paper_scenario.toml");
pub const BUNDLED_SCENARIO_NAME: &str = "paper_scenario";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    duration: f64,
    seed: u64,
    validity_interval: f64,
    #[serde(default = "default_probe_period")]
    probe_period: f64,
    #[serde(default = "default_sampling_period")]
    sampling_period: f64,
    #[serde(default = "default_evaluation_window")]
    evaluation_window: f64,
    #[serde(default = "default_query_limit")]
    query_limit: usize,
    #[serde(default = "default_deadline_factor")]
    deadline_factor: f64,
    max_factor_age: Option<f64>,
    performance_weights: Option<RawPerformanceWeights>,
    sweep: Vec<RawWeights>,
    service: Vec<RawService>,
}

fn default_probe_period() -> f64 {
    crate::pmm::DEFAULT_PROBE_PERIOD
}
fn default_sampling_period() -> f64 {
    crate::dqmm::DEFAULT_SAMPLING_PERIOD
}
fn default_evaluation_window() -> f64 {
    crate::pmm::DEFAULT_EVALUATION_WINDOW
}
fn default_query_limit() -> usize {
    crate::dqmm::DEFAULT_QUERY_LIMIT
}
fn default_deadline_factor() -> f64 {
    crate::pmm::DEFAULT_DEADLINE_FACTOR
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPerformanceWeights {
    availability: f64,
    task_success: f64,
    time_efficiency: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    alpha: f64,
    beta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawService {
    id: String,
    production_period: f64,
    insertion_period: f64,
    #[serde(default = "one")]
    accept_probability: f64,
    #[serde(default = "one")]
    success_probability: f64,
    base_latency_ms: f64,
    #[serde(default)]
    latency_jitter_ms: f64,
    cpu_tier: u32,
    sla_ert_ms: f64,
    #[serde(default)]
    downtime: Vec<[f64; 2]>,
}

fn one() -> f64 {
    1.0
}

/// A simulated service plus the SLA the monitor holds it to.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceSpec {
    pub profile: ServiceProfile,
    pub sla_ert_ms: f64,
}

impl ServiceSpec {
    pub fn id(&self) -> &ServiceId {
        &self.profile.service_id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    /// Virtual (or wall) seconds to run.
    pub duration: f64,
    pub seed: u64,
    pub validity_interval: f64,
    pub probe_period: f64,
    pub sampling_period: f64,
    pub evaluation_window: f64,
    pub query_limit: usize,
    /// Probe deadline as a multiple of each service's SLA.
    pub deadline_factor: f64,
    pub max_factor_age: f64,
    pub performance_weights: PerformanceWeights,
    pub sweep: Vec<TrustWeights>,
    pub services: Vec<ServiceSpec>,
}

/// SplitMix64 step; derives independent per-service seeds.
fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be > 0, got {v}")))
    }
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |i| before.len() - i - 1)
        + 1;
    (line, column)
}

impl ScenarioConfig {
    pub fn from_toml_str(src: &str) -> Result<Self, ConfigError> {
        let raw: RawScenario = toml::from_str(src).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(src, s.start));
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_owned(),
            }
        })?;
        Self::from_raw(raw)
    }

    /// Loads a scenario file, or the bundled scenario by name.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        if path.as_os_str() == BUNDLED_SCENARIO_NAME && !path.exists() {
            return Self::bundled();
        }
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&src)
    }

    pub fn bundled() -> Result<Self, ConfigError> {
        Self::from_toml_str(BUNDLED_SCENARIO)
    }

    fn from_raw(raw: RawScenario) -> Result<Self, ConfigError> {
        let duration = positive("duration", raw.duration)?;
        let validity_interval = positive("validity_interval", raw.validity_interval)?;
        let probe_period = positive("probe_period", raw.probe_period)?;
        let sampling_period = positive("sampling_period", raw.sampling_period)?;
        let evaluation_window = positive("evaluation_window", raw.evaluation_window)?;
        let deadline_factor = positive("deadline_factor", raw.deadline_factor)?;
        if evaluation_window < probe_period {
            return Err(invalid(
                "evaluation_window",
                format!("must be >= probe_period ({probe_period}), got {evaluation_window}"),
            ));
        }
        if duration < evaluation_window {
            return Err(invalid(
                "duration",
                format!("{duration} s is shorter than one evaluation window ({evaluation_window} s); no level would ever be evaluated"),
            ));
        }
        if raw.query_limit == 0 {
            return Err(invalid("query_limit", "must be >= 1"));
        }
        let max_factor_age = match raw.max_factor_age {
            Some(v) => positive("max_factor_age", v)?,
            None => 2.0 * evaluation_window,
        };
        let performance_weights = match raw.performance_weights {
            Some(w) => PerformanceWeights::new(w.availability, w.task_success, w.time_efficiency)
                .map_err(|e| invalid("performance_weights", e.to_string()))?,
            None => PerformanceWeights::equal(),
        };
        if raw.sweep.is_empty() {
            return Err(invalid(
                "sweep",
                "at least one (alpha, beta) pair is required",
            ));
        }
        let sweep = raw
            .sweep
            .iter()
            .enumerate()
            .map(|(i, w)| {
                TrustWeights::new(w.alpha, w.beta)
                    .map_err(|e| invalid(format!("sweep[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if raw.service.is_empty() {
            return Err(invalid("service", "at least one service is required"));
        }
        let mut seen = HashSet::new();
        let mut services = Vec::with_capacity(raw.service.len());
        for (i, s) in raw.service.into_iter().enumerate() {
            let field = |name: &str| format!("service[{i}].{name}");
            if s.id.is_empty()
                || !s
                    .id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(invalid(
                    field("id"),
                    format!("{:?} must be non-empty [A-Za-z0-9_-]", s.id),
                ));
            }
            if !seen.insert(s.id.clone()) {
                return Err(invalid(
                    field("id"),
                    format!("duplicate service id {:?}", s.id),
                ));
            }
            let sla_ert_ms = positive(&field("sla_ert_ms"), s.sla_ert_ms)?;
            let profile = ServiceProfile {
                service_id: s.id.into(),
                production_period: s.production_period,
                insertion_period: s.insertion_period,
                accept_probability: s.accept_probability,
                success_probability: s.success_probability,
                base_latency_ms: s.base_latency_ms,
                latency_jitter_ms: s.latency_jitter_ms,
                cpu_tier: s.cpu_tier,
                rng_seed: mix_seed(raw.seed, i as u64),
                downtime: s.downtime.iter().map(|&[a, b]| (a, b)).collect(),
            };
            profile.validate().map_err(|e| {
                let msg = e.to_string();
                let name = [
                    "production_period",
                    "insertion_period",
                    "accept_probability",
                    "success_probability",
                    "base_latency_ms",
                    "latency_jitter_ms",
                    "cpu_tier",
                    "downtime",
                ]
                .into_iter()
                .find(|n| msg.contains(n))
                .unwrap_or("profile");
                invalid(field(name), msg)
            })?;
            if sampling_period > profile.insertion_period / 2.0 {
                tracing::warn!(
                    service = %profile.service_id,
                    sampling_period,
                    insertion_period = profile.insertion_period,
                    "sampling slower than half the insertion period; insertions may go undetected"
                );
            }
            services.push(ServiceSpec {
                profile,
                sla_ert_ms,
            });
        }
        Ok(ScenarioConfig {
            name: raw.name,
            duration,
            seed: raw.seed,
            validity_interval,
            probe_period,
            sampling_period,
            evaluation_window,
            query_limit: raw.query_limit,
            deadline_factor,
            max_factor_age,
            performance_weights,
            sweep,
            services,
        })
    }

    /// Replaces the global seed and re-derives every service seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        for (i, s) in self.services.iter_mut().enumerate() {
            s.profile.rng_seed = mix_seed(seed, i as u64);
        }
        self
    }

    pub fn max_tier(&self) -> u32 {
        self.services
            .iter()
            .map(|s| s.profile.cpu_tier)
            .max()
            .unwrap_or(1)
    }

    pub fn service_ids(&self) -> Vec<ServiceId> {
        self.services.iter().map(|s| s.id().clone()).collect()
    }

    pub fn deadline_ms(&self, spec: &ServiceSpec) -> f64 {
        self.deadline_factor * spec.sla_ert_ms
    }

    /// Window boundaries `(start, end)` covering the run; a trailing partial
    /// window is included.
    pub fn windows(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut k = 0u64;
        loop {
            let start = k as f64 * self.evaluation_window;
            if start >= self.duration {
                break;
            }
            let end = ((k + 1) as f64 * self.evaluation_window).min(self.duration);
            out.push((start, end));
            k += 1;
        }
        out
    }
}
