use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::ServiceId;

/// Behaviour of one simulated black-box data service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceProfile {
    pub service_id: ServiceId,
    /// Seconds between two produced items.
    pub production_period: f64,
    /// Seconds between two insertions (flushes) into the queryable store.
    pub insertion_period: f64,
    pub accept_probability: f64,
    /// Probability that an accepted request delivers its data.
    pub success_probability: f64,
    pub base_latency_ms: f64,
    /// Upper bound of the uniform latency jitter, ms.
    pub latency_jitter_ms: f64,
    /// Resource tier; higher tiers answer faster.
    pub cpu_tier: u32,
    pub rng_seed: u64,
    /// Optional `[start, end)` intervals (seconds from spawn) during which
    /// every request is denied.
    #[serde(default)]
    pub downtime: Vec<(f64, f64)>,
}

impl ServiceProfile {
    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::InvalidProfile(self.service_id.clone(), msg));
        if !(self.production_period > 0.0 && self.production_period.is_finite()) {
            return invalid(format!(
                "production_period must be > 0, got {}",
                self.production_period
            ));
        }
        if !(self.insertion_period > 0.0 && self.insertion_period.is_finite()) {
            return invalid(format!(
                "insertion_period must be > 0, got {}",
                self.insertion_period
            ));
        }
        for (name, p) in [
            ("accept_probability", self.accept_probability),
            ("success_probability", self.success_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("{name} must be in [0,1], got {p}"));
            }
        }
        for (name, v) in [
            ("base_latency_ms", self.base_latency_ms),
            ("latency_jitter_ms", self.latency_jitter_ms),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be >= 0, got {v}"));
            }
        }
        if self.cpu_tier == 0 {
            return invalid("cpu_tier must be a positive integer".into());
        }
        for &(start, end) in &self.downtime {
            if start.is_nan() || end.is_nan() || start >= end {
                return invalid(format!("downtime window [{start}, {end}) is empty"));
            }
        }
        Ok(())
    }
}

/// A produced data item. `produced_at` is the only timing metadata a
/// consumer ever sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataItem {
    pub item_id: String,
    pub produced_at: f64,
    pub payload: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Denied,
    Failed,
    /// Latest items, newest first, delivered `latency_ms` after the request.
    Data {
        items: Vec<DataItem>,
        latency_ms: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    Produce,
    Flush,
    Request,
}

impl fmt::Display for LogKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogKind::Produce => "produce",
            LogKind::Flush => "flush",
            LogKind::Request => "request",
        })
    }
}

/// One line of the simulation event log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub time: f64,
    pub service_id: ServiceId,
    pub kind: LogKind,
    pub detail: String,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.3} {} {} {}",
            self.time, self.service_id, self.kind, self.detail
        )
    }
}

/// Latency multiplier for a tier: `max_tier + 1 - tier`.
pub fn tier_multiplier(cpu_tier: u32, max_tier: u32) -> f64 {
    (max_tier + 1).saturating_sub(cpu_tier).max(1) as f64
}

/// Mutable state of one simulated service.
///
/// Production and insertion are functions of time: [`SimService::advance_to`]
/// replays every production and flush due up to the given instant, so the
/// same state is reached whether it is driven by an event queue or by a
/// wall clock. An item produced at the same instant as a flush is part of
/// that flush.
pub struct SimService {
    profile: ServiceProfile,
    origin: f64,
    latency_multiplier: f64,
    produced: u64,
    flushes: u64,
    buffer: Vec<DataItem>,
    store: Vec<DataItem>,
    request_rng: ChaCha8Rng,
    payload_rng: ChaCha8Rng,
}

const PAYLOAD_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

impl SimService {
    pub fn new(profile: ServiceProfile, max_tier: u32, origin: f64) -> Result<Self, SimError> {
        profile.validate()?;
        if profile.cpu_tier > max_tier {
            return Err(SimError::InvalidProfile(
                profile.service_id.clone(),
                format!("cpu_tier {} exceeds max tier {max_tier}", profile.cpu_tier),
            ));
        }
        Ok(SimService {
            latency_multiplier: tier_multiplier(profile.cpu_tier, max_tier),
            request_rng: ChaCha8Rng::seed_from_u64(profile.rng_seed),
            payload_rng: ChaCha8Rng::seed_from_u64(profile.rng_seed ^ PAYLOAD_STREAM),
            profile,
            origin,
            produced: 0,
            flushes: 0,
            buffer: Vec::new(),
            store: Vec::new(),
        })
    }

    pub fn profile(&self) -> &ServiceProfile {
        &self.profile
    }

    pub fn id(&self) -> &ServiceId {
        &self.profile.service_id
    }

    pub fn latency_multiplier(&self) -> f64 {
        self.latency_multiplier
    }

    pub fn next_production_at(&self) -> f64 {
        self.origin + (self.produced + 1) as f64 * self.profile.production_period
    }

    pub fn next_flush_at(&self) -> f64 {
        self.origin + (self.flushes + 1) as f64 * self.profile.insertion_period
    }

    pub fn produced_count(&self) -> u64 {
        self.produced
    }

    pub fn flush_count(&self) -> u64 {
        self.flushes
    }

    /// Items visible to clients, oldest first.
    pub fn visible_items(&self) -> &[DataItem] {
        &self.store
    }

    /// Applies every production and flush due at or before `t`.
    pub fn advance_to(&mut self, t: f64, log: &mut Vec<LogEntry>) {
        loop {
            let produce_at = self.next_production_at();
            let flush_at = self.next_flush_at();
            if produce_at <= flush_at && produce_at <= t {
                self.produce(produce_at, log);
            } else if flush_at <= t {
                self.flush(flush_at, log);
            } else {
                break;
            }
        }
    }

    fn produce(&mut self, at: f64, log: &mut Vec<LogEntry>) {
        self.produced += 1;
        let item = DataItem {
            item_id: format!("{}-{:06}", self.profile.service_id, self.produced),
            produced_at: at,
            payload: 36.0 + self.payload_rng.random_range(0.0..2.0),
        };
        log.push(LogEntry {
            time: at,
            service_id: self.profile.service_id.clone(),
            kind: LogKind::Produce,
            detail: format!("item={}", item.item_id),
        });
        self.buffer.push(item);
    }

    fn flush(&mut self, at: f64, log: &mut Vec<LogEntry>) {
        self.flushes += 1;
        log.push(LogEntry {
            time: at,
            service_id: self.profile.service_id.clone(),
            kind: LogKind::Flush,
            detail: format!("items={}", self.buffer.len()),
        });
        self.store.append(&mut self.buffer);
    }

    fn in_downtime(&self, at: f64) -> bool {
        let rel = at - self.origin;
        self.profile
            .downtime
            .iter()
            .any(|&(s, e)| s <= rel && rel < e)
    }

    /// Serves a "latest `limit` items" query issued at `at`.
    pub fn handle_request(&mut self, limit: usize, at: f64, log: &mut Vec<LogEntry>) -> Response {
        self.advance_to(at, log);
        let response = if self.in_downtime(at)
            || self.request_rng.random::<f64>() >= self.profile.accept_probability
        {
            Response::Denied
        } else if self.request_rng.random::<f64>() >= self.profile.success_probability {
            Response::Failed
        } else {
            let jitter = if self.profile.latency_jitter_ms > 0.0 {
                self.request_rng
                    .random_range(0.0..=self.profile.latency_jitter_ms)
            } else {
                0.0
            };
            let latency_ms = self.profile.base_latency_ms * self.latency_multiplier + jitter;
            let items = self.store.iter().rev().take(limit).cloned().collect();
            Response::Data { items, latency_ms }
        };
        let detail = match &response {
            Response::Denied => "denied".to_owned(),
            Response::Failed => "failed".to_owned(),
            Response::Data { items, latency_ms } => {
                format!("data items={} latency_ms={latency_ms:.3}", items.len())
            }
        };
        log.push(LogEntry {
            time: at,
            service_id: self.profile.service_id.clone(),
            kind: LogKind::Request,
            detail,
        });
        response
    }
}
