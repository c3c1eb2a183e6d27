//! Data quality measurement for black-box services.
//!
//! A service never reveals when its store is updated, so the sampler pulls
//! the latest items periodically and treats any item id it has not seen
//! before as evidence of an insertion. Counting the sampling instants that
//! reveal new items over a window estimates the update frequency; item
//! timestamps give the per-sample data timeliness.
//!
//! Sampling at or below half the smallest insertion period of interest
//! keeps consecutive insertions from collapsing into a single detection.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{Response, ServiceHandle, Simulator};
use crate::store::{parse_f64, split_fields, AppendLog, LogRecord, StoreError};
use crate::trust::{self, FactorKind, FactorLevel, MetricError, TimelinessInputs};
use crate::ServiceId;

pub const DEFAULT_SAMPLING_PERIOD: f64 = 5.0;
pub const DEFAULT_QUERY_LIMIT: usize = 10;

#[derive(Debug, Error)]
pub enum DqmmError {
    #[error("insufficient samples for {service}: {reason}")]
    InsufficientSamples { service: ServiceId, reason: String },
    #[error("window for {service} starts at {start} before warm-up completed at {warmup}")]
    BeforeWarmup {
        service: ServiceId,
        start: f64,
        warmup: f64,
    },
    #[error("no data quality level recorded for {0}")]
    NotFound(ServiceId),
    #[error("invalid window [{0}, {1})")]
    InvalidWindow(f64, f64),
    #[error("invalid validity interval {0}")]
    InvalidValidityInterval(f64),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedItem {
    pub id: String,
    pub produced_at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleOutcome {
    /// The query was denied, failed or timed out.
    Miss,
    Items(Vec<ObservedItem>),
}

impl SampleOutcome {
    pub fn from_response(response: &Response, deadline_ms: f64) -> Self {
        match response {
            Response::Data { items, latency_ms } if *latency_ms <= deadline_ms => {
                SampleOutcome::Items(
                    items
                        .iter()
                        .map(|i| ObservedItem {
                            id: i.item_id.clone(),
                            produced_at: i.produced_at,
                        })
                        .collect(),
                )
            }
            _ => SampleOutcome::Miss,
        }
    }
}

/// One sampling result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSnapshot {
    pub service_id: ServiceId,
    /// Time the response was received.
    pub sampled_at: f64,
    pub item_ids: BTreeSet<String>,
    /// Items never seen before this sample.
    pub new_item_ids: BTreeSet<String>,
    /// Mean data timeliness of the sampled items, 0 for an empty sample.
    pub mean_item_timeliness: f64,
    pub miss: bool,
    /// The first successful sample only seeds the seen-set.
    pub warmup: bool,
}

impl SampleSnapshot {
    fn counts(&self) -> bool {
        !self.miss && !self.warmup
    }
}

#[derive(Default)]
struct ServiceKnowledge {
    first_seen: HashMap<String, f64>,
    snapshots: Vec<SampleSnapshot>,
    warmup_at: Option<f64>,
}

/// Per-service sampling history and seen-item sets.
#[derive(Default)]
pub struct KnowledgeBase {
    services: RwLock<HashMap<ServiceId, Arc<RwLock<ServiceKnowledge>>>>,
}

fn mean_timeliness(items: &[ObservedItem], sampled_at: f64, validity_interval: f64) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let sum: f64 = items
        .iter()
        .map(|i| {
            trust::data_timeliness(&TimelinessInputs::new(
                sampled_at,
                i.produced_at,
                validity_interval,
            ))
        })
        .sum();
    (sum / items.len() as f64).clamp(0.0, 1.0)
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    fn entry(&self, service: &ServiceId) -> Arc<RwLock<ServiceKnowledge>> {
        if let Some(k) = self.services.read().get(service) {
            return k.clone();
        }
        self.services
            .write()
            .entry(service.clone())
            .or_default()
            .clone()
    }

    fn get(&self, service: &ServiceId) -> Option<Arc<RwLock<ServiceKnowledge>>> {
        self.services.read().get(service).cloned()
    }

    /// Records one sample and returns the stored snapshot.
    pub fn record_sample(
        &self,
        service: &ServiceId,
        sampled_at: f64,
        outcome: SampleOutcome,
        validity_interval: f64,
    ) -> SampleSnapshot {
        let knowledge = self.entry(service);
        let mut k = knowledge.write();
        let snapshot = match outcome {
            SampleOutcome::Miss => SampleSnapshot {
                service_id: service.clone(),
                sampled_at,
                item_ids: BTreeSet::new(),
                new_item_ids: BTreeSet::new(),
                mean_item_timeliness: 0.0,
                miss: true,
                warmup: false,
            },
            SampleOutcome::Items(items) => {
                let warmup = k.warmup_at.is_none();
                let item_ids: BTreeSet<String> = items.iter().map(|i| i.id.clone()).collect();
                let mut new_item_ids = BTreeSet::new();
                for id in &item_ids {
                    if !k.first_seen.contains_key(id) {
                        k.first_seen.insert(id.clone(), sampled_at);
                        if !warmup {
                            new_item_ids.insert(id.clone());
                        }
                    }
                }
                if warmup {
                    k.warmup_at = Some(sampled_at);
                }
                SampleSnapshot {
                    service_id: service.clone(),
                    sampled_at,
                    mean_item_timeliness: mean_timeliness(&items, sampled_at, validity_interval),
                    item_ids,
                    new_item_ids,
                    miss: false,
                    warmup,
                }
            }
        };
        k.snapshots.push(snapshot.clone());
        snapshot
    }

    pub fn snapshots(&self, service: &ServiceId) -> Vec<SampleSnapshot> {
        self.get(service)
            .map(|k| k.read().snapshots.clone())
            .unwrap_or_default()
    }

    fn window_snapshots(&self, service: &ServiceId, start: f64, end: f64) -> Vec<SampleSnapshot> {
        self.get(service)
            .map(|k| {
                k.read()
                    .snapshots
                    .iter()
                    .filter(|s| s.sampled_at >= start && s.sampled_at < end)
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn warmup_completed_at(&self, service: &ServiceId) -> Option<f64> {
        self.get(service).and_then(|k| k.read().warmup_at)
    }

    pub fn has_seen(&self, service: &ServiceId, item_id: &str) -> bool {
        self.get(service)
            .is_some_and(|k| k.read().first_seen.contains_key(item_id))
    }

    pub fn seen_count(&self, service: &ServiceId) -> usize {
        self.get(service).map_or(0, |k| k.read().first_seen.len())
    }

    pub fn services(&self) -> Vec<ServiceId> {
        let mut ids: Vec<_> = self.services.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Debug export: `service_id,sampled_at,miss,warmup,items,new_items,mean_item_timeliness`.
    pub fn write_sample_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "service_id,sampled_at,miss,warmup,items,new_items,mean_item_timeliness"
        )?;
        for id in self.services() {
            for s in self.snapshots(&id) {
                writeln!(
                    w,
                    "{id},{},{},{},{},{},{}",
                    s.sampled_at,
                    s.miss,
                    s.warmup,
                    s.item_ids.len(),
                    s.new_item_ids.len(),
                    s.mean_item_timeliness
                )?;
            }
        }
        Ok(())
    }
}

/// Pulls samples from services and feeds the knowledge base.
pub struct Sampler {
    kb: Arc<KnowledgeBase>,
    validity_interval: f64,
    query_limit: usize,
    deadlines_ms: HashMap<ServiceId, f64>,
}

impl Sampler {
    pub fn new(kb: Arc<KnowledgeBase>, validity_interval: f64, query_limit: usize) -> Self {
        Sampler {
            kb,
            validity_interval,
            query_limit,
            deadlines_ms: HashMap::new(),
        }
    }

    pub fn knowledge(&self) -> &Arc<KnowledgeBase> {
        &self.kb
    }

    pub fn set_deadline(&mut self, service: ServiceId, deadline_ms: f64) {
        self.deadlines_ms.insert(service, deadline_ms);
    }

    pub fn deadline(&self, service: &ServiceId) -> f64 {
        self.deadlines_ms
            .get(service)
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    pub fn validity_interval(&self) -> f64 {
        self.validity_interval
    }

    /// Records an outcome received at `received_at`.
    pub fn record(
        &self,
        service: &ServiceId,
        received_at: f64,
        outcome: SampleOutcome,
    ) -> SampleSnapshot {
        self.kb
            .record_sample(service, received_at, outcome, self.validity_interval)
    }

    /// Samples a simulated service now. Timeliness is measured at receipt,
    /// so slower services see older data.
    pub fn take_sample<U>(&self, sim: &mut Simulator<U>, handle: ServiceHandle) -> SampleSnapshot {
        let sent_at = sim.now();
        let response = sim.handle_request(handle, self.query_limit);
        let id = sim.service(handle).id().clone();
        let outcome = SampleOutcome::from_response(&response, self.deadline(&id));
        let received_at = match (&outcome, &response) {
            (SampleOutcome::Items(_), Response::Data { latency_ms, .. }) => {
                sent_at + latency_ms / 1000.0
            }
            _ => sent_at,
        };
        self.record(&id, received_at, outcome)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleTick(pub usize);

/// Samples every target every `period` seconds until `until` (exclusive).
pub fn schedule_samples(
    sim: &mut Simulator<SampleTick>,
    targets: &[ServiceHandle],
    period: f64,
    until: f64,
    sampler: &Sampler,
) -> usize {
    assert!(period > 0.0, "sampling period must be positive");
    let start = sim.now();
    for i in 0..targets.len() {
        if start < until {
            sim.schedule(start, SampleTick(i));
        }
    }
    let mut taken = 0;
    while let Some((t, SampleTick(i))) = sim.next_event(until) {
        if t >= until {
            continue;
        }
        sampler.take_sample(sim, targets[i]);
        taken += 1;
        let k = ((t - start) / period).round() + 1.0;
        let next = start + k * period;
        if next < until {
            sim.schedule(next, SampleTick(i));
        }
    }
    taken
}

fn check_window(start: f64, end: f64) -> Result<(), DqmmError> {
    if start.is_finite() && end.is_finite() && end > start {
        Ok(())
    } else {
        Err(DqmmError::InvalidWindow(start, end))
    }
}

fn check_warmup(kb: &KnowledgeBase, service: &ServiceId, start: f64) -> Result<(), DqmmError> {
    match kb.warmup_completed_at(service) {
        None => Err(DqmmError::InsufficientSamples {
            service: service.clone(),
            reason: "warm-up sample not taken yet".into(),
        }),
        Some(warmup) if start < warmup => Err(DqmmError::BeforeWarmup {
            service: service.clone(),
            start,
            warmup,
        }),
        Some(_) => Ok(()),
    }
}

/// Insertions per second in `[start, end)`: the number of sampling instants
/// that revealed new items, divided by the window length.
pub fn estimate_update_frequency(
    kb: &KnowledgeBase,
    service: &ServiceId,
    start: f64,
    end: f64,
) -> Result<f64, DqmmError> {
    check_window(start, end)?;
    check_warmup(kb, service, start)?;
    let samples = kb.window_snapshots(service, start, end);
    let usable = samples.iter().filter(|s| s.counts()).count();
    if usable < 2 {
        return Err(DqmmError::InsufficientSamples {
            service: service.clone(),
            reason: format!("{usable} usable samples in [{start}, {end}), need 2"),
        });
    }
    let detections = samples
        .iter()
        .filter(|s| s.counts() && !s.new_item_ids.is_empty())
        .count();
    Ok(detections as f64 / (end - start))
}

/// An evaluated data-quality level with its two components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataQualityLevel {
    pub service_id: ServiceId,
    pub evaluated_at: f64,
    pub t_d_avg: f64,
    pub t_db: f64,
    /// Always `t_d_avg * t_db`.
    pub value: f64,
}

impl DataQualityLevel {
    pub fn new(
        service_id: ServiceId,
        evaluated_at: f64,
        t_d_avg: f64,
        t_db: f64,
    ) -> Result<Self, MetricError> {
        let value = trust::data_quality(t_d_avg, t_db)?;
        Ok(DataQualityLevel {
            service_id,
            evaluated_at,
            t_d_avg,
            t_db,
            value,
        })
    }

    pub fn factor(&self) -> FactorLevel {
        FactorLevel {
            service_id: self.service_id.clone(),
            kind: FactorKind::DataQuality,
            value: self.value,
            evaluated_at: self.evaluated_at,
        }
    }
}

impl LogRecord for DataQualityLevel {
    const HEADER: &'static str = "service_id,evaluated_at,t_d_avg,t_db,value";

    fn service_id(&self) -> &ServiceId {
        &self.service_id
    }

    fn timestamp(&self) -> f64 {
        self.evaluated_at
    }

    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.service_id, self.evaluated_at, self.t_d_avg, self.t_db, self.value
        )
    }

    fn from_line(line: &str) -> Result<Self, String> {
        let f = split_fields(line, 5)?;
        let level = DataQualityLevel::new(
            f[0].into(),
            parse_f64(f[1], "evaluated_at")?,
            parse_f64(f[2], "t_d_avg")?,
            parse_f64(f[3], "t_db")?,
        )
        .map_err(|e| e.to_string())?;
        if level.value != parse_f64(f[4], "value")? {
            return Err(format!("value {} is not t_d_avg * t_db", f[4]));
        }
        Ok(level)
    }
}

/// Evaluated data-quality levels.
pub type EdqStore = AppendLog<DataQualityLevel>;

pub struct DataQualityEvaluator {
    kb: Arc<KnowledgeBase>,
    edq: Arc<EdqStore>,
    validity_interval: f64,
}

impl DataQualityEvaluator {
    pub fn new(
        kb: Arc<KnowledgeBase>,
        edq: Arc<EdqStore>,
        validity_interval: f64,
    ) -> Result<Self, DqmmError> {
        if !(validity_interval > 0.0 && validity_interval.is_finite()) {
            return Err(DqmmError::InvalidValidityInterval(validity_interval));
        }
        Ok(DataQualityEvaluator {
            kb,
            edq,
            validity_interval,
        })
    }

    pub fn edq(&self) -> &Arc<EdqStore> {
        &self.edq
    }

    /// Computes the level for `[start, end)` without storing it.
    pub fn compute(
        &self,
        service: &ServiceId,
        start: f64,
        end: f64,
    ) -> Result<DataQualityLevel, DqmmError> {
        let frequency = estimate_update_frequency(&self.kb, service, start, end)?;
        let samples: Vec<_> = self
            .kb
            .window_snapshots(service, start, end)
            .into_iter()
            .filter(SampleSnapshot::counts)
            .collect();
        let t_d_avg =
            samples.iter().map(|s| s.mean_item_timeliness).sum::<f64>() / samples.len() as f64;
        let insertions = frequency * self.validity_interval;
        let t_db = trust::database_timeliness(insertions)?;
        Ok(DataQualityLevel::new(
            service.clone(),
            end,
            t_d_avg.clamp(0.0, 1.0),
            t_db,
        )?)
    }

    /// Evaluates `[start, end)` and stores the level keyed by `end`.
    pub fn evaluate(
        &self,
        service: &ServiceId,
        start: f64,
        end: f64,
    ) -> Result<DataQualityLevel, DqmmError> {
        let level = self.compute(service, start, end)?;
        self.edq.append(level.clone())?;
        Ok(level)
    }

    pub fn latest_data_quality(&self, service: &ServiceId) -> Result<DataQualityLevel, DqmmError> {
        latest_data_quality(&self.edq, service)
    }
}

pub fn latest_data_quality(
    edq: &EdqStore,
    service: &ServiceId,
) -> Result<DataQualityLevel, DqmmError> {
    edq.latest(service)
        .ok_or_else(|| DqmmError::NotFound(service.clone()))
}
