//! Performance measurement: probing, the time-series store and the
//! performance evaluator.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{Response, ServiceHandle, Simulator};
use crate::store::{parse_f64, split_fields, AppendLog, LogRecord, StoreError};
use crate::trust::{
    self, FactorKind, FactorLevel, MetricError, PerformanceInputs, PerformanceWeights,
};
use crate::ServiceId;

/// Default probe period, seconds.
pub const DEFAULT_PROBE_PERIOD: f64 = 15.0;
/// Default evaluation window, seconds.
pub const DEFAULT_EVALUATION_WINDOW: f64 = 300.0;
/// Probe deadline as a multiple of the SLA's expected response time.
pub const DEFAULT_DEADLINE_FACTOR: f64 = 2.0;

#[derive(Debug, Error)]
pub enum PmmError {
    #[error("no probe records for {0} in the window")]
    NoData(ServiceId),
    #[error("no performance level recorded for {0}")]
    NotFound(ServiceId),
    #[error("probe for {service} at {at} is older than the last record at {last}")]
    OutOfOrder {
        service: ServiceId,
        at: f64,
        last: f64,
    },
    #[error("invalid probe record: {0}")]
    InvalidRecord(String),
    #[error("probe period must be > 0, got {0}")]
    InvalidPeriod(f64),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// One performance observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub service_id: ServiceId,
    pub probed_at: f64,
    pub accepted: bool,
    pub success: bool,
    /// Present iff `success`.
    pub response_time_ms: Option<f64>,
}

impl ProbeRecord {
    pub fn denied(service_id: ServiceId, probed_at: f64) -> Self {
        ProbeRecord {
            service_id,
            probed_at,
            accepted: false,
            success: false,
            response_time_ms: None,
        }
    }

    pub fn failed(service_id: ServiceId, probed_at: f64) -> Self {
        ProbeRecord {
            service_id,
            probed_at,
            accepted: true,
            success: false,
            response_time_ms: None,
        }
    }

    pub fn succeeded(service_id: ServiceId, probed_at: f64, response_time_ms: f64) -> Self {
        ProbeRecord {
            service_id,
            probed_at,
            accepted: true,
            success: true,
            response_time_ms: Some(response_time_ms),
        }
    }

    pub fn check(&self) -> Result<(), PmmError> {
        if self.success && !self.accepted {
            return Err(PmmError::InvalidRecord("success without acceptance".into()));
        }
        if self.success != self.response_time_ms.is_some() {
            return Err(PmmError::InvalidRecord(
                "response time must be present exactly for successful probes".into(),
            ));
        }
        if let Some(rt) = self.response_time_ms {
            if !(rt >= 0.0 && rt.is_finite()) {
                return Err(PmmError::InvalidRecord(format!(
                    "negative response time {rt}"
                )));
            }
        }
        Ok(())
    }
}

/// Transport-independent result of one probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeOutcome {
    Denied,
    Failed,
    Completed { latency_ms: f64 },
}

impl ProbeOutcome {
    pub fn from_response(response: &Response) -> Self {
        match response {
            Response::Denied => ProbeOutcome::Denied,
            Response::Failed => ProbeOutcome::Failed,
            Response::Data { latency_ms, .. } => ProbeOutcome::Completed {
                latency_ms: *latency_ms,
            },
        }
    }

    /// A completed probe slower than `deadline_ms` counts as a timeout:
    /// accepted but failed.
    pub fn into_record(
        self,
        service_id: ServiceId,
        probed_at: f64,
        deadline_ms: f64,
    ) -> ProbeRecord {
        match self {
            ProbeOutcome::Denied => ProbeRecord::denied(service_id, probed_at),
            ProbeOutcome::Failed => ProbeRecord::failed(service_id, probed_at),
            ProbeOutcome::Completed { latency_ms } if latency_ms > deadline_ms => {
                ProbeRecord::failed(service_id, probed_at)
            }
            ProbeOutcome::Completed { latency_ms } => {
                ProbeRecord::succeeded(service_id, probed_at, latency_ms)
            }
        }
    }
}

/// Counts over a set of probe records. Adjacent windows compose by
/// [`WindowStats::merge`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WindowStats {
    pub total: u64,
    pub accepted: u64,
    pub successful: u64,
    pub response_time_sum_ms: f64,
}

impl WindowStats {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a ProbeRecord>) -> Self {
        records
            .into_iter()
            .fold(WindowStats::default(), |mut s, r| {
                s.total += 1;
                s.accepted += r.accepted as u64;
                if r.success {
                    s.successful += 1;
                    s.response_time_sum_ms += r.response_time_ms.unwrap_or(0.0);
                }
                s
            })
    }

    pub fn merge(self, other: WindowStats) -> WindowStats {
        WindowStats {
            total: self.total + other.total,
            accepted: self.accepted + other.accepted,
            successful: self.successful + other.successful,
            response_time_sum_ms: self.response_time_sum_ms + other.response_time_sum_ms,
        }
    }

    /// Mean response time over successful probes.
    pub fn mean_response_ms(&self) -> Option<f64> {
        (self.successful > 0).then(|| self.response_time_sum_ms / self.successful as f64)
    }

    pub fn to_inputs(&self, expected_response_ms: f64) -> Result<PerformanceInputs, MetricError> {
        PerformanceInputs::new(
            self.total,
            self.accepted,
            self.successful,
            self.mean_response_ms(),
            expected_response_ms,
        )
    }
}

/// Records of one service with `start <= probed_at < end`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    pub start: f64,
    pub end: f64,
    pub records: Vec<ProbeRecord>,
}

impl ObservationWindow {
    pub fn stats(&self) -> WindowStats {
        WindowStats::from_records(&self.records)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Append-only per-service sequence of probe records.
#[derive(Default)]
pub struct TimeSeriesStore {
    series: RwLock<BTreeMap<ServiceId, Vec<ProbeRecord>>>,
}

impl TimeSeriesStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&self, record: ProbeRecord) -> Result<(), PmmError> {
        record.check()?;
        let mut series = self.series.write();
        let records = series.entry(record.service_id.clone()).or_default();
        if let Some(last) = records.last() {
            if record.probed_at < last.probed_at {
                return Err(PmmError::OutOfOrder {
                    service: record.service_id,
                    at: record.probed_at,
                    last: last.probed_at,
                });
            }
        }
        records.push(record);
        Ok(())
    }

    /// A snapshot of the records in `[start, end)`.
    pub fn window(&self, service: &ServiceId, start: f64, end: f64) -> ObservationWindow {
        let series = self.series.read();
        let records = series
            .get(service)
            .map(|rs| {
                let lo = rs.partition_point(|r| r.probed_at < start);
                let hi = rs.partition_point(|r| r.probed_at < end);
                rs[lo..hi.max(lo)].to_vec()
            })
            .unwrap_or_default();
        ObservationWindow {
            start,
            end,
            records,
        }
    }

    pub fn records(&self, service: &ServiceId) -> Vec<ProbeRecord> {
        self.series.read().get(service).cloned().unwrap_or_default()
    }

    pub fn services(&self) -> Vec<ServiceId> {
        self.series.read().keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.series.read().values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV export, services in id order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "service_id,probed_at,accepted,success,response_time_ms")?;
        for (id, records) in self.series.read().iter() {
            for r in records {
                let rt = r
                    .response_time_ms
                    .map(|v| v.to_string())
                    .unwrap_or_default();
                writeln!(w, "{id},{},{},{},{rt}", r.probed_at, r.accepted, r.success)?;
            }
        }
        Ok(())
    }
}

impl LogRecord for FactorLevel {
    const HEADER: &'static str = "service_id,kind,evaluated_at,value";

    fn service_id(&self) -> &ServiceId {
        &self.service_id
    }

    fn timestamp(&self) -> f64 {
        self.evaluated_at
    }

    fn to_line(&self) -> String {
        format!(
            "{},{},{},{}",
            self.service_id, self.kind, self.evaluated_at, self.value
        )
    }

    fn from_line(line: &str) -> Result<Self, String> {
        let f = split_fields(line, 4)?;
        let kind = match f[1] {
            "performance" => FactorKind::Performance,
            "data_quality" => FactorKind::DataQuality,
            other => return Err(format!("unknown factor kind {other:?}")),
        };
        FactorLevel::new(
            f[0].into(),
            kind,
            parse_f64(f[3], "value")?,
            parse_f64(f[2], "evaluated_at")?,
        )
        .map_err(|e| e.to_string())
    }
}

/// Evaluated performance levels.
pub type PerfDb = AppendLog<FactorLevel>;

/// Probes services and records one [`ProbeRecord`] per probe.
pub struct PerformanceMonitor {
    store: Arc<TimeSeriesStore>,
    deadlines_ms: HashMap<ServiceId, f64>,
    query_limit: usize,
}

impl PerformanceMonitor {
    pub fn new(store: Arc<TimeSeriesStore>, query_limit: usize) -> Self {
        PerformanceMonitor {
            store,
            deadlines_ms: HashMap::new(),
            query_limit,
        }
    }

    pub fn store(&self) -> &Arc<TimeSeriesStore> {
        &self.store
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

    pub fn record(
        &self,
        service: &ServiceId,
        probed_at: f64,
        outcome: ProbeOutcome,
    ) -> Result<ProbeRecord, PmmError> {
        let record = outcome.into_record(service.clone(), probed_at, self.deadline(service));
        self.store.append(record.clone())?;
        Ok(record)
    }

    /// Probes a simulated service at the simulator's current time.
    pub fn probe<U>(
        &self,
        sim: &mut Simulator<U>,
        handle: ServiceHandle,
    ) -> Result<ProbeRecord, PmmError> {
        let at = sim.now();
        let response = sim.handle_request(handle, self.query_limit);
        let id = sim.service(handle).id().clone();
        self.record(&id, at, ProbeOutcome::from_response(&response))
    }
}

/// Tick of the standalone probe loop: index into the target list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeTick(pub usize);

/// Probes every target every `period` seconds from the simulator's current
/// time until `until` (exclusive), then leaves the clock at `until`.
/// Returns the number of probes taken.
pub fn schedule_probes(
    sim: &mut Simulator<ProbeTick>,
    targets: &[ServiceHandle],
    period: f64,
    until: f64,
    monitor: &PerformanceMonitor,
) -> Result<usize, PmmError> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(PmmError::InvalidPeriod(period));
    }
    let start = sim.now();
    for (i, _) in targets.iter().enumerate() {
        if start < until {
            sim.schedule(start, ProbeTick(i));
        }
    }
    let mut taken = 0;
    while let Some((t, ProbeTick(i))) = sim.next_event(until) {
        if t >= until {
            continue;
        }
        monitor.probe(sim, targets[i])?;
        taken += 1;
        // counted from the start to avoid drift
        let k = ((t - start) / period).round() + 1.0;
        let next = start + k * period;
        if next < until {
            sim.schedule(next, ProbeTick(i));
        }
    }
    Ok(taken)
}

/// Per-window breakdown of a performance level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceBreakdown {
    pub availability: f64,
    pub task_success_ratio: f64,
    pub time_efficiency: f64,
    pub mean_response_ms: Option<f64>,
    pub value: f64,
}

pub fn compute_breakdown(
    stats: &WindowStats,
    expected_response_ms: f64,
    weights: &PerformanceWeights,
) -> Result<PerformanceBreakdown, MetricError> {
    let inputs = stats.to_inputs(expected_response_ms)?;
    let availability = trust::availability(&inputs)?;
    let task_success_ratio = trust::task_success_ratio(&inputs);
    let time_efficiency = trust::time_efficiency(&inputs)?;
    Ok(PerformanceBreakdown {
        availability,
        task_success_ratio,
        time_efficiency,
        mean_response_ms: inputs.mean_response_ms,
        value: trust::combine_performance(
            availability,
            task_success_ratio,
            time_efficiency,
            weights,
        ),
    })
}

/// Turns windows of probe records into persisted performance levels.
pub struct PerformanceEvaluator {
    tsdb: Arc<TimeSeriesStore>,
    perfdb: Arc<PerfDb>,
    weights: PerformanceWeights,
}

impl PerformanceEvaluator {
    pub fn new(
        tsdb: Arc<TimeSeriesStore>,
        perfdb: Arc<PerfDb>,
        weights: PerformanceWeights,
    ) -> Self {
        PerformanceEvaluator {
            tsdb,
            perfdb,
            weights,
        }
    }

    pub fn perfdb(&self) -> &Arc<PerfDb> {
        &self.perfdb
    }

    /// Evaluates `[start, end)` and stores the level keyed by `end`.
    pub fn evaluate(
        &self,
        service: &ServiceId,
        start: f64,
        end: f64,
        expected_response_ms: f64,
    ) -> Result<(FactorLevel, PerformanceBreakdown), PmmError> {
        let window = self.tsdb.window(service, start, end);
        if window.is_empty() {
            return Err(PmmError::NoData(service.clone()));
        }
        let breakdown = compute_breakdown(&window.stats(), expected_response_ms, &self.weights)?;
        let level = FactorLevel::new(
            service.clone(),
            FactorKind::Performance,
            breakdown.value,
            end,
        )?;
        self.perfdb.append(level.clone())?;
        Ok((level, breakdown))
    }

    pub fn latest_performance(&self, service: &ServiceId) -> Result<FactorLevel, PmmError> {
        latest_performance(&self.perfdb, service)
    }
}

pub fn latest_performance(perfdb: &PerfDb, service: &ServiceId) -> Result<FactorLevel, PmmError> {
    perfdb
        .latest(service)
        .ok_or_else(|| PmmError::NotFound(service.clone()))
}
