//! Monitoring pipeline wiring and the virtual-time experiment driver.

use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::dqmm::{DataQualityEvaluator, DqmmError, EdqStore, KnowledgeBase, Sampler};
use crate::pmm::{PerfDb, PerformanceEvaluator, PerformanceMonitor, PmmError, TimeSeriesStore};
use crate::report::SweepReport;
use crate::scenario::ScenarioConfig;
use crate::sim::{LogEntry, ServiceHandle, SimError, Simulator};
use crate::store::StoreError;
use crate::tmm::{Ranking, TmmError, TrustEngine, TrustHistory};
use crate::trust::TrustWeights;
use crate::ServiceId;

pub const PERFDB_FILE: &str = "perfdb.log";
pub const EDQ_FILE: &str = "edq.log";
pub const TRUST_HISTORY_FILE: &str = "trust_history.log";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pmm(#[from] PmmError),
    #[error(transparent)]
    Dqmm(#[from] DqmmError),
    #[error(transparent)]
    Tmm(#[from] TmmError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// All monitoring state for one scenario: stores, evaluators, trust engine.
pub struct Monitor {
    pub config: ScenarioConfig,
    pub prober: PerformanceMonitor,
    pub sampler: Sampler,
    pub performance: PerformanceEvaluator,
    pub data_quality: DataQualityEvaluator,
    pub engine: Arc<TrustEngine>,
}

impl Monitor {
    pub fn in_memory(config: ScenarioConfig) -> Result<Self, RunError> {
        Self::build(
            config,
            Arc::new(PerfDb::in_memory()),
            Arc::new(EdqStore::in_memory()),
            Arc::new(TrustHistory::in_memory()),
        )
    }

    /// Persists PerfDB, EDQ and the trust history under `dir`, replaying
    /// whatever those files already hold.
    pub fn persistent(config: ScenarioConfig, dir: &Path) -> Result<Self, RunError> {
        std::fs::create_dir_all(dir)?;
        Self::build(
            config,
            Arc::new(PerfDb::open(dir.join(PERFDB_FILE))?),
            Arc::new(EdqStore::open(dir.join(EDQ_FILE))?),
            Arc::new(TrustHistory::open(dir.join(TRUST_HISTORY_FILE))?),
        )
    }

    fn build(
        config: ScenarioConfig,
        perfdb: Arc<PerfDb>,
        edq: Arc<EdqStore>,
        history: Arc<TrustHistory>,
    ) -> Result<Self, RunError> {
        let tsdb = Arc::new(TimeSeriesStore::new());
        let kb = Arc::new(KnowledgeBase::new());
        let mut prober = PerformanceMonitor::new(tsdb.clone(), config.query_limit);
        let mut sampler = Sampler::new(kb.clone(), config.validity_interval, config.query_limit);
        for spec in &config.services {
            prober.set_deadline(spec.id().clone(), config.deadline_ms(spec));
            sampler.set_deadline(spec.id().clone(), config.deadline_ms(spec));
        }
        let performance =
            PerformanceEvaluator::new(tsdb, perfdb.clone(), config.performance_weights);
        let data_quality = DataQualityEvaluator::new(kb, edq.clone(), config.validity_interval)?;
        let engine = Arc::new(TrustEngine::new(
            perfdb,
            edq,
            history,
            config.max_factor_age,
        ));
        Ok(Monitor {
            config,
            prober,
            sampler,
            performance,
            data_quality,
            engine,
        })
    }

    pub fn tsdb(&self) -> &Arc<TimeSeriesStore> {
        self.prober.store()
    }

    pub fn knowledge(&self) -> &Arc<KnowledgeBase> {
        self.sampler.knowledge()
    }

    /// Evaluates both factors of every service over `[start, end)`.
    /// Services without enough evidence are skipped; the reasons are
    /// returned.
    pub fn evaluate_window(&self, start: f64, end: f64) -> Result<Vec<String>, RunError> {
        let mut skipped = Vec::new();
        for spec in &self.config.services {
            match self
                .performance
                .evaluate(spec.id(), start, end, spec.sla_ert_ms)
            {
                Ok(_) => {}
                Err(e @ PmmError::NoData(_)) => skipped.push(e.to_string()),
                Err(e) => return Err(e.into()),
            }
            match self.data_quality.evaluate(spec.id(), start, end) {
                Ok(_) => {}
                Err(
                    e @ (DqmmError::InsufficientSamples { .. } | DqmmError::BeforeWarmup { .. }),
                ) => skipped.push(e.to_string()),
                Err(e) => return Err(e.into()),
            }
        }
        for reason in &skipped {
            tracing::debug!(start, end, "{reason}");
        }
        Ok(skipped)
    }

    /// One trust request per weight pair, all at `at`.
    pub fn sweep(&self, at: f64) -> Result<Vec<Ranking>, RunError> {
        let ids = self.config.service_ids();
        self.config
            .sweep
            .iter()
            .map(|w| self.rank(&ids, w, at))
            .collect()
    }

    /// Ranks `ids`; a request where no service qualifies yields an empty
    /// ranking listing every omission.
    pub fn rank(
        &self,
        ids: &[ServiceId],
        weights: &TrustWeights,
        at: f64,
    ) -> Result<Ranking, RunError> {
        match self.engine.rank_services(ids, weights, at) {
            Ok(r) => Ok(r),
            Err(TmmError::EmptyRanking(omitted)) => Ok(Ranking {
                requested_at: at,
                weights: *weights,
                ranking: Vec::new(),
                omitted,
            }),
            Err(e) => Err(e.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tick {
    Probe(usize),
    Sample(usize),
    Evaluate(usize),
}

/// Result of a virtual-time run.
pub struct RunOutput {
    pub monitor: Monitor,
    pub report: SweepReport,
    pub event_log: Vec<LogEntry>,
    pub skipped: Vec<String>,
}

/// Runs a scenario on the virtual clock: probes, samples and evaluates
/// until `duration`, then performs the weight sweep at `duration`.
pub fn run_virtual(monitor: Monitor) -> Result<RunOutput, RunError> {
    let config = monitor.config.clone();
    let mut sim: Simulator<Tick> = Simulator::new(config.max_tier());
    let handles: Vec<ServiceHandle> = config
        .services
        .iter()
        .map(|s| sim.spawn_service(s.profile.clone()))
        .collect::<Result<_, _>>()?;
    let windows = config.windows();
    let duration = config.duration;

    for i in 0..handles.len() {
        sim.schedule(0.0, Tick::Probe(i));
        sim.schedule(0.0, Tick::Sample(i));
    }
    for (w, &(_, end)) in windows.iter().enumerate() {
        sim.schedule(end, Tick::Evaluate(w));
    }

    let next_tick = |t: f64, period: f64| {
        let k = (t / period).round() + 1.0;
        k * period
    };
    let mut skipped = Vec::new();
    while let Some((t, tick)) = sim.next_event(duration) {
        match tick {
            Tick::Probe(i) => {
                if t >= duration {
                    continue;
                }
                monitor.prober.probe(&mut sim, handles[i])?;
                let next = next_tick(t, config.probe_period);
                if next < duration {
                    sim.schedule(next, Tick::Probe(i));
                }
            }
            Tick::Sample(i) => {
                if t >= duration {
                    continue;
                }
                monitor.sampler.take_sample(&mut sim, handles[i]);
                let next = next_tick(t, config.sampling_period);
                if next < duration {
                    sim.schedule(next, Tick::Sample(i));
                }
            }
            Tick::Evaluate(w) => {
                let (start, end) = windows[w];
                skipped.extend(monitor.evaluate_window(start, end)?);
            }
        }
    }
    let rankings = monitor.sweep(duration)?;
    let report = SweepReport::new(&config, duration, rankings);
    Ok(RunOutput {
        event_log: sim.log().to_vec(),
        monitor,
        report,
        skipped,
    })
}
