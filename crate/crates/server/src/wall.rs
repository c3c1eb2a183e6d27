//! Wall-clock scenario runs: every simulated service behind its own HTTP
//! endpoint, probed and sampled over the wire.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;
use tokio::task::JoinSet;

use svctrust_client::{ClientError, ServiceClient};
use svctrust_core::dqmm::SampleOutcome;
use svctrust_core::pmm::{
    schedule_probes, PerformanceMonitor, PmmError, ProbeOutcome, ProbeRecord, ProbeTick,
    TimeSeriesStore,
};
use svctrust_core::report::SweepReport;
use svctrust_core::runner::{Monitor, RunError, RunOutput};
use svctrust_core::scenario::{ScenarioConfig, ServiceSpec};
use svctrust_core::sim::{ServiceHandle, SimError, SimService, Simulator};
use svctrust_core::ServiceId;

use crate::{serve_service, serve_trust_api, Endpoint, GatewayError, ServiceEndpoint, WallClock};

/// Extra wait after a window closes so in-flight requests land before it is
/// evaluated.
const EVALUATION_GRACE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum WallError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("monitoring task failed: {0}")]
    Task(String),
}

impl From<PmmError> for WallError {
    fn from(e: PmmError) -> Self {
        WallError::Run(e.into())
    }
}

#[derive(Debug, Clone)]
pub struct WallOptions {
    /// Address the data-service endpoints bind to.
    pub bind: IpAddr,
    /// Port of the first service; the others follow. 0 picks free ports.
    pub base_port: u16,
    /// Serve the trust API here while the run is in progress.
    pub trust_addr: Option<SocketAddr>,
}

impl Default for WallOptions {
    fn default() -> Self {
        WallOptions {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            base_port: 0,
            trust_addr: None,
        }
    }
}

impl WallOptions {
    fn service_addr(&self, i: usize) -> SocketAddr {
        let port = if self.base_port == 0 {
            0
        } else {
            self.base_port + i as u16
        };
        SocketAddr::new(self.bind, port)
    }
}

/// Outcome of a wall-clock run. The trust API, if one was requested, is
/// still serving.
pub struct WallRun {
    pub output: RunOutput,
    pub trust_api: Option<Endpoint>,
}

fn ticks(period: f64, until: f64) -> impl Iterator<Item = f64> {
    (0u64..)
        .map(move |k| k as f64 * period)
        .take_while(move |&t| t < until)
}

fn deadline(config: &ScenarioConfig, spec: &ServiceSpec) -> Duration {
    Duration::from_secs_f64(config.deadline_ms(spec) / 1000.0)
}

async fn start_gateways(
    config: &ScenarioConfig,
    clock: WallClock,
    opts: &WallOptions,
) -> Result<Vec<ServiceEndpoint>, WallError> {
    let mut endpoints = Vec::with_capacity(config.services.len());
    for (i, spec) in config.services.iter().enumerate() {
        let service = SimService::new(spec.profile.clone(), config.max_tier(), 0.0)?;
        endpoints.push(serve_service(service, clock, opts.service_addr(i)).await?);
    }
    Ok(endpoints)
}

async fn probe_loop(
    monitor: Arc<PerformanceMonitor>,
    client: ServiceClient,
    id: ServiceId,
    clock: WallClock,
    (period, until): (f64, f64),
    limit: usize,
    deadline: Duration,
) -> Result<(), WallError> {
    for t in ticks(period, until) {
        clock.sleep_until(t).await;
        let at = clock.now();
        let result = client.probe(limit, deadline).await;
        monitor.record(&id, at, result.outcome)?;
    }
    Ok(())
}

async fn sample_loop(
    monitor: Arc<Monitor>,
    client: ServiceClient,
    id: ServiceId,
    clock: WallClock,
    (period, until): (f64, f64),
    deadline: Duration,
) {
    let limit = monitor.config.query_limit;
    for t in ticks(period, until) {
        clock.sleep_until(t).await;
        let sent_at = clock.now();
        let result = client.probe(limit, deadline).await;
        let (at, outcome) = match (result.outcome, result.items) {
            (ProbeOutcome::Completed { .. }, Some(items)) => (
                clock.now(),
                SampleOutcome::Items(items.iter().map(|i| i.to_observed(clock.epoch())).collect()),
            ),
            _ => (sent_at, SampleOutcome::Miss),
        };
        monitor.sampler.record(&id, at, outcome);
    }
}

async fn join_all(tasks: &mut JoinSet<Result<(), WallError>>) -> Result<(), WallError> {
    while let Some(joined) = tasks.join_next().await {
        joined.map_err(|e| WallError::Task(e.to_string()))??;
    }
    Ok(())
}

/// Runs a scenario against real HTTP endpoints for `duration` wall seconds,
/// evaluating each window as it closes and sweeping at the end.
pub async fn run_wall(monitor: Monitor, opts: &WallOptions) -> Result<WallRun, WallError> {
    let config = monitor.config.clone();
    let clock = WallClock::start();
    let endpoints = start_gateways(&config, clock, opts).await?;
    let trust_api = match opts.trust_addr {
        Some(addr) => {
            Some(serve_trust_api(monitor.engine.clone(), config.service_ids(), clock, addr).await?)
        }
        None => None,
    };

    // the prober writes through its own handle; the monitor keeps the same store
    let monitor = Arc::new(monitor);
    let prober = {
        let mut p = PerformanceMonitor::new(monitor.tsdb().clone(), config.query_limit);
        for spec in &config.services {
            p.set_deadline(spec.id().clone(), config.deadline_ms(spec));
        }
        Arc::new(p)
    };
    let mut tasks = JoinSet::new();
    for (spec, endpoint) in config.services.iter().zip(&endpoints) {
        let client = ServiceClient::new(&endpoint.url())?;
        let timeout = deadline(&config, spec);
        tasks.spawn(probe_loop(
            prober.clone(),
            client.clone(),
            spec.id().clone(),
            clock,
            (config.probe_period, config.duration),
            config.query_limit,
            timeout,
        ));
        let sampling = sample_loop(
            monitor.clone(),
            client,
            spec.id().clone(),
            clock,
            (config.sampling_period, config.duration),
            timeout,
        );
        tasks.spawn(async move {
            sampling.await;
            Ok(())
        });
    }

    let mut skipped = Vec::new();
    let windows = config.windows();
    let (closed, last): (Vec<_>, Vec<_>) =
        windows.iter().partition(|&&(_, end)| end < config.duration);
    for (start, end) in closed {
        clock.sleep_until(end + EVALUATION_GRACE).await;
        skipped.extend(monitor.evaluate_window(start, end)?);
    }
    join_all(&mut tasks).await?;
    for (start, end) in last {
        skipped.extend(monitor.evaluate_window(start, end)?);
    }
    let rankings = monitor.sweep(config.duration)?;
    let report = SweepReport::new(&config, config.duration, rankings);

    let mut event_log = Vec::new();
    for endpoint in endpoints {
        event_log.extend(endpoint.shutdown().await?);
    }
    event_log.sort_by(|a, b| a.time.total_cmp(&b.time));
    drop(prober);
    let monitor =
        Arc::try_unwrap(monitor).map_err(|_| WallError::Task("monitor still shared".into()))?;
    Ok(WallRun {
        output: RunOutput {
            monitor,
            report,
            event_log,
            skipped,
        },
        trust_api,
    })
}

/// Probes every service of `config` over HTTP every `period` seconds for
/// `until` wall seconds and returns the store of probe records. No sampling
/// traffic reaches the services.
pub async fn probe_over_wire(
    config: &ScenarioConfig,
    period: f64,
    until: f64,
) -> Result<Arc<TimeSeriesStore>, WallError> {
    let clock = WallClock::start();
    let endpoints = start_gateways(config, clock, &WallOptions::default()).await?;
    let store = Arc::new(TimeSeriesStore::new());
    let mut prober = PerformanceMonitor::new(store.clone(), config.query_limit);
    for spec in &config.services {
        prober.set_deadline(spec.id().clone(), config.deadline_ms(spec));
    }
    let prober = Arc::new(prober);
    let mut tasks = JoinSet::new();
    for (spec, endpoint) in config.services.iter().zip(&endpoints) {
        tasks.spawn(probe_loop(
            prober.clone(),
            ServiceClient::new(&endpoint.url())?,
            spec.id().clone(),
            clock,
            (period, until),
            config.query_limit,
            deadline(config, spec),
        ));
    }
    join_all(&mut tasks).await?;
    for endpoint in endpoints {
        endpoint.shutdown().await?;
    }
    Ok(store)
}

/// The same probe schedule as [`probe_over_wire`], run on the virtual clock.
pub fn probe_in_process(
    config: &ScenarioConfig,
    period: f64,
    until: f64,
) -> Result<Arc<TimeSeriesStore>, WallError> {
    let mut sim: Simulator<ProbeTick> = Simulator::new(config.max_tier());
    let handles: Vec<ServiceHandle> = config
        .services
        .iter()
        .map(|s| sim.spawn_service(s.profile.clone()))
        .collect::<Result<_, _>>()?;
    let store = Arc::new(TimeSeriesStore::new());
    let mut prober = PerformanceMonitor::new(store.clone(), config.query_limit);
    for spec in &config.services {
        prober.set_deadline(spec.id().clone(), config.deadline_ms(spec));
    }
    schedule_probes(&mut sim, &handles, period, until, &prober)?;
    Ok(store)
}

/// Differences between two probe runs of the same services: record counts,
/// accept/success classification, and response times further apart than
/// `epsilon_ms`. Empty when the runs agree.
pub fn probe_run_differences(
    services: &[ServiceId],
    left: &TimeSeriesStore,
    right: &TimeSeriesStore,
    epsilon_ms: f64,
) -> Vec<String> {
    let mut diffs = Vec::new();
    for id in services {
        let (a, b): (Vec<ProbeRecord>, Vec<ProbeRecord>) = (left.records(id), right.records(id));
        if a.len() != b.len() {
            diffs.push(format!("{id}: {} records vs {}", a.len(), b.len()));
            continue;
        }
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            if (x.accepted, x.success) != (y.accepted, y.success) {
                diffs.push(format!(
                    "{id} probe {i}: accepted/success {}/{} vs {}/{}",
                    x.accepted, x.success, y.accepted, y.success
                ));
            } else if let (Some(p), Some(q)) = (x.response_time_ms, y.response_time_ms) {
                if (p - q).abs() > epsilon_ms {
                    diffs.push(format!(
                        "{id} probe {i}: response time {p:.1} ms vs {q:.1} ms"
                    ));
                }
            }
        }
    }
    diffs
}
