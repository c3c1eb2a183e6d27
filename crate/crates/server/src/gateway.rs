//! `GET /items/latest?limit=L` for one simulated service.
//!
//! Denied requests get a 503. Failed requests are accepted and then the
//! connection is dropped mid-body. Successful requests are answered after
//! the simulated latency has actually elapsed.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use parking_lot::Mutex;
use serde::Deserialize;

use svctrust_core::dqmm::DEFAULT_QUERY_LIMIT;
use svctrust_core::sim::{LogEntry, Response as SimResponse, SimService};
use svctrust_core::wire::WireItem;
use svctrust_core::ServiceId;

use crate::{Endpoint, GatewayError, WallClock};

struct Served {
    service: SimService,
    log: Vec<LogEntry>,
}

struct GatewayState {
    served: Mutex<Served>,
    clock: WallClock,
}

#[derive(Debug, Deserialize)]
struct LatestQuery {
    limit: Option<usize>,
}

/// A running data-service endpoint.
pub struct ServiceEndpoint {
    id: ServiceId,
    endpoint: Endpoint,
    state: Arc<GatewayState>,
}

impl ServiceEndpoint {
    pub fn id(&self) -> &ServiceId {
        &self.id
    }

    pub fn addr(&self) -> SocketAddr {
        self.endpoint.addr()
    }

    pub fn url(&self) -> String {
        self.endpoint.url()
    }

    /// Production, flush and request events so far.
    pub fn event_log(&self) -> Vec<LogEntry> {
        self.state.served.lock().log.clone()
    }

    /// Stops serving and returns the event log.
    pub async fn shutdown(self) -> Result<Vec<LogEntry>, GatewayError> {
        let ServiceEndpoint {
            endpoint, state, ..
        } = self;
        endpoint.shutdown().await?;
        let log = state.served.lock().log.clone();
        Ok(log)
    }
}

fn router(service: SimService, clock: WallClock) -> (Router, Arc<GatewayState>) {
    let state = Arc::new(GatewayState {
        served: Mutex::new(Served {
            service,
            log: Vec::new(),
        }),
        clock,
    });
    let router = Router::new()
        .route("/items/latest", get(latest))
        .with_state(state.clone());
    (router, state)
}

/// Serves `service` at `addr`; port 0 picks a free port.
pub async fn serve_service(
    service: SimService,
    clock: WallClock,
    addr: SocketAddr,
) -> Result<ServiceEndpoint, GatewayError> {
    let id = service.id().clone();
    let (router, state) = router(service, clock);
    let endpoint = Endpoint::bind(addr, router).await?;
    tracing::info!(service = %id, addr = %endpoint.addr(), "data service listening");
    Ok(ServiceEndpoint {
        id,
        endpoint,
        state,
    })
}

async fn latest(State(state): State<Arc<GatewayState>>, Query(q): Query<LatestQuery>) -> Response {
    let limit = q.limit.unwrap_or(DEFAULT_QUERY_LIMIT);
    let response = {
        let mut served = state.served.lock();
        let Served { service, log } = &mut *served;
        service.handle_request(limit, state.clock.now(), log)
    };
    match response {
        SimResponse::Denied => (StatusCode::SERVICE_UNAVAILABLE, "request denied").into_response(),
        SimResponse::Failed => {
            let broken = futures::stream::once(async {
                Err::<Bytes, _>(io::Error::new(
                    io::ErrorKind::ConnectionAborted,
                    "request failed",
                ))
            });
            (
                StatusCode::OK,
                [(header::CONTENT_TYPE, "application/json")],
                Body::from_stream(broken),
            )
                .into_response()
        }
        SimResponse::Data { items, latency_ms } => {
            tokio::time::sleep(Duration::from_secs_f64(latency_ms / 1000.0)).await;
            let epoch = state.clock.epoch();
            let wire: Vec<WireItem> = items
                .iter()
                .map(|i| WireItem::from_item(i, epoch))
                .collect();
            Json(wire).into_response()
        }
    }
}
