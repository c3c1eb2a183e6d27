//! Trust query API.
//!
//! - `GET /trust/ranking?alpha=A&beta=B`: the trust report; 400 on invalid
//!   weights, 503 while no service has fresh factors.
//! - `GET /trust/history/{service}`: the trust history of one service.
//! - `GET /health`

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use svctrust_core::tmm::{TmmError, TrustEngine};
use svctrust_core::trust::TrustWeights;
use svctrust_core::ServiceId;

use crate::{Endpoint, GatewayError, WallClock};

struct ApiState {
    engine: Arc<TrustEngine>,
    services: Vec<ServiceId>,
    clock: WallClock,
}

#[derive(Debug, Deserialize)]
struct WeightQuery {
    alpha: f64,
    beta: f64,
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

pub fn router(engine: Arc<TrustEngine>, services: Vec<ServiceId>, clock: WallClock) -> Router {
    Router::new()
        .route("/trust/ranking", get(ranking))
        .route("/trust/history/{service}", get(history))
        .route("/health", get(|| async { "ok" }))
        .with_state(Arc::new(ApiState {
            engine,
            services,
            clock,
        }))
}

/// Serves trust requests over `services` at `addr`.
pub async fn serve_trust_api(
    engine: Arc<TrustEngine>,
    services: Vec<ServiceId>,
    clock: WallClock,
    addr: SocketAddr,
) -> Result<Endpoint, GatewayError> {
    let endpoint = Endpoint::bind(addr, router(engine, services, clock)).await?;
    tracing::info!(addr = %endpoint.addr(), "trust api listening");
    Ok(endpoint)
}

async fn ranking(
    State(state): State<Arc<ApiState>>,
    query: Result<Query<WeightQuery>, QueryRejection>,
) -> Response {
    let Query(q) = match query {
        Ok(q) => q,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let weights = match TrustWeights::new(q.alpha, q.beta) {
        Ok(w) => w,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    match state
        .engine
        .rank_services(&state.services, &weights, state.clock.now())
    {
        Ok(ranking) => Json(ranking).into_response(),
        Err(TmmError::EmptyRanking(omitted)) => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "error": "no trust factors available yet", "omitted": omitted })),
        )
            .into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn history(State(state): State<Arc<ApiState>>, Path(service): Path<String>) -> Response {
    let id = ServiceId::from(service);
    if !state.services.contains(&id) {
        return error(StatusCode::NOT_FOUND, format!("unknown service {id}"));
    }
    Json(
        state
            .engine
            .trust_history(&id, f64::NEG_INFINITY, f64::INFINITY),
    )
    .into_response()
}
