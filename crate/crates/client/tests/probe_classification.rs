use std::net::SocketAddr;
use std::time::Duration;

use axum::extract::Query;
use axum::http::StatusCode;
use axum::routing::get;
use axum::{Json, Router};
use serde_json::{json, Value};

use svctrust_client::{ClientError, ServiceClient, TrustClient};
use svctrust_core::pmm::ProbeOutcome;

async fn spawn(router: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    addr
}

fn items() -> Value {
    json!([
        {"id": "s-000002", "produced_at": 1_700_000_010, "value": 36.5},
        {"id": "s-000001", "produced_at": 1_700_000_005, "value": 36.9}
    ])
}

async fn client_for(router: Router) -> ServiceClient {
    let addr = spawn(router).await;
    ServiceClient::new(&format!("http://{addr}/")).unwrap()
}

const DEADLINE: Duration = Duration::from_millis(400);

#[tokio::test]
async fn ok_response_is_completed_with_items() {
    let client =
        client_for(Router::new().route("/items/latest", get(|| async { Json(items()) }))).await;
    let result = client.probe(10, DEADLINE).await;
    assert!(matches!(result.outcome, ProbeOutcome::Completed { latency_ms } if latency_ms >= 0.0));
    let items = result.items.unwrap();
    assert_eq!(items.len(), 2);
    assert_eq!(items[0].id, "s-000002");
    assert_eq!(client.latest(10).await.unwrap(), items);
}

#[tokio::test]
async fn limit_is_sent_as_query_parameter() {
    let router = Router::new().route(
        "/items/latest",
        get(
            |Query(q): Query<std::collections::HashMap<String, String>>| async move {
                assert_eq!(q.get("limit").map(String::as_str), Some("3"));
                Json(json!([]))
            },
        ),
    );
    let client = client_for(router).await;
    assert_eq!(client.latest(3).await.unwrap(), vec![]);
}

#[tokio::test]
async fn service_unavailable_is_denied() {
    let client = client_for(Router::new().route(
        "/items/latest",
        get(|| async { (StatusCode::SERVICE_UNAVAILABLE, "busy") }),
    ))
    .await;
    assert_eq!(
        client.probe(10, DEADLINE).await.outcome,
        ProbeOutcome::Denied
    );
    assert!(matches!(
        client.latest(10).await,
        Err(ClientError::Unavailable(_))
    ));
}

#[tokio::test]
async fn refused_connection_is_denied() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let client = ServiceClient::new(&format!("http://{addr}/")).unwrap();
    assert_eq!(
        client.probe(10, DEADLINE).await.outcome,
        ProbeOutcome::Denied
    );
}

#[tokio::test]
async fn server_error_is_failed() {
    let client = client_for(Router::new().route(
        "/items/latest",
        get(|| async { (StatusCode::INTERNAL_SERVER_ERROR, "boom") }),
    ))
    .await;
    let result = client.probe(10, DEADLINE).await;
    assert_eq!(result.outcome, ProbeOutcome::Failed);
    assert!(result.items.is_none());
}

#[tokio::test]
async fn malformed_body_is_failed() {
    let client = client_for(Router::new().route(
        "/items/latest",
        get(|| async {
            Json(json!([{"id": "x", "produced_at": 1, "value": 1.0, "inserted_at": 2}]))
        }),
    ))
    .await;
    assert_eq!(
        client.probe(10, DEADLINE).await.outcome,
        ProbeOutcome::Failed
    );
}

#[tokio::test]
async fn response_past_deadline_is_failed() {
    let client = client_for(Router::new().route(
        "/items/latest",
        get(|| async {
            tokio::time::sleep(Duration::from_millis(300)).await;
            Json(items())
        }),
    ))
    .await;
    assert_eq!(
        client.probe(10, Duration::from_millis(100)).await.outcome,
        ProbeOutcome::Failed
    );
}

#[tokio::test]
async fn trust_client_surfaces_status_codes() {
    let router = Router::new().route(
        "/trust/ranking",
        get(
            |Query(q): Query<std::collections::HashMap<String, String>>| async move {
                match q.get("alpha").map(String::as_str) {
                    Some("0.9") => (StatusCode::BAD_REQUEST, Json(json!({"error": "weights"}))),
                    _ => (
                        StatusCode::SERVICE_UNAVAILABLE,
                        Json(json!({"error": "no data"})),
                    ),
                }
            },
        ),
    );
    let addr = spawn(router).await;
    let client = TrustClient::new(&format!("http://{addr}/")).unwrap();
    assert!(matches!(
        client.ranking(0.9, 0.3).await,
        Err(ClientError::Rejected { status: 400, .. })
    ));
    assert!(matches!(
        client.ranking(0.5, 0.5).await,
        Err(ClientError::Unavailable(_))
    ));
}
