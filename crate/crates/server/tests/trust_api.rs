use std::sync::Arc;

use serde_json::Value;

use svctrust_client::{ClientError, TrustClient};
use svctrust_core::dqmm::{DataQualityLevel, EdqStore};
use svctrust_core::pmm::PerfDb;
use svctrust_core::tmm::{TrustEngine, TrustHistory, TrustRecord};
use svctrust_core::trust::{FactorKind, FactorLevel};
use svctrust_core::ServiceId;
use svctrust_server::{serve_trust_api, Endpoint, WallClock};

struct Fixture {
    perfdb: Arc<PerfDb>,
    edq: Arc<EdqStore>,
    api: Endpoint,
}

async fn fixture() -> Fixture {
    let perfdb = Arc::new(PerfDb::in_memory());
    let edq = Arc::new(EdqStore::in_memory());
    let engine = Arc::new(TrustEngine::new(
        perfdb.clone(),
        edq.clone(),
        Arc::new(TrustHistory::in_memory()),
        600.0,
    ));
    let services: Vec<ServiceId> = vec!["a".into(), "b".into(), "c".into()];
    let api = serve_trust_api(
        engine,
        services,
        WallClock::start(),
        "127.0.0.1:0".parse().unwrap(),
    )
    .await
    .unwrap();
    Fixture { perfdb, edq, api }
}

fn seed_factors(f: &Fixture, id: &str, p: f64, t_d: f64, t_db: f64) {
    f.perfdb
        .append(FactorLevel::new(id.into(), FactorKind::Performance, p, 0.0).unwrap())
        .unwrap();
    f.edq
        .append(DataQualityLevel::new(id.into(), 0.0, t_d, t_db).unwrap())
        .unwrap();
}

async fn get(url: String) -> (u16, Value) {
    let resp = reqwest::get(url).await.unwrap();
    let status = resp.status().as_u16();
    (status, resp.json().await.unwrap())
}

#[tokio::test]
async fn no_factors_yet_gives_503() {
    let f = fixture().await;
    let (status, body) = get(format!("{}trust/ranking?alpha=0.5&beta=0.5", f.api.url())).await;
    assert_eq!(status, 503);
    assert_eq!(body["omitted"].as_array().unwrap().len(), 3);
    f.api.shutdown().await.unwrap();
}

#[tokio::test]
async fn ranking_is_sorted_by_descending_trust() {
    let f = fixture().await;
    seed_factors(&f, "a", 0.9, 0.2, 0.5);
    seed_factors(&f, "b", 0.5, 0.9, 0.9);
    let client = TrustClient::new(&f.api.url()).unwrap();
    let report = client.ranking(0.5, 0.5).await.unwrap();
    let ids: Vec<&str> = report
        .ranking
        .iter()
        .map(|r| r.service_id.as_str())
        .collect();
    assert_eq!(ids, ["b", "a"]);
    assert!(report.ranking[0].trust >= report.ranking[1].trust);
    assert_eq!(report.ranking[0].rank, 1);
    assert_eq!(report.omitted.len(), 1);
    assert_eq!(report.omitted[0].service_id.as_str(), "c");

    let alpha_only = client.ranking(1.0, 0.0).await.unwrap();
    assert_eq!(alpha_only.ranking[0].service_id.as_str(), "a");

    let history: Vec<TrustRecord> = client.history("a").await.unwrap();
    assert_eq!(history.len(), 2);
    assert!(history.iter().all(TrustRecord::is_consistent));
    f.api.shutdown().await.unwrap();
}

#[tokio::test]
async fn invalid_weights_give_400() {
    let f = fixture().await;
    seed_factors(&f, "a", 0.9, 0.2, 0.5);
    for query in [
        "alpha=0.9&beta=0.3",
        "alpha=-0.5&beta=1.5",
        "alpha=0.5",
        "alpha=x&beta=0.5",
        "",
    ] {
        let (status, body) = get(format!("{}trust/ranking?{query}", f.api.url())).await;
        assert_eq!(status, 400, "{query}: {body}");
        assert!(body["error"].is_string());
    }
    let client = TrustClient::new(&f.api.url()).unwrap();
    assert!(matches!(
        client.ranking(0.9, 0.3).await,
        Err(ClientError::Rejected { status: 400, .. })
    ));
    f.api.shutdown().await.unwrap();
}

#[tokio::test]
async fn unknown_service_history_is_404() {
    let f = fixture().await;
    let resp = reqwest::get(format!("{}trust/history/zzz", f.api.url()))
        .await
        .unwrap();
    assert_eq!(resp.status(), 404);
    let health = reqwest::get(format!("{}health", f.api.url()))
        .await
        .unwrap();
    assert_eq!(health.text().await.unwrap(), "ok");
    f.api.shutdown().await.unwrap();
}
