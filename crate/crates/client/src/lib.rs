//! Thin HTTP client for the data-service gateway and the trust API.

use std::time::{Duration, Instant};

use reqwest::StatusCode;
use thiserror::Error;
use url::Url;

use svctrust_core::pmm::ProbeOutcome;
use svctrust_core::report::TrustReport;
use svctrust_core::tmm::TrustRecord;
use svctrust_core::wire::WireItem;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid url: {0}")]
    Url(#[from] url::ParseError),
    #[error("service unavailable: {0}")]
    Unavailable(String),
    #[error("request rejected ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),
}

async fn check(resp: reqwest::Response) -> Result<reqwest::Response, ClientError> {
    match resp.status() {
        StatusCode::OK => Ok(resp),
        StatusCode::SERVICE_UNAVAILABLE => Err(ClientError::Unavailable(
            resp.text().await.unwrap_or_default(),
        )),
        status => Err(ClientError::Rejected {
            status: status.as_u16(),
            message: resp.text().await.unwrap_or_default(),
        }),
    }
}

/// Client of one data service's `GET /items/latest` endpoint.
#[derive(Clone)]
pub struct ServiceClient {
    http: reqwest::Client,
    base: Url,
}

/// Outcome of a probe together with the delivered items, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub outcome: ProbeOutcome,
    pub items: Option<Vec<WireItem>>,
}

impl ProbeResult {
    fn denied() -> Self {
        ProbeResult {
            outcome: ProbeOutcome::Denied,
            items: None,
        }
    }

    fn failed() -> Self {
        ProbeResult {
            outcome: ProbeOutcome::Failed,
            items: None,
        }
    }
}

impl ServiceClient {
    pub fn new(base: &str) -> Result<Self, ClientError> {
        Ok(ServiceClient {
            http: reqwest::Client::new(),
            base: Url::parse(base)?,
        })
    }

    pub fn base_url(&self) -> &Url {
        &self.base
    }

    fn latest_url(&self, limit: usize) -> Result<Url, ClientError> {
        let mut url = self.base.join("items/latest")?;
        url.query_pairs_mut()
            .append_pair("limit", &limit.to_string());
        Ok(url)
    }

    pub async fn latest(&self, limit: usize) -> Result<Vec<WireItem>, ClientError> {
        let resp = self.http.get(self.latest_url(limit)?).send().await?;
        Ok(check(resp).await?.json().await?)
    }

    /// Issues one query and classifies it. A refused connection or a 503
    /// is a denial; anything going wrong after the service accepted the
    /// request, including running past `deadline`, is a failure.
    pub async fn probe(&self, limit: usize, deadline: Duration) -> ProbeResult {
        let Ok(url) = self.latest_url(limit) else {
            return ProbeResult::failed();
        };
        let started = Instant::now();
        let attempt = async {
            let resp = match self.http.get(url).send().await {
                Ok(r) => r,
                Err(e) if e.is_connect() => return ProbeResult::denied(),
                Err(_) => return ProbeResult::failed(),
            };
            match resp.status() {
                StatusCode::OK => {}
                StatusCode::SERVICE_UNAVAILABLE => return ProbeResult::denied(),
                _ => return ProbeResult::failed(),
            }
            match resp.json::<Vec<WireItem>>().await {
                Ok(items) => ProbeResult {
                    outcome: ProbeOutcome::Completed {
                        latency_ms: started.elapsed().as_secs_f64() * 1000.0,
                    },
                    items: Some(items),
                },
                Err(_) => ProbeResult::failed(),
            }
        };
        tokio::time::timeout(deadline, attempt)
            .await
            .unwrap_or_else(|_| ProbeResult::failed())
    }
}

/// Client of the trust API.
#[derive(Clone)]
pub struct TrustClient {
    http: reqwest::Client,
    base: Url,
}

impl TrustClient {
    pub fn new(base: &str) -> Result<Self, ClientError> {
        Ok(TrustClient {
            http: reqwest::Client::new(),
            base: Url::parse(base)?,
        })
    }

    /// `GET /trust/ranking?alpha=A&beta=B`.
    pub async fn ranking(&self, alpha: f64, beta: f64) -> Result<TrustReport, ClientError> {
        let mut url = self.base.join("trust/ranking")?;
        url.query_pairs_mut()
            .append_pair("alpha", &alpha.to_string())
            .append_pair("beta", &beta.to_string());
        let resp = self.http.get(url).send().await?;
        Ok(check(resp).await?.json().await?)
    }

    /// `GET /trust/history/{service}`.
    pub async fn history(&self, service: &str) -> Result<Vec<TrustRecord>, ClientError> {
        let url = self.base.join("trust/history/")?.join(service)?;
        let resp = self.http.get(url).send().await?;
        Ok(check(resp).await?.json().await?)
    }
}
