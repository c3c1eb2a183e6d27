//! Scoring formulas for service performance, data quality and trust.
//!
//! Everything here is pure arithmetic over value types. Inputs are
//! validated, outputs are always in `[0, 1]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ServiceId;

/// Tolerance used when checking that a weight vector sums to one.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("no data: no requests were submitted in the observation window")]
    NoData,
    #[error("invalid SLA: expected response time must be > 0, got {0} ms")]
    InvalidSla(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(MetricError::InvalidInput(format!(
            "{name} must be in [0,1], got {v}"
        )))
    }
}

fn check_weight_vector(names: &[&str], values: &[f64]) -> Result<()> {
    for (name, &v) in names.iter().zip(values) {
        if !(v.is_finite() && v >= 0.0) {
            return Err(MetricError::InvalidWeights(format!(
                "{name} must be >= 0, got {v}"
            )));
        }
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(MetricError::InvalidWeights(format!(
            "{} must sum to 1, got {sum}",
            names.join(" + ")
        )));
    }
    Ok(())
}

/// Relative importance of performance (`alpha`) and data quality (`beta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrustWeights")]
pub struct TrustWeights {
    alpha: f64,
    beta: f64,
}

#[derive(Deserialize)]
struct RawTrustWeights {
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawTrustWeights> for TrustWeights {
    type Error = MetricError;

    fn try_from(raw: RawTrustWeights) -> Result<Self> {
        TrustWeights::new(raw.alpha, raw.beta)
    }
}

impl TrustWeights {
    /// Weights are checked, never renormalised.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_weight_vector(&["alpha", "beta"], &[alpha, beta])?;
        Ok(TrustWeights { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Weights of availability, task success ratio and time efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPerformanceWeights")]
pub struct PerformanceWeights {
    availability: f64,
    task_success: f64,
    time_efficiency: f64,
}

#[derive(Deserialize)]
struct RawPerformanceWeights {
    availability: f64,
    task_success: f64,
    time_efficiency: f64,
}

impl TryFrom<RawPerformanceWeights> for PerformanceWeights {
    type Error = MetricError;

    fn try_from(raw: RawPerformanceWeights) -> Result<Self> {
        PerformanceWeights::new(raw.availability, raw.task_success, raw.time_efficiency)
    }
}

impl PerformanceWeights {
    pub fn new(availability: f64, task_success: f64, time_efficiency: f64) -> Result<Self> {
        check_weight_vector(
            &["availability", "task_success", "time_efficiency"],
            &[availability, task_success, time_efficiency],
        )?;
        Ok(PerformanceWeights {
            availability,
            task_success,
            time_efficiency,
        })
    }

    /// All three metrics equally important.
    pub fn equal() -> Self {
        let third = 1.0 / 3.0;
        PerformanceWeights {
            availability: third,
            task_success: third,
            time_efficiency: third,
        }
    }

    pub fn availability(&self) -> f64 {
        self.availability
    }

    pub fn task_success(&self) -> f64 {
        self.task_success
    }

    pub fn time_efficiency(&self) -> f64 {
        self.time_efficiency
    }
}

impl Default for PerformanceWeights {
    fn default() -> Self {
        Self::equal()
    }
}

/// Request counts and response times observed for one service over a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceInputs {
    /// Submitted requests.
    pub total: u64,
    /// Requests the service accepted.
    pub accepted: u64,
    /// Accepted requests whose data reached the consumer.
    pub successful: u64,
    /// Mean response time of successful requests, in ms. `None` when
    /// nothing succeeded.
    pub mean_response_ms: Option<f64>,
    /// Expected response time promised by the SLA, in ms.
    pub expected_response_ms: f64,
}

impl PerformanceInputs {
    pub fn new(
        total: u64,
        accepted: u64,
        successful: u64,
        mean_response_ms: Option<f64>,
        expected_response_ms: f64,
    ) -> Result<Self> {
        let inputs = PerformanceInputs {
            total,
            accepted,
            successful,
            mean_response_ms,
            expected_response_ms,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    fn validate(&self) -> Result<()> {
        if self.accepted > self.total || self.successful > self.accepted {
            return Err(MetricError::InvalidInput(format!(
                "counts must satisfy successful <= accepted <= total, got {}/{}/{}",
                self.successful, self.accepted, self.total
            )));
        }
        match self.mean_response_ms {
            Some(rt) if !(rt.is_finite() && rt >= 0.0) => Err(MetricError::InvalidInput(format!(
                "mean response time must be >= 0, got {rt}"
            ))),
            Some(_) if self.successful == 0 => Err(MetricError::InvalidInput(
                "mean response time given but no request succeeded".into(),
            )),
            None if self.successful > 0 => Err(MetricError::InvalidInput(
                "successful requests need a mean response time".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Request and production times of a single data item, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimelinessInputs {
    pub requested_at: f64,
    pub produced_at: f64,
    /// Length of the validity interval, seconds.
    pub validity_interval: f64,
}

impl TimelinessInputs {
    pub fn new(requested_at: f64, produced_at: f64, validity_interval: f64) -> Self {
        TimelinessInputs {
            requested_at,
            produced_at,
            validity_interval,
        }
    }

    /// End of the validity interval.
    pub fn expires_at(&self) -> f64 {
        self.produced_at + self.validity_interval
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Performance,
    DataQuality,
}

impl std::fmt::Display for FactorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FactorKind::Performance => f.write_str("performance"),
            FactorKind::DataQuality => f.write_str("data_quality"),
        }
    }
}

/// An evaluated trust factor for one service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorLevel {
    pub service_id: ServiceId,
    pub kind: FactorKind,
    pub value: f64,
    pub evaluated_at: f64,
}

impl FactorLevel {
    pub fn new(
        service_id: ServiceId,
        kind: FactorKind,
        value: f64,
        evaluated_at: f64,
    ) -> Result<Self> {
        check_unit("factor level", value)?;
        Ok(FactorLevel {
            service_id,
            kind,
            value,
            evaluated_at,
        })
    }
}

/// Fraction of submitted requests that were accepted.
pub fn availability(inputs: &PerformanceInputs) -> Result<f64> {
    inputs.validate()?;
    if inputs.total == 0 {
        return Err(MetricError::NoData);
    }
    Ok(inputs.accepted as f64 / inputs.total as f64)
}

/// Fraction of accepted requests that succeeded; 0 when nothing was accepted.
pub fn task_success_ratio(inputs: &PerformanceInputs) -> f64 {
    if inputs.accepted == 0 {
        0.0
    } else {
        (inputs.successful.min(inputs.accepted)) as f64 / inputs.accepted as f64
    }
}

/// Slack of the mean response time under the SLA bound.
///
/// A mean at or above the bound scores 0, as does a window without any
/// successful request.
pub fn time_efficiency(inputs: &PerformanceInputs) -> Result<f64> {
    let ert = inputs.expected_response_ms;
    if !(ert.is_finite() && ert > 0.0) {
        return Err(MetricError::InvalidSla(ert));
    }
    match inputs.mean_response_ms {
        Some(rt) if rt < ert => Ok(1.0 - rt / ert),
        _ => Ok(0.0),
    }
}

/// Weighted sum of availability, task success ratio and time efficiency.
pub fn performance(inputs: &PerformanceInputs, weights: &PerformanceWeights) -> Result<f64> {
    let av = availability(inputs)?;
    let tsr = task_success_ratio(inputs);
    let te = time_efficiency(inputs)?;
    Ok(combine_performance(av, tsr, te, weights))
}

/// Combines already computed metric values.
pub fn combine_performance(av: f64, tsr: f64, te: f64, weights: &PerformanceWeights) -> f64 {
    let p = weights.availability * av + weights.task_success * tsr + weights.time_efficiency * te;
    p.clamp(0.0, 1.0)
}

/// Linear freshness decay of one item over its validity interval.
///
/// An item requested before its production timestamp (clock skew) is
/// clamped to 1.
pub fn data_timeliness(inputs: &TimelinessInputs) -> f64 {
    let TimelinessInputs {
        requested_at,
        produced_at,
        validity_interval,
    } = *inputs;
    debug_assert!(validity_interval > 0.0);
    if requested_at < produced_at {
        tracing::warn!(
            requested_at,
            produced_at,
            "item timestamp is in the future; clamping timeliness to 1"
        );
        return 1.0;
    }
    if requested_at < inputs.expires_at() {
        (1.0 - (requested_at - produced_at) / validity_interval).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Saturating score `n / (n + 1)` for `n` insertions per validity interval.
pub fn database_timeliness(insertions_per_interval: f64) -> Result<f64> {
    let n = insertions_per_interval;
    if n.is_nan() || n < 0.0 {
        return Err(MetricError::InvalidInput(format!(
            "insertions per validity interval must be >= 0, got {n}"
        )));
    }
    if n.is_infinite() {
        return Ok(1.0);
    }
    Ok(n / (n + 1.0))
}

pub fn data_quality(data_timeliness: f64, database_timeliness: f64) -> Result<f64> {
    check_unit("data timeliness", data_timeliness)?;
    check_unit("database timeliness", database_timeliness)?;
    Ok(data_timeliness * database_timeliness)
}

/// Convex combination of performance and data quality.
pub fn trust_index(performance: f64, data_quality: f64, weights: &TrustWeights) -> Result<f64> {
    check_unit("performance", performance)?;
    check_unit("data quality", data_quality)?;
    let t = weights.alpha * performance + weights.beta * data_quality;
    // alpha + beta may differ from 1 by the weight tolerance
    Ok(t.clamp(performance.min(data_quality), performance.max(data_quality)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    fn inputs(
        total: u64,
        accepted: u64,
        successful: u64,
        rt: Option<f64>,
        ert: f64,
    ) -> PerformanceInputs {
        PerformanceInputs::new(total, accepted, successful, rt, ert).unwrap()
    }

    #[test]
    fn availability_examples() {
        assert!((availability(&inputs(10, 8, 0, None, 1.0)).unwrap() - 0.8).abs() < EPS);
        assert_eq!(availability(&inputs(5, 0, 0, None, 1.0)).unwrap(), 0.0);
        assert_eq!(availability(&inputs(10, 10, 0, None, 1.0)).unwrap(), 1.0);
        assert_eq!(
            availability(&inputs(0, 0, 0, None, 1.0)),
            Err(MetricError::NoData)
        );
    }

    #[test]
    fn task_success_examples() {
        assert!((task_success_ratio(&inputs(10, 10, 9, Some(1.0), 1.0)) - 0.9).abs() < EPS);
        assert_eq!(task_success_ratio(&inputs(4, 0, 0, None, 1.0)), 0.0);
        assert_eq!(task_success_ratio(&inputs(7, 7, 7, Some(1.0), 1.0)), 1.0);
    }

    #[test]
    fn time_efficiency_branches() {
        assert!((time_efficiency(&inputs(1, 1, 1, Some(50.0), 200.0)).unwrap() - 0.75).abs() < EPS);
        assert_eq!(
            time_efficiency(&inputs(1, 1, 1, Some(250.0), 200.0)).unwrap(),
            0.0
        );
        assert_eq!(
            time_efficiency(&inputs(1, 1, 1, Some(200.0), 200.0)).unwrap(),
            0.0
        );
        // approaching the branch point from below tends to 0 as well
        let just_below = time_efficiency(&inputs(1, 1, 1, Some(200.0 - 1e-9), 200.0)).unwrap();
        assert!(just_below < 1e-10);
        assert_eq!(time_efficiency(&inputs(1, 1, 0, None, 200.0)).unwrap(), 0.0);
    }

    #[test]
    fn time_efficiency_rejects_bad_sla() {
        let bad = PerformanceInputs {
            total: 1,
            accepted: 1,
            successful: 1,
            mean_response_ms: Some(10.0),
            expected_response_ms: 0.0,
        };
        assert_eq!(time_efficiency(&bad), Err(MetricError::InvalidSla(0.0)));
    }

    #[test]
    fn performance_examples() {
        let w = PerformanceWeights::equal();
        assert!((combine_performance(0.8, 0.9, 0.75, &w) - 2.45 / 3.0).abs() < EPS);
        assert!((combine_performance(1.0, 1.0, 1.0, &w) - 1.0).abs() < EPS);
        let skewed = PerformanceWeights::new(0.5, 0.25, 0.25).unwrap();
        assert_eq!(combine_performance(1.0, 1.0, 1.0, &skewed), 1.0);
        assert_eq!(combine_performance(0.0, 0.0, 0.0, &w), 0.0);
        // 20 probes, 16 accepted, 14 successful, rt 100 against 400
        let p = performance(&inputs(20, 16, 14, Some(100.0), 400.0), &w).unwrap();
        assert!((p - (0.8 + 0.875 + 0.75) / 3.0).abs() < EPS);
        assert_eq!(
            performance(&inputs(0, 0, 0, None, 400.0), &w),
            Err(MetricError::NoData)
        );
    }

    #[test]
    fn data_timeliness_branches() {
        let td = |age: f64| data_timeliness(&TimelinessInputs::new(1000.0 + age, 1000.0, 60.0));
        assert!((td(30.0) - 0.5).abs() < EPS);
        assert_eq!(td(90.0), 0.0);
        assert_eq!(td(60.0), 0.0);
        assert_eq!(td(-2.0), 1.0);
        assert_eq!(td(0.0), 1.0);
    }

    #[test]
    fn database_timeliness_examples() {
        assert!((database_timeliness(3.0).unwrap() - 0.75).abs() < EPS);
        assert_eq!(database_timeliness(0.0).unwrap(), 0.0);
        let fast = database_timeliness(1.5).unwrap();
        let slow = database_timeliness(0.4).unwrap();
        assert!((fast - 0.6).abs() < EPS);
        assert!((slow - 0.4 / 1.4).abs() < EPS);
        assert!(fast > slow);
        assert!(database_timeliness(-1.0).is_err());
        assert!(database_timeliness(f64::NAN).is_err());
    }

    #[test]
    fn data_quality_examples() {
        assert_eq!(data_quality(0.5, 0.5).unwrap(), 0.25);
        assert_eq!(data_quality(1.0, 0.75).unwrap(), 0.75);
        assert_eq!(data_quality(0.0, 0.9).unwrap(), 0.0);
        assert!(data_quality(1.2, 0.5).is_err());
        assert!(data_quality(0.5, -0.1).is_err());
    }

    #[test]
    fn trust_index_examples() {
        let half = TrustWeights::new(0.5, 0.5).unwrap();
        assert!((trust_index(0.8, 0.4, &half).unwrap() - 0.6).abs() < EPS);
        let perf_only = TrustWeights::new(1.0, 0.0).unwrap();
        assert_eq!(trust_index(0.83, 0.12, &perf_only).unwrap(), 0.83);
        let dq_only = TrustWeights::new(0.0, 1.0).unwrap();
        assert_eq!(trust_index(0.99, 0.37, &dq_only).unwrap(), 0.37);
        assert!(trust_index(1.5, 0.2, &half).is_err());
    }

    #[test]
    fn weights_are_validated_not_renormalised() {
        assert!(TrustWeights::new(0.9, 0.3).is_err());
        assert!(TrustWeights::new(-0.1, 1.1).is_err());
        assert!(TrustWeights::new(0.7, 0.3).is_ok());
        assert!(PerformanceWeights::new(0.5, 0.5, 0.5).is_err());
        let w: std::result::Result<TrustWeights, _> =
            serde_json::from_str(r#"{"alpha":0.6,"beta":0.6}"#);
        assert!(w.is_err());
    }

    #[test]
    fn inconsistent_counts_rejected() {
        assert!(PerformanceInputs::new(5, 6, 0, None, 1.0).is_err());
        assert!(PerformanceInputs::new(5, 3, 4, Some(1.0), 1.0).is_err());
        assert!(PerformanceInputs::new(5, 3, 2, None, 1.0).is_err());
    }
}
