//! Trust measurement: collectors, trust engine, trust history and rankings.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dqmm::{DataQualityLevel, EdqStore};
use crate::pmm::PerfDb;
use crate::store::{parse_f64, split_fields, AppendLog, LogRecord, StoreError};
use crate::trust::{self, FactorKind, FactorLevel, MetricError, TrustWeights};
use crate::ServiceId;

#[derive(Debug, Error)]
pub enum TmmError {
    #[error("missing {kind} factor for {service_id}: {detail}")]
    MissingFactor {
        service_id: ServiceId,
        kind: FactorKind,
        detail: String,
    },
    #[error("no service could be ranked")]
    EmptyRanking(Vec<OmittedService>),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// One trust evaluation as kept in the trust history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRecord {
    pub service_id: ServiceId,
    pub requested_at: f64,
    pub alpha: f64,
    pub beta: f64,
    pub performance: f64,
    pub data_quality: f64,
    pub trust: f64,
}

impl TrustRecord {
    /// Recomputes the trust value from the stored fields.
    pub fn recompute(&self) -> Result<f64, MetricError> {
        let w = TrustWeights::new(self.alpha, self.beta)?;
        trust::trust_index(self.performance, self.data_quality, &w)
    }

    pub fn is_consistent(&self) -> bool {
        self.recompute().is_ok_and(|t| t == self.trust)
    }
}

impl LogRecord for TrustRecord {
    const HEADER: &'static str =
        "service_id,requested_at,alpha,beta,performance,data_quality,trust";

    fn service_id(&self) -> &ServiceId {
        &self.service_id
    }

    fn timestamp(&self) -> f64 {
        self.requested_at
    }

    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.service_id,
            self.requested_at,
            self.alpha,
            self.beta,
            self.performance,
            self.data_quality,
            self.trust
        )
    }

    fn from_line(line: &str) -> Result<Self, String> {
        let f = split_fields(line, 7)?;
        Ok(TrustRecord {
            service_id: f[0].into(),
            requested_at: parse_f64(f[1], "requested_at")?,
            alpha: parse_f64(f[2], "alpha")?,
            beta: parse_f64(f[3], "beta")?,
            performance: parse_f64(f[4], "performance")?,
            data_quality: parse_f64(f[5], "data_quality")?,
            trust: parse_f64(f[6], "trust")?,
        })
    }
}

pub type TrustHistory = AppendLog<TrustRecord>;

/// A service in a ranking, with the factors its trust was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedService {
    pub rank: usize,
    pub service_id: ServiceId,
    pub trust: f64,
    pub performance: f64,
    pub performance_evaluated_at: f64,
    pub data_quality: f64,
    pub data_quality_evaluated_at: f64,
    pub data_timeliness: f64,
    pub database_timeliness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmittedService {
    pub service_id: ServiceId,
    pub reason: String,
}

/// Services sorted by descending trust, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub requested_at: f64,
    pub weights: TrustWeights,
    pub ranking: Vec<RankedService>,
    #[serde(default)]
    pub omitted: Vec<OmittedService>,
}

impl Ranking {
    pub fn service_ids(&self) -> Vec<&ServiceId> {
        self.ranking.iter().map(|r| &r.service_id).collect()
    }

    pub fn position(&self, service: &str) -> Option<usize> {
        self.ranking
            .iter()
            .position(|r| r.service_id.as_str() == service)
    }
}

/// Both factor levels of a service, read once.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSnapshot {
    pub performance: FactorLevel,
    pub data_quality: DataQualityLevel,
}

pub struct TrustEngine {
    perfdb: Arc<PerfDb>,
    edq: Arc<EdqStore>,
    history: Arc<TrustHistory>,
    max_factor_age: f64,
}

impl TrustEngine {
    /// Factor levels older than `max_factor_age` seconds are treated as
    /// missing.
    pub fn new(
        perfdb: Arc<PerfDb>,
        edq: Arc<EdqStore>,
        history: Arc<TrustHistory>,
        max_factor_age: f64,
    ) -> Self {
        TrustEngine {
            perfdb,
            edq,
            history,
            max_factor_age,
        }
    }

    pub fn history(&self) -> &Arc<TrustHistory> {
        &self.history
    }

    pub fn perfdb(&self) -> &Arc<PerfDb> {
        &self.perfdb
    }

    pub fn edq(&self) -> &Arc<EdqStore> {
        &self.edq
    }

    fn fresh(
        &self,
        service: &ServiceId,
        kind: FactorKind,
        evaluated_at: Option<f64>,
        at: f64,
    ) -> Result<(), TmmError> {
        let missing = |detail: String| TmmError::MissingFactor {
            service_id: service.clone(),
            kind,
            detail,
        };
        match evaluated_at {
            None => Err(missing("not evaluated yet".into())),
            Some(t) if at - t > self.max_factor_age => Err(missing(format!(
                "latest level from {t} is older than {} s at {at}",
                self.max_factor_age
            ))),
            Some(_) => Ok(()),
        }
    }

    /// Reads the latest level of each factor exactly once.
    pub fn collect(&self, service: &ServiceId, at: f64) -> Result<FactorSnapshot, TmmError> {
        let performance = self.perfdb.latest(service);
        self.fresh(
            service,
            FactorKind::Performance,
            performance.as_ref().map(|l| l.evaluated_at),
            at,
        )?;
        let data_quality = self.edq.latest(service);
        self.fresh(
            service,
            FactorKind::DataQuality,
            data_quality.as_ref().map(|l| l.evaluated_at),
            at,
        )?;
        Ok(FactorSnapshot {
            performance: performance.expect("checked"),
            data_quality: data_quality.expect("checked"),
        })
    }

    fn score(
        &self,
        service: &ServiceId,
        snapshot: &FactorSnapshot,
        weights: &TrustWeights,
        at: f64,
    ) -> Result<TrustRecord, TmmError> {
        let p = snapshot.performance.value;
        let dq = snapshot.data_quality.value;
        let record = TrustRecord {
            service_id: service.clone(),
            requested_at: at,
            alpha: weights.alpha(),
            beta: weights.beta(),
            performance: p,
            data_quality: dq,
            trust: trust::trust_index(p, dq, weights)?,
        };
        self.history.append(record.clone())?;
        Ok(record)
    }

    pub fn evaluate_trust(
        &self,
        service: &ServiceId,
        weights: &TrustWeights,
        at: f64,
    ) -> Result<TrustRecord, TmmError> {
        let snapshot = self.collect(service, at)?;
        self.score(service, &snapshot, weights, at)
    }

    /// Ranks the services that have fresh factors; the others are listed
    /// in `omitted`.
    pub fn rank_services(
        &self,
        services: &[ServiceId],
        weights: &TrustWeights,
        at: f64,
    ) -> Result<Ranking, TmmError> {
        let mut entries = Vec::new();
        let mut omitted = Vec::new();
        for service in services {
            let scored = self.collect(service, at).and_then(|snap| {
                self.score(service, &snap, weights, at)
                    .map(|rec| (snap, rec))
            });
            match scored {
                Ok((snap, rec)) => entries.push(RankedService {
                    rank: 0,
                    service_id: service.clone(),
                    trust: rec.trust,
                    performance: rec.performance,
                    performance_evaluated_at: snap.performance.evaluated_at,
                    data_quality: rec.data_quality,
                    data_quality_evaluated_at: snap.data_quality.evaluated_at,
                    data_timeliness: snap.data_quality.t_d_avg,
                    database_timeliness: snap.data_quality.t_db,
                }),
                Err(e @ TmmError::MissingFactor { .. }) => {
                    tracing::info!(service = %service, error = %e, "service omitted from ranking");
                    omitted.push(OmittedService {
                        service_id: service.clone(),
                        reason: e.to_string(),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        if entries.is_empty() {
            return Err(TmmError::EmptyRanking(omitted));
        }
        sort_ranking(&mut entries);
        Ok(Ranking {
            requested_at: at,
            weights: *weights,
            ranking: entries,
            omitted,
        })
    }

    /// Trust history of `service` with `start <= requested_at <= end`.
    pub fn trust_history(&self, service: &ServiceId, start: f64, end: f64) -> Vec<TrustRecord> {
        self.history.range(service, start, end)
    }
}

/// Sorts by descending trust, ascending id on ties, and assigns ranks.
pub fn sort_ranking(entries: &mut [RankedService]) {
    entries.sort_by(|a, b| {
        b.trust
            .total_cmp(&a.trust)
            .then_with(|| a.service_id.cmp(&b.service_id))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine() -> TrustEngine {
        TrustEngine::new(
            Arc::new(PerfDb::in_memory()),
            Arc::new(EdqStore::in_memory()),
            Arc::new(TrustHistory::in_memory()),
            600.0,
        )
    }

    fn set(engine: &TrustEngine, id: &str, p: f64, dq: f64, at: f64) {
        engine
            .perfdb
            .append(FactorLevel::new(id.into(), FactorKind::Performance, p, at).unwrap())
            .unwrap();
        // t_db = 1 makes value == dq
        engine
            .edq
            .append(DataQualityLevel::new(id.into(), at, dq, 1.0).unwrap())
            .unwrap();
    }

    #[test]
    fn evaluate_trust_arithmetic() {
        let e = engine();
        set(&e, "a", 0.9, 0.3, 300.0);
        let rec = e
            .evaluate_trust(&"a".into(), &TrustWeights::new(0.7, 0.3).unwrap(), 300.0)
            .unwrap();
        assert!((rec.trust - 0.72).abs() < 1e-12);
        let rec = e
            .evaluate_trust(&"a".into(), &TrustWeights::new(1.0, 0.0).unwrap(), 300.0)
            .unwrap();
        assert_eq!(rec.trust, 0.9);
        assert!(rec.is_consistent());
    }

    #[test]
    fn missing_and_stale_factors() {
        let e = engine();
        e.perfdb
            .append(FactorLevel::new("a".into(), FactorKind::Performance, 0.5, 300.0).unwrap())
            .unwrap();
        let w = TrustWeights::new(0.5, 0.5).unwrap();
        assert!(matches!(
            e.evaluate_trust(&"a".into(), &w, 300.0),
            Err(TmmError::MissingFactor {
                kind: FactorKind::DataQuality,
                ..
            })
        ));
        set(&e, "b", 0.5, 0.5, 300.0);
        assert!(e.evaluate_trust(&"b".into(), &w, 900.0).is_ok());
        assert!(matches!(
            e.evaluate_trust(&"b".into(), &w, 901.0),
            Err(TmmError::MissingFactor {
                kind: FactorKind::Performance,
                ..
            })
        ));
    }

    #[test]
    fn ranking_order_and_tie_break() {
        let e = engine();
        set(&e, "b", 0.5, 0.5, 300.0);
        set(&e, "a", 0.5, 0.5, 300.0);
        set(&e, "c", 0.9, 0.1, 300.0);
        let ids: Vec<ServiceId> = ["c", "b", "a", "ghost"]
            .into_iter()
            .map(Into::into)
            .collect();
        let r = e
            .rank_services(&ids, &TrustWeights::new(0.5, 0.5).unwrap(), 300.0)
            .unwrap();
        let order: Vec<&str> = r.ranking.iter().map(|s| s.service_id.as_str()).collect();
        assert_eq!(order, ["a", "b", "c"]);
        assert_eq!(
            r.ranking.iter().map(|s| s.rank).collect::<Vec<_>>(),
            [1, 2, 3]
        );
        assert_eq!(r.omitted.len(), 1);
        let r = e
            .rank_services(&ids, &TrustWeights::new(1.0, 0.0).unwrap(), 300.0)
            .unwrap();
        assert_eq!(r.ranking[0].service_id.as_str(), "c");
    }

    #[test]
    fn empty_ranking_is_an_error() {
        let e = engine();
        let err = e
            .rank_services(&["x".into()], &TrustWeights::new(0.5, 0.5).unwrap(), 0.0)
            .unwrap_err();
        match err {
            TmmError::EmptyRanking(omitted) => assert_eq!(omitted.len(), 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn history_in_order_and_ranged() {
        let e = engine();
        set(&e, "a", 0.6, 0.2, 0.0);
        let w = TrustWeights::new(0.5, 0.5).unwrap();
        for t in [10.0, 20.0, 30.0] {
            e.evaluate_trust(&"a".into(), &w, t).unwrap();
        }
        let h = e.trust_history(&"a".into(), 0.0, 100.0);
        assert_eq!(
            h.iter().map(|r| r.requested_at).collect::<Vec<_>>(),
            [10.0, 20.0, 30.0]
        );
        assert!(e.trust_history(&"a".into(), 40.0, 100.0).is_empty());
        assert!(h.iter().all(TrustRecord::is_consistent));
    }
}
