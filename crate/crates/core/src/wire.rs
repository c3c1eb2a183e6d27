//! Wire schema of the data-service endpoint.
//!
//! `GET /items/latest?limit=L` returns a JSON array of [`WireItem`], newest
//! first. Nothing about insertion times or rates is part of the schema.

use serde::{Deserialize, Serialize};

use crate::dqmm::ObservedItem;
use crate::sim::DataItem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireItem {
    pub id: String,
    /// Production time, integer epoch seconds.
    pub produced_at: i64,
    pub value: f64,
}

impl WireItem {
    /// `epoch` is the wall-clock epoch second of simulation time 0.
    pub fn from_item(item: &DataItem, epoch: i64) -> Self {
        WireItem {
            id: item.item_id.clone(),
            produced_at: epoch + item.produced_at.floor() as i64,
            value: item.payload,
        }
    }

    /// Back to scenario-relative seconds.
    pub fn to_observed(&self, epoch: i64) -> ObservedItem {
        ObservedItem {
            id: self.id.clone(),
            produced_at: (self.produced_at - epoch) as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_names_are_exact() {
        let item = WireItem {
            id: "S11-000001".into(),
            produced_at: 1_700_000_005,
            value: 36.6,
        };
        assert_eq!(
            serde_json::to_string(&item).unwrap(),
            r#"{"id":"S11-000001","produced_at":1700000005,"value":36.6}"#
        );
        assert!(serde_json::from_str::<WireItem>(
            r#"{"id":"x","produced_at":1,"value":1.0,"inserted_at":2}"#
        )
        .is_err());
    }

    #[test]
    fn epoch_offsets_round_trip() {
        let item = DataItem {
            item_id: "a".into(),
            produced_at: 25.0,
            payload: 37.0,
        };
        let wire = WireItem::from_item(&item, 1_000);
        assert_eq!(wire.produced_at, 1_025);
        assert_eq!(wire.to_observed(1_000).produced_at, 25.0);
    }
}
