use serde::{Deserialize, Serialize};

use super::{RecommenderError, Result};
use crate::dataset::NodeId;
use crate::telemetry::{CarbonIntensityTable, NodeProfile};

/// One roster line as written by an operator. The carbon intensity may be
/// given inline or looked up from the location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterRow {
    pub node_id: String,
    pub power_watts: f64,
    pub location: String,
    pub data_volume: f64,
    pub consistency: f64,
    pub completeness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carbon_intensity: Option<f64>,
}

/// Reads `node_id,power_watts,location,data_volume,consistency,completeness`
/// CSV with a header row; an optional `carbon_intensity` column is accepted.
pub fn parse_roster_csv(text: &str) -> Result<Vec<RosterRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    reader
        .deserialize::<RosterRow>()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| RecommenderError::InvalidRoster(format!("row {}: {e}", i + 1))))
        .collect()
}

/// Turns rows into validated profiles, taking missing intensities from
/// `intensities`.
pub fn resolve_roster(rows: &[RosterRow], intensities: &CarbonIntensityTable) -> Result<Vec<NodeProfile>> {
    let mut seen = std::collections::BTreeSet::new();
    rows.iter()
        .map(|r| {
            if !seen.insert(r.node_id.as_str()) {
                return Err(RecommenderError::InvalidRoster(format!("duplicate node id {}", r.node_id)));
            }
            let carbon_intensity = match r.carbon_intensity {
                Some(v) => v,
                None => intensities.get(&r.location).ok_or_else(|| {
                    RecommenderError::InvalidRoster(format!(
                        "{}: no carbon intensity known for location `{}`",
                        r.node_id, r.location
                    ))
                })?,
            };
            let profile = NodeProfile {
                node_id: NodeId::new(r.node_id.clone()),
                power_watts: r.power_watts,
                location: r.location.clone(),
                carbon_intensity,
                data_volume_fraction: r.data_volume,
                consistency: r.consistency,
                completeness: r.completeness,
            };
            profile.validate().map_err(|e| RecommenderError::InvalidRoster(e.to_string()))?;
            Ok(profile)
        })
        .collect()
}
