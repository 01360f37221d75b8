use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Result, TelemetryError};
use crate::dataset::NodeId;
use crate::fl::FlRunResult;

/// One federated client as described by its operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub node_id: NodeId,
    /// Device power draw in watts.
    pub power_watts: f64,
    pub location: String,
    /// kg CO2e per kWh at `location`.
    pub carbon_intensity: f64,
    pub data_volume_fraction: f64,
    pub consistency: f64,
    pub completeness: f64,
}

impl NodeProfile {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.power_watts > 0.0 && self.power_watts.is_finite()) {
            return Err(TelemetryError::InvalidProfile(format!(
                "{}: power_watts must be positive",
                self.node_id
            )));
        }
        if !(self.carbon_intensity >= 0.0 && self.carbon_intensity.is_finite()) {
            return Err(TelemetryError::InvalidProfile(format!(
                "{}: carbon_intensity must be non-negative",
                self.node_id
            )));
        }
        if !(unit(self.data_volume_fraction) && unit(self.consistency) && unit(self.completeness)) {
            return Err(TelemetryError::InvalidProfile(format!(
                "{}: volume and quality fields must lie in [0, 1]",
                self.node_id
            )));
        }
        Ok(())
    }

    /// Emission rate while computing, in kg CO2e per hour.
    pub fn co2_rate(&self) -> f64 {
        self.power_watts / 1000.0 * self.carbon_intensity
    }
}

/// Converts simulated work into wall-clock time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    pub seconds_per_sample: f64,
    pub server_overhead_kwh_per_round: f64,
    /// Fixed time each participating node spends per round outside sample
    /// processing (receiving the global model, setting up, reporting back).
    pub node_overhead_seconds_per_round: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            seconds_per_sample: 0.01,
            server_overhead_kwh_per_round: 0.0,
            node_overhead_seconds_per_round: 1.0,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if ok(self.seconds_per_sample)
            && ok(self.server_overhead_kwh_per_round)
            && ok(self.node_overhead_seconds_per_round)
        {
            Ok(())
        } else {
            Err(TelemetryError::InvalidModel("energy coefficients must be non-negative".into()))
        }
    }
}

/// kWh drawn by `node` while processing `work` samples.
pub fn energy_for(work: u64, node: &NodeProfile, model: &EnergyModel) -> f64 {
    node.power_watts / 1000.0 * (work as f64 * model.seconds_per_sample) / 3600.0
}

/// kWh drawn by `node` for its fixed per-round overhead.
pub fn overhead_energy(rounds: u64, node: &NodeProfile, model: &EnergyModel) -> f64 {
    node.power_watts / 1000.0 * (rounds as f64 * model.node_overhead_seconds_per_round) / 3600.0
}

pub fn emissions_for(kwh: f64, node: &NodeProfile) -> f64 {
    kwh * node.carbon_intensity
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionsReport {
    pub per_node_kwh: BTreeMap<NodeId, f64>,
    pub per_node_kg: BTreeMap<NodeId, f64>,
    pub server_kwh: f64,
    pub server_kg: f64,
    pub total_kwh: f64,
    pub total_kg: f64,
    pub includes_preprocessing: bool,
}

/// Prices a run: per node, (training + cleaning work) plus per-round overhead
/// at the node's power and carbon intensity. Server overhead is charged per
/// round at the highest carbon intensity among the run's nodes.
pub fn report(
    run: &FlRunResult,
    nodes: &[NodeProfile],
    model: &EnergyModel,
) -> Result<EmissionsReport> {
    let by_id: BTreeMap<&NodeId, &NodeProfile> = nodes.iter().map(|n| (&n.node_id, n)).collect();
    let rounds = run.rounds_participated();
    let mut ids: Vec<&NodeId> = run.per_node_work.keys().chain(run.preprocessing_work.keys()).collect();
    ids.sort();
    ids.dedup();

    let mut per_node_kwh = BTreeMap::new();
    let mut per_node_kg = BTreeMap::new();
    let mut max_intensity: f64 = 0.0;
    for id in ids {
        let node = by_id
            .get(id)
            .ok_or_else(|| TelemetryError::ProfileMismatch(id.clone()))?;
        let work = run.per_node_work.get(id).copied().unwrap_or(0)
            + run.preprocessing_work.get(id).copied().unwrap_or(0);
        let kwh = energy_for(work, node, model)
            + overhead_energy(rounds.get(id).copied().unwrap_or(0), node, model);
        per_node_kwh.insert(id.clone(), kwh);
        per_node_kg.insert(id.clone(), emissions_for(kwh, node));
        max_intensity = max_intensity.max(node.carbon_intensity);
    }
    let server_kwh = model.server_overhead_kwh_per_round * run.rounds_executed as f64;
    let server_kg = server_kwh * max_intensity;
    Ok(EmissionsReport {
        total_kwh: per_node_kwh.values().sum::<f64>() + server_kwh,
        total_kg: per_node_kg.values().sum::<f64>() + server_kg,
        includes_preprocessing: !run.preprocessing_work.is_empty(),
        per_node_kwh,
        per_node_kg,
        server_kwh,
        server_kg,
    })
}
