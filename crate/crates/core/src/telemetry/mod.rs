//! Energy and carbon accounting for simulated runs.
//!
//! Work (samples processed) is converted to time with a fixed coefficient,
//! to kWh with the node's power draw and to kg CO2e with the carbon intensity
//! of its location. Every priced run can be appended to a persistent ledger.

mod energy;
mod ledger;

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::dataset::NodeId;
use crate::jsonl::StoreError;

pub use energy::{
    emissions_for, energy_for, overhead_energy, report, EmissionsReport, EnergyModel, NodeProfile,
};
pub use ledger::{default_ledger_path, EmissionsLedger, LedgerEntry, LedgerSummary};

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("run references node {0} which has no profile")]
    ProfileMismatch(NodeId),
    #[error("invalid node profile: {0}")]
    InvalidProfile(String),
    #[error("invalid energy model: {0}")]
    InvalidModel(String),
    #[error("carbon intensity table: {0}")]
    IntensityTable(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub type Result<T, E = TelemetryError> = std::result::Result<T, E>;

/// Static snapshot of grid carbon intensity per location, kg CO2e per kWh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CarbonIntensityTable {
    by_location: BTreeMap<String, f64>,
}

#[derive(serde::Deserialize)]
struct IntensityRow {
    location: String,
    kg_co2e_per_kwh: f64,
}

impl CarbonIntensityTable {
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let mut by_location = BTreeMap::new();
        for (loc, v) in pairs {
            let loc = loc.into();
            if !(v >= 0.0 && v.is_finite()) {
                return Err(TelemetryError::IntensityTable(format!("{loc}: intensity {v} is invalid")));
            }
            by_location.insert(loc, v);
        }
        Ok(CarbonIntensityTable { by_location })
    }

    /// Reads `location,kg_co2e_per_kwh` CSV with a header row.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut pairs = Vec::new();
        for row in reader.deserialize::<IntensityRow>() {
            let row = row.map_err(|e| TelemetryError::IntensityTable(e.to_string()))?;
            pairs.push((row.location, row.kg_co2e_per_kwh));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TelemetryError::IntensityTable(format!("{}: {e}", path.display())))?;
        Self::parse_csv(&text)
    }

    pub fn get(&self, location: &str) -> Option<f64> {
        self.by_location.get(location).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.by_location.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.by_location.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_location.is_empty()
    }
}
