use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{EmissionsReport, Result};
use crate::jsonl::JsonlStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub ts: String,
    pub purpose: String,
    pub total_kwh: f64,
    pub total_kg: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub entries: usize,
    pub total_kwh: f64,
    pub total_kg: f64,
    pub by_purpose: BTreeMap<String, f64>,
}

/// Append-only tally of simulated emissions, persisted as JSON lines.
///
/// Appends from several threads are serialised by an internal lock; the file
/// itself assumes a single writing process.
pub struct EmissionsLedger {
    store: Mutex<JsonlStore<LedgerEntry>>,
}

/// Sums in sorted order so totals do not depend on append order.
fn stable_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.into_iter().sum()
}

impl EmissionsLedger {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        Ok(EmissionsLedger {
            store: Mutex::new(JsonlStore::open(path)?),
        })
    }

    pub fn path(&self) -> PathBuf {
        self.store.lock().expect("ledger lock").path().to_path_buf()
    }

    pub fn append(&self, report: &EmissionsReport, purpose: &str) -> Result<LedgerEntry> {
        self.append_totals(report.total_kwh, report.total_kg, purpose)
    }

    pub fn append_totals(&self, total_kwh: f64, total_kg: f64, purpose: &str) -> Result<LedgerEntry> {
        let entry = LedgerEntry {
            ts: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            purpose: purpose.to_string(),
            total_kwh,
            total_kg,
        };
        self.store.lock().expect("ledger lock").append(&entry)?;
        Ok(entry)
    }

    pub fn entries(&self) -> Result<Vec<LedgerEntry>> {
        Ok(self.store.lock().expect("ledger lock").read_all()?)
    }

    pub fn total(&self) -> Result<f64> {
        Ok(stable_sum(self.entries()?.iter().map(|e| e.total_kg).collect()))
    }

    pub fn summary(&self) -> Result<LedgerSummary> {
        let entries = self.entries()?;
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for e in &entries {
            groups.entry(e.purpose.clone()).or_default().push(e.total_kg);
        }
        Ok(LedgerSummary {
            entries: entries.len(),
            total_kwh: stable_sum(entries.iter().map(|e| e.total_kwh).collect()),
            total_kg: stable_sum(entries.iter().map(|e| e.total_kg).collect()),
            by_purpose: groups.into_iter().map(|(k, v)| (k, stable_sum(v))).collect(),
        })
    }
}

impl std::fmt::Debug for EmissionsLedger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmissionsLedger").field("path", &self.path()).finish()
    }
}

pub fn default_ledger_path(data_dir: &Path) -> PathBuf {
    data_dir.join("ledger.jsonl")
}
