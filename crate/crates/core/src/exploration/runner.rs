use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::{
    level_means, meta_of, run_sub_experiment, Curve, ExperimentRecord, ExplorationError, Metric, Result,
    SubExperiment,
};
use crate::dataset::{DatasetMeta, FederatedPartition};
use crate::fl::FlConfig;
use crate::jsonl::JsonlStore;
use crate::telemetry::{EmissionsLedger, EnergyModel, NodeProfile};

/// A dataset prepared for exploration: its federated partition and the
/// roster that prices runs on it.
#[derive(Clone, Debug)]
pub struct ExplorationDataset {
    pub name: String,
    pub partition: FederatedPartition,
    pub nodes: Vec<NodeProfile>,
}

impl ExplorationDataset {
    pub fn meta(&self) -> DatasetMeta {
        meta_of(&self.partition, &self.name)
    }
}

#[derive(Clone, Debug, Default)]
pub struct GridSummary {
    pub executed: usize,
    pub resumed: usize,
    pub failed: usize,
    /// Every record of the grid that exists so far, in grid order.
    pub records: Vec<ExperimentRecord>,
}

/// Executes an experiment grid against an append-only record store.
///
/// Records already present in the store are not recomputed, so an
/// interrupted grid resumes where it stopped. Sub-experiments run in parallel
/// batches but are stored and charged to the ledger in grid order.
pub struct GridRunner<'a> {
    datasets: BTreeMap<String, ExplorationDataset>,
    fl_config: FlConfig,
    energy: EnergyModel,
    store: JsonlStore<ExperimentRecord>,
    ledger: Option<&'a EmissionsLedger>,
    batch_size: usize,
}

impl<'a> GridRunner<'a> {
    pub fn new(
        datasets: Vec<ExplorationDataset>,
        fl_config: FlConfig,
        energy: EnergyModel,
        records_path: impl Into<PathBuf>,
    ) -> Result<Self> {
        Ok(GridRunner {
            datasets: datasets.into_iter().map(|d| (d.name.clone(), d)).collect(),
            fl_config,
            energy,
            store: JsonlStore::open(records_path)?,
            ledger: None,
            batch_size: rayon::current_num_threads().max(1) * 2,
        })
    }

    pub fn with_ledger(mut self, ledger: &'a EmissionsLedger) -> Self {
        self.ledger = Some(ledger);
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn metas(&self) -> BTreeMap<String, DatasetMeta> {
        self.datasets.iter().map(|(k, d)| (k.clone(), d.meta())).collect()
    }

    pub fn run(&self, grid: &[SubExperiment]) -> Result<GridSummary> {
        self.run_limited(grid, usize::MAX)
    }

    /// Like [`GridRunner::run`] but executes at most `max_new`
    /// sub-experiments, leaving the rest for a later call.
    pub fn run_limited(&self, grid: &[SubExperiment], max_new: usize) -> Result<GridSummary> {
        if let Some(sub) = grid.iter().find(|s| !self.datasets.contains_key(&s.experiment.dataset_name)) {
            return Err(ExplorationError::UnknownDataset(sub.experiment.dataset_name.clone()));
        }
        let mut done: HashMap<String, ExperimentRecord> = HashMap::new();
        for r in self.store.read_all()? {
            done.entry(r.sub_experiment.key()).or_insert(r);
        }
        let pending: Vec<&SubExperiment> = grid
            .iter()
            .filter(|s| !done.contains_key(&s.key()))
            .take(max_new)
            .collect();
        let mut summary = GridSummary::default();

        for batch in pending.chunks(self.batch_size) {
            let records: Vec<ExperimentRecord> = batch
                .par_iter()
                .map(|sub| {
                    let ds = &self.datasets[&sub.experiment.dataset_name];
                    run_sub_experiment(sub, &ds.partition, &self.fl_config, &self.energy, &ds.nodes)
                })
                .collect();
            self.store.append_all(&records)?;
            for r in records {
                if r.is_ok() {
                    if let Some(ledger) = self.ledger {
                        ledger.append_totals(r.energy_kwh, r.emissions_kg, "exploration")?;
                    }
                } else {
                    summary.failed += 1;
                }
                summary.executed += 1;
                log::info!("{} accuracy {:.3} energy {:.3e} kWh", r.sub_experiment.key(), r.accuracy, r.energy_kwh);
                done.insert(r.sub_experiment.key(), r);
            }
        }
        summary.records = grid.iter().filter_map(|s| done.get(&s.key()).cloned()).collect();
        summary.resumed = summary.records.len() - summary.executed;
        Ok(summary)
    }
}

/// Replaces `path` with one JSON line per item, writing to a temporary file
/// first so readers never see a half-written file.
pub fn write_jsonl_atomic<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(crate::jsonl::StoreError::from)?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&buf)?;
    f.sync_data()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_curves(path: &Path, curves: &[Curve]) -> Result<()> {
    write_jsonl_atomic(path, curves)
}

/// Writes `dataset,type,dimension,metric,x,y,fitted` rows: the rep-averaged
/// measurements next to the fitted curve value, one row per level.
pub fn write_plot_csv(path: &Path, records: &[ExperimentRecord], curves: &[Curve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dataset", "type", "dimension", "metric", "x", "y", "fitted"])?;
    for m in level_means(records) {
        for metric in [Metric::Accuracy, Metric::Energy] {
            let y = match metric {
                Metric::Accuracy => m.accuracy,
                Metric::Energy => m.energy_kwh,
            };
            let x = 1.0 - m.level;
            let fitted = curves
                .iter()
                .find(|c| c.experiment == m.experiment && c.metric == metric)
                .map_or(String::new(), |c| c.eval(x).to_string());
            w.write_record([
                m.experiment.dataset_name.as_str(),
                m.experiment.scope.as_str(),
                m.experiment.dimension.as_str(),
                match metric {
                    Metric::Accuracy => "accuracy",
                    Metric::Energy => "energy_kwh",
                },
                &x.to_string(),
                &y.to_string(),
                &fitted,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
