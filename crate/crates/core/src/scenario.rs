//! Scenario files: the dataset, the node roster and the researcher's inputs
//! that the recommender and the validator operate on.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    degrade_shard, generate_synthetic, load_ucr_tsv_as, partition_by_fractions, DatasetError, DatasetMeta,
    DatasetType, Dimension, FederatedPartition, NodeId, SyntheticSpec, TimeSeriesDataset,
};
use crate::fl::{FlConfig, FlError};
use crate::jsonl::StoreError;
use crate::recommender::{
    parse_roster_csv, resolve_roster, RecommendInput, RecommenderError, RosterRow, ScoreWeights,
};
use crate::reducer::{ReducerError, ReducerModel};
use crate::rng;
use crate::telemetry::{CarbonIntensityTable, EnergyModel, NodeProfile, TelemetryError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Recommender(#[from] RecommenderError),
    #[error(transparent)]
    Reducer(#[from] ReducerError),
    #[error(transparent)]
    Fl(#[from] FlError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ScenarioError {
    /// Whether the error stems from the caller's input rather than from a
    /// fault inside the tool.
    pub fn is_user_error(&self) -> bool {
        match self {
            ScenarioError::Io { .. } | ScenarioError::Parse { .. } | ScenarioError::Invalid(_) => true,
            ScenarioError::Dataset(e) => !matches!(e, DatasetError::Io(_)),
            ScenarioError::Telemetry(e) => !matches!(e, TelemetryError::Store(_)),
            ScenarioError::Recommender(_) => true,
            ScenarioError::Reducer(e) => !matches!(e, ReducerError::NoCandidates),
            ScenarioError::Fl(e) => matches!(e, FlError::InvalidConfig(_) | FlError::UnknownNode(_)),
            ScenarioError::Store(_) => false,
        }
    }
}

pub type Result<T, E = ScenarioError> = std::result::Result<T, E>;

/// Where the training data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Generated data with the given metadata.
    Synthetic {
        name: String,
        #[serde(rename = "type")]
        type_tag: DatasetType,
        train_samples: usize,
        test_samples: usize,
        classes: usize,
        sequence_length: usize,
        class_separation: f64,
        #[serde(default)]
        seed: u64,
    },
    /// UCR-style train and test files.
    Ucr {
        name: String,
        #[serde(rename = "type")]
        type_tag: DatasetType,
        train: String,
        test: String,
    },
}

/// A roster given as a CSV path or inline rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RosterSource {
    Path(String),
    Inline(Vec<RosterRow>),
}

/// Carbon intensities given as a CSV path or an inline location map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntensitySource {
    Path(String),
    Inline(BTreeMap<String, f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub dataset: DatasetSource,
    pub roster: RosterSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carbon_intensity: Option<IntensitySource>,
    #[serde(default)]
    pub weights: ScoreWeights,
    pub accuracy_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy_estimation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reducer_model: Option<String>,
    #[serde(default)]
    pub fl: FlConfig,
    #[serde(default)]
    pub energy: EnergyModel,
    #[serde(default)]
    pub seed: u64,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })
}

fn absolutise(base: &Path, p: &str) -> String {
    let path = Path::new(p);
    if path.is_absolute() {
        p.to_string()
    } else {
        base.join(path).to_string_lossy().into_owned()
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| ScenarioError::Parse { context: "scenario".into(), source })
    }

    /// Loads a scenario file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&read(path)?).map_err(|e| match e {
            ScenarioError::Parse { source, .. } => ScenarioError::Parse { context: path.display().to_string(), source },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Rewrites every relative path against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let RosterSource::Path(p) = &mut self.roster {
            *p = absolutise(base, p);
        }
        if let Some(IntensitySource::Path(p)) = &mut self.carbon_intensity {
            *p = absolutise(base, p);
        }
        if let DatasetSource::Ucr { train, test, .. } = &mut self.dataset {
            *train = absolutise(base, train);
            *test = absolutise(base, test);
        }
        if let Some(m) = &mut self.reducer_model {
            *m = absolutise(base, m);
        }
    }

    /// Replaces roster and intensity file references by their contents, so
    /// the scenario can be shipped as a single document.
    pub fn inline(&mut self) -> Result<()> {
        if let RosterSource::Path(p) = &self.roster {
            self.roster = RosterSource::Inline(parse_roster_csv(&read(Path::new(p))?)?);
        }
        if let Some(IntensitySource::Path(p)) = &self.carbon_intensity {
            let table = CarbonIntensityTable::parse_csv(&read(Path::new(p))?)?;
            self.carbon_intensity =
                Some(IntensitySource::Inline(table.iter().map(|(k, v)| (k.to_string(), v)).collect()));
        }
        Ok(())
    }

    /// Checks every field that can be checked without generating data.
    pub fn validate(&self) -> Result<()> {
        let t = self.accuracy_threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(RecommenderError::InvalidThreshold(t).into());
        }
        if let Some(e) = self.accuracy_estimation {
            if !(0.0..=1.0).contains(&e) {
                return Err(ScenarioError::Invalid(format!("accuracy_estimation {e} outside [0, 1]")));
            }
        }
        self.weights.validate()?;
        self.fl.validate()?;
        self.energy.validate()?;
        let roster = self.roster()?;
        let sum: f64 = roster.iter().map(|n| n.data_volume_fraction).sum();
        if sum > 1.0 + 1e-9 {
            return Err(ScenarioError::Invalid(format!("roster data volumes sum to {sum}, more than 1")));
        }
        if let DatasetSource::Synthetic { train_samples, test_samples, classes, sequence_length, class_separation, .. } =
            &self.dataset
        {
            if *train_samples == 0 || *test_samples == 0 || *classes < 2 || *sequence_length == 0 {
                return Err(ScenarioError::Invalid(
                    "synthetic dataset needs samples, at least two classes and a positive length".into(),
                ));
            }
            if !(*class_separation >= 0.0) {
                return Err(ScenarioError::Invalid("class_separation must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn intensities(&self) -> Result<CarbonIntensityTable> {
        Ok(match &self.carbon_intensity {
            None => CarbonIntensityTable::default(),
            Some(IntensitySource::Path(p)) => CarbonIntensityTable::load(Path::new(p))?,
            Some(IntensitySource::Inline(m)) => CarbonIntensityTable::from_pairs(m.iter().map(|(k, v)| (k.clone(), *v)))?,
        })
    }

    pub fn roster(&self) -> Result<Vec<NodeProfile>> {
        let rows = match &self.roster {
            RosterSource::Path(p) => parse_roster_csv(&read(Path::new(p))?)?,
            RosterSource::Inline(rows) => rows.clone(),
        };
        if rows.is_empty() {
            return Err(RecommenderError::NoFeasibleNode("empty roster".into()).into());
        }
        Ok(resolve_roster(&rows, &self.intensities()?)?)
    }

    pub fn fl_config(&self) -> FlConfig {
        self.fl.with_seed(self.seed)
    }

    /// Loads the datasets, partitions the training data by roster volume and
    /// degrades every shard to the roster's consistency and completeness.
    pub fn materialize(&self) -> Result<MaterializedScenario> {
        self.validate()?;
        let roster = self.roster()?;
        let (train, test) = self.load_data()?;
        let fractions: Vec<(NodeId, f64)> =
            roster.iter().map(|n| (n.node_id.clone(), n.data_volume_fraction)).collect();
        let mut partition = partition_by_fractions(&train, &fractions, rng::derive_seed(self.seed, &[rng::tag("partition")]))?
            .with_global_test(test)?;
        let mut next_id = partition.max_id().map_or(0, |m| m + 1);
        for node in &roster {
            let shard = partition.shards.get_mut(&node.node_id).expect("partitioned by roster");
            let mut r = rng::stream(self.seed, &[rng::tag("quality"), node.node_id.stream_tag()]);
            // Completeness goes first so that duplicates copy the missing
            // values of their originals and stay detectable as conflicts.
            *shard = degrade_shard(shard, Dimension::Completeness, 1.0 - node.completeness, &mut r, &mut next_id);
            *shard = degrade_shard(shard, Dimension::Consistency, 1.0 - node.consistency, &mut r, &mut next_id);
        }
        let meta = train.meta();
        Ok(MaterializedScenario { config: self.clone(), roster, partition, meta })
    }

    fn load_data(&self) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
        match &self.dataset {
            DatasetSource::Synthetic {
                name,
                type_tag,
                train_samples,
                test_samples,
                classes,
                sequence_length,
                class_separation,
                seed,
            } => {
                let mut all = generate_synthetic(&SyntheticSpec {
                    name: name.clone(),
                    n_samples: train_samples + test_samples,
                    n_classes: *classes,
                    sequence_length: *sequence_length,
                    class_separation: *class_separation,
                    seed: *seed,
                })?;
                all.type_tag = *type_tag;
                let mut test = all.with_samples(all.samples[*train_samples..].to_vec());
                test.name = format!("{name}-test");
                let train = all.with_samples(all.samples[..*train_samples].to_vec());
                Ok((train, test))
            }
            DatasetSource::Ucr { name, type_tag, train, test } => {
                let mut tr = load_ucr_tsv_as(train, *type_tag)?;
                let mut te = load_ucr_tsv_as(test, *type_tag)?;
                if tr.sequence_length != te.sequence_length || tr.num_classes != te.num_classes {
                    return Err(ScenarioError::Invalid(format!(
                        "{name}: train and test files disagree on length or classes"
                    )));
                }
                tr.name = name.clone();
                te.name = format!("{name}-test");
                let offset = tr.max_id().map_or(0, |m| m + 1);
                te.samples.iter_mut().for_each(|s| s.id += offset);
                Ok((tr, te))
            }
        }
    }
}

/// A scenario with its data generated, partitioned and degraded.
#[derive(Clone, Debug)]
pub struct MaterializedScenario {
    pub config: ScenarioConfig,
    pub roster: Vec<NodeProfile>,
    pub partition: FederatedPartition,
    /// Metadata of the whole training set, as given to the reducer.
    pub meta: DatasetMeta,
}

impl MaterializedScenario {
    pub fn recommend_input(&self) -> RecommendInput {
        RecommendInput {
            roster: self.roster.clone(),
            dataset: self.meta.clone(),
            accuracy_threshold: self.config.accuracy_threshold,
            weights: self.config.weights.clone(),
            accuracy_estimation: self.config.accuracy_estimation,
            fl: self.config.fl_config(),
            energy: self.config.energy.clone(),
        }
    }
}

pub fn load_model(path: &Path) -> Result<ReducerModel> {
    serde_json::from_str(&read(path)?).map_err(|source| ScenarioError::Parse { context: path.display().to_string(), source })
}
