use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use greenfl_core::dataset::{load_ucr_tsv_as, DatasetType, Dimension, Scope, LEVEL_GRID};
use greenfl_core::exploration::catalog::{self, BuildOptions};
use greenfl_core::exploration::{
    build_grid, compare_approaches, fit_curves, rank_dimensions, write_curves, write_plot_csv, ApproachComparison,
    Curve, DimensionImpact, ExplorationDataset, GridRunner,
};
use greenfl_core::fl::FlConfig;
use greenfl_core::recommender::{recommend, Method, RecommendationSet};
use greenfl_core::reducer::{train_reducer, RegressorKind, ReducerModel, ReducerReport, TrainOptions};
use greenfl_core::scenario::{load_model, ScenarioConfig};
use greenfl_core::telemetry::{default_ledger_path, EmissionsLedger, EnergyModel};
use greenfl_core::validation::{estimate_accuracy, validate, ValidationReport};

use crate::output::{recommendation_table, reducer_table, to_json, validation_table};
use crate::UsageError;

#[derive(Debug, Parser)]
#[command(name = "greenfl", version, about = "Carbon-aware federated learning simulator and recommender")]
pub struct Cli {
    /// Root directory of the persistent stores (ledger, service state).
    #[arg(long, global = true, env = "GREENFL_DATA_DIR", default_value = "greenfl-data")]
    pub data_dir: PathBuf,
    /// Base seed; overrides the seed stored in a scenario.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the degradation grid and fit accuracy/energy curves.
    Explore(ExploreArgs),
    /// Fit the volume reducer on exploration curves.
    TrainReducer(TrainReducerArgs),
    /// Recommend node configurations for a scenario.
    Recommend(RecommendArgs),
    /// Execute the recommended configurations in the simulator.
    Validate(ValidateArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    /// Catalog dataset names or UCR `*_TRAIN.tsv` paths (the `_TEST` file is
    /// taken from the same directory).
    #[arg(long, value_delimiter = ',', required = true)]
    pub datasets: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "volume,accuracy,consistency,completeness")]
    pub dims: Vec<Dimension>,
    #[arg(long, value_delimiter = ',', default_value = "H,V")]
    pub scopes: Vec<Scope>,
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Output directory for experiments.jsonl, curves.jsonl and plot.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub nodes: usize,
    /// Multiplier on the training-set size of catalog datasets.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Dataset type recorded for UCR files.
    #[arg(long, default_value = "Sensor")]
    pub ucr_type: DatasetType,
    /// Stop after this many new sub-experiments; a later call resumes.
    #[arg(long)]
    pub max_runs: Option<usize>,
    /// JSON file with federated-learning overrides.
    #[arg(long)]
    pub fl_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainReducerArgs {
    #[arg(long)]
    pub curves: PathBuf,
    /// Where to write the selected model; the report goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub min_r2: f64,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Reducer model; defaults to the scenario's `reducer_model`, then to
    /// `<data-dir>/reducer_model.json`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct FormatArg {
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub format: FormatArg,
    /// Estimate the single-node accuracy first and use it for warnings.
    #[arg(long)]
    pub estimate: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, value_delimiter = ',', default_value = "NS,MSR,SR")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 8)]
    pub reps: usize,
    #[command(flatten)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[command(flatten)]
    pub model: ModelArg,
    /// Validation runs executed concurrently.
    #[arg(long, default_value_t = 2)]
    pub workers: usize,
}

pub fn ledger(data_dir: &Path) -> Result<EmissionsLedger> {
    EmissionsLedger::open(default_ledger_path(data_dir)).context("cannot open the emissions ledger")
}

fn save(text: String, out: Option<&Path>) -> Result<String> {
    if let Some(path) = out {
        fs::write(path, &text).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(text)
}

/// Loads a scenario and applies the global seed override.
pub fn load_scenario(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Resolves the reducer model from the flag, the scenario or the data dir.
pub fn resolve_model(flag: Option<&Path>, scenario: Option<&ScenarioConfig>, data_dir: &Path) -> Result<ReducerModel> {
    let path = flag
        .map(Path::to_path_buf)
        .or_else(|| scenario.and_then(|s| s.reducer_model.as_ref()).map(PathBuf::from))
        .unwrap_or_else(|| data_dir.join("reducer_model.json"));
    Ok(load_model(&path)?)
}

#[derive(Debug, Serialize)]
pub struct ExploreSummary {
    pub executed: usize,
    pub resumed: usize,
    pub failed: usize,
    pub records: usize,
    pub curves: usize,
    pub skipped_curves: Vec<String>,
    pub comparisons: Vec<ApproachComparison>,
    pub dimension_ranking: Vec<DimensionImpact>,
}

fn explore_datasets(args: &ExploreArgs, seed: u64) -> Result<Vec<ExplorationDataset>> {
    let opts = BuildOptions { n_nodes: args.nodes, scale: args.scale, seed, ..Default::default() };
    if args.nodes == 0 {
        return Err(UsageError("--nodes must be positive".into()).into());
    }
    if !(args.scale > 0.0) {
        return Err(UsageError("--scale must be positive".into()).into());
    }
    let mut out: Vec<ExplorationDataset> = Vec::new();
    for name in &args.datasets {
        let ds = if let Some(entry) = catalog::find(name) {
            entry.build(&opts)?
        } else if name.ends_with(".tsv") {
            let train_path = PathBuf::from(name);
            let file = train_path.file_name().and_then(|f| f.to_str()).unwrap_or_default();
            if !file.contains("_TRAIN") {
                return Err(UsageError(format!("{name}: expected a *_TRAIN.tsv file")).into());
            }
            let test_path = train_path.with_file_name(file.replace("_TRAIN", "_TEST"));
            let train = load_ucr_tsv_as(&train_path, args.ucr_type).with_context(|| format!("loading {name}"))?;
            let mut test =
                load_ucr_tsv_as(&test_path, args.ucr_type).with_context(|| format!("loading {}", test_path.display()))?;
            let offset = train.max_id().map_or(0, |m| m + 1);
            test.samples.iter_mut().for_each(|s| s.id += offset);
            let ds_name = file.split("_TRAIN").next().unwrap_or(file).to_string();
            catalog::exploration_dataset(&ds_name, &train, test, &opts)?
        } else {
            let known: Vec<&str> = catalog::CATALOG.iter().map(|e| e.name).collect();
            return Err(UsageError(format!("unknown dataset `{name}`; known: {}", known.join(", "))).into());
        };
        if out.iter().any(|d| d.name == ds.name) {
            return Err(UsageError(format!("dataset `{}` listed twice", ds.name)).into());
        }
        out.push(ds);
    }
    Ok(out)
}

pub fn explore(args: &ExploreArgs, data_dir: &Path, seed: Option<u64>) -> Result<String> {
    if args.datasets.iter().all(|d| d.trim().is_empty()) {
        return Err(UsageError("--datasets must name at least one dataset".into()).into());
    }
    let levels = args.levels.clone().unwrap_or_else(|| LEVEL_GRID.to_vec());
    if let Some(l) = levels.iter().find(|l| !(0.0..1.0).contains(*l)) {
        return Err(UsageError(format!("level {l} outside [0, 1)")).into());
    }
    if args.reps == 0 {
        return Err(UsageError("--reps must be positive".into()).into());
    }
    let seed = seed.unwrap_or(0);
    let fl = match &args.fl_config {
        Some(p) => serde_json::from_str::<FlConfig>(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => FlConfig::default(),
    }
    .with_seed(seed);
    fl.validate()?;

    let datasets = explore_datasets(args, seed)?;
    let names: Vec<String> = datasets.iter().map(|d| d.name.clone()).collect();
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let ledger = ledger(data_dir)?;
    let runner = GridRunner::new(datasets, fl, EnergyModel::default(), args.out.join("experiments.jsonl"))?
        .with_ledger(&ledger);
    let grid = build_grid(&names, &args.dims, &args.scopes, &levels, args.reps);
    let summary = runner.run_limited(&grid, args.max_runs.unwrap_or(usize::MAX))?;
    let (curves, skipped) = fit_curves(&summary.records, &runner.metas())?;
    write_curves(&args.out.join("curves.jsonl"), &curves)?;
    write_plot_csv(&args.out.join("plot.csv"), &summary.records, &curves)?;
    let comparisons = names.iter().filter_map(|n| compare_approaches(&curves, n).ok()).collect();
    let out = ExploreSummary {
        executed: summary.executed,
        resumed: summary.resumed,
        failed: summary.failed,
        records: summary.records.len(),
        curves: curves.len(),
        skipped_curves: skipped.into_iter().map(|(e, why)| format!("{e}: {why}")).collect(),
        comparisons,
        dimension_ranking: rank_dimensions(&curves),
    };
    Ok(to_json(&out))
}

pub fn read_curves(path: &Path) -> Result<Vec<Curve>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read curves file {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| UsageError(format!("{}:{}: {e}", path.display(), i + 1)).into())
        })
        .collect()
}

pub fn train(args: &TrainReducerArgs) -> Result<(ReducerModel, ReducerReport)> {
    let curves = read_curves(&args.curves)?;
    let opts = TrainOptions { min_r2: args.min_r2, k_folds: args.folds, kinds: RegressorKind::ALL.to_vec() };
    let (model, report) = train_reducer(&curves, &opts)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(&args.out, to_json(&model)).with_context(|| format!("cannot write {}", args.out.display()))?;
    fs::write(report_path(&args.out), to_json(&report))?;
    Ok((model, report))
}

/// `model.json` → `model.report.json` in the same directory.
pub fn report_path(model: &Path) -> PathBuf {
    let stem = model.file_stem().and_then(|s| s.to_str()).unwrap_or("reducer_model");
    model.with_file_name(format!("{stem}.report.json"))
}

pub fn recommend_cmd(args: &RecommendArgs, data_dir: &Path, seed: Option<u64>) -> Result<RecommendationSet> {
    let cfg = load_scenario(&args.scenario, seed)?;
    let model = resolve_model(args.model.model.as_deref(), Some(&cfg), data_dir)?;
    let mut m = cfg.materialize()?;
    if args.estimate {
        let est = estimate_accuracy(&m, Some(&ledger(data_dir)?))?;
        log::info!("single-node estimate on {}: {:.3}", est.node, est.accuracy);
        m.config.accuracy_estimation = Some(est.accuracy);
    }
    Ok(recommend(&m.recommend_input(), &model)?)
}

pub fn validate_cmd(args: &ValidateArgs, data_dir: &Path, seed: Option<u64>) -> Result<ValidationReport> {
    if args.reps == 0 {
        return Err(UsageError("--reps must be positive".into()).into());
    }
    let cfg = load_scenario(&args.scenario, seed)?;
    let model = resolve_model(args.model.model.as_deref(), Some(&cfg), data_dir)?;
    let m = cfg.materialize()?;
    Ok(validate(&m, &model, &args.methods, args.reps, Some(&ledger(data_dir)?))?)
}

/// Runs a non-server command and returns what it prints.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Explore(a) => explore(a, &cli.data_dir, cli.seed),
        Command::TrainReducer(a) => {
            let (_, report) = train(a)?;
            Ok(reducer_table(&report))
        }
        Command::Recommend(a) => {
            let set = recommend_cmd(a, &cli.data_dir, cli.seed)?;
            let text = if a.format.table { recommendation_table(&set) } else { to_json(&set) };
            save(text, a.out.as_deref())
        }
        Command::Validate(a) => {
            let report = validate_cmd(a, &cli.data_dir, cli.seed)?;
            let text = if a.format.table { validation_table(&report) } else { to_json(&report) };
            save(text, a.out.as_deref())
        }
        Command::Serve(_) => bail!("serve is handled by the binary entry point"),
    }
}
