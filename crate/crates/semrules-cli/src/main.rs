//! Command-line pipeline: binarize, validate constraints, train, predict,
//! explain, evaluate, and generate synthetic benchmarks.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use semrules::eval::{absolute_errors, ridge_baseline, EvalReport, SyntheticSpec};
use semrules::explain::{explain_prediction, render_text};
use semrules::features::{apply_spec, BinarizationSpec, RawColumnData};
use semrules::io;
use semrules::model::LiteralVector;
use semrules::ontology::{literal_pairs, parse_ontology, precomplete, ConstraintSet, LiteralPairOptions};
use semrules::train::{train, Dataset, TrainConfig};

#[derive(Parser)]
#[command(name = "semrules", version, about = "Fuzzy conjunctive rule learning for regression")]
struct Cli {
    /// Random seed, overriding any seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for generated artifacts (default: current directory or
    /// the config file's out_dir).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Pipeline configuration file (used by train and evaluate).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Binarize a raw CSV table into fuzzy membership features.
    Binarize {
        /// Raw CSV input (header row, empty cells mean missing).
        #[arg(long)]
        input: PathBuf,
        /// Binarization spec JSON.
        #[arg(long)]
        spec: PathBuf,
        /// Feature CSV output path.
        #[arg(long)]
        output: PathBuf,
        /// Column-metadata sidecar path (default: output with .meta.json).
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Ontology constraint tooling.
    Constraints {
        #[command(subcommand)]
        action: ConstraintsAction,
    },
    /// Full training pipeline per the config file; writes model.json and
    /// history.csv.
    Train,
    /// Predict outcomes for a feature CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Predictions CSV output path.
        #[arg(long)]
        output: PathBuf,
    },
    /// Explain one row's prediction: rule listing text plus a JSON file.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Row id to explain.
        #[arg(long, conflicts_with = "index")]
        row: Option<String>,
        /// Row position to explain (alternative to --row).
        #[arg(long)]
        index: Option<usize>,
        /// Smallest literal weight sigmoid still displayed.
        #[arg(long)]
        display_threshold: Option<f64>,
        /// Smallest absolute fit-scaled contribution listed individually.
        #[arg(long)]
        contribution_threshold: Option<f64>,
        /// Explanation JSON path (default: <out-dir>/explanation.json).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Evaluate the trained model, the ridge baseline and any external
    /// prediction files on the held-out test split.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// External predictions to include, as name=path (CSV with
        /// row_id,prediction).
        #[arg(long = "external")]
        external: Vec<String>,
    },
    /// Generate a synthetic planted-rule dataset and its ground-truth
    /// model.
    Synth {
        /// Synthetic spec JSON.
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Subcommand)]
enum ConstraintsAction {
    /// Validate an ontology against feature metadata and print the
    /// resolved pair counts.
    Validate {
        #[arg(long)]
        ontology: PathBuf,
        /// Column-metadata sidecar of the feature matrix.
        #[arg(long)]
        meta: PathBuf,
        /// Also derive child-and-not-parent exclusions.
        #[arg(long)]
        contrapositive: bool,
        /// Use direct subsumptions only instead of the transitive closure.
        #[arg(long)]
        direct_only: bool,
    },
}

/// Where the training data comes from: either a raw table plus a
/// binarization spec, or an already-binarized feature CSV.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DataConfig {
    raw_csv: Option<PathBuf>,
    binarization_spec: Option<PathBuf>,
    /// Outcome column inside the raw CSV.
    target_column: Option<String>,
    features_csv: Option<PathBuf>,
    meta_json: Option<PathBuf>,
    targets_csv: Option<PathBuf>,
    ontology: Option<PathBuf>,
    contrapositive: bool,
    #[serde(default = "default_true")]
    transitive_pairs: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExplainDefaults {
    display_threshold: f64,
    contribution_threshold: f64,
}

impl Default for ExplainDefaults {
    fn default() -> Self {
        ExplainDefaults { display_threshold: 0.25, contribution_threshold: 0.01 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    data: DataConfig,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    explain: ExplainDefaults,
    #[serde(default)]
    out_dir: Option<PathBuf>,
}

impl RunConfig {
    fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        cfg.check_paths()?;
        Ok(cfg)
    }

    /// Every referenced input path must exist before any work starts.
    fn check_paths(&self) -> anyhow::Result<()> {
        let d = &self.data;
        for path in [
            d.raw_csv.as_ref(),
            d.binarization_spec.as_ref(),
            d.features_csv.as_ref(),
            d.meta_json.as_ref(),
            d.targets_csv.as_ref(),
            d.ontology.as_ref(),
        ]
        .into_iter()
        .flatten()
        {
            if !path.exists() {
                bail!("referenced path does not exist: {}", path.display());
            }
        }
        match (&d.raw_csv, &d.features_csv) {
            (None, None) => bail!("config needs data.raw_csv or data.features_csv"),
            (Some(_), Some(_)) => bail!("config must not set both raw_csv and features_csv"),
            (Some(_), None) => {
                if d.binarization_spec.is_none() {
                    bail!("raw_csv input needs data.binarization_spec");
                }
                if d.target_column.is_none() {
                    bail!("raw_csv input needs data.target_column");
                }
            }
            (None, Some(_)) => {
                if d.targets_csv.is_none() {
                    bail!("features_csv input needs data.targets_csv");
                }
            }
        }
        Ok(())
    }
}

/// Dataset plus the constraint set resolved against its columns.
struct LoadedData {
    dataset: Dataset,
    constraints: ConstraintSet,
}

fn load_dataset(data: &DataConfig) -> anyhow::Result<LoadedData> {
    if let Some(raw_path) = &data.raw_csv {
        let target_column = data.target_column.as_ref().expect("checked");
        let mut raw = io::read_raw_csv(raw_path)?;
        let pos = raw
            .columns
            .iter()
            .position(|c| &c.name == target_column)
            .ok_or_else(|| anyhow!("target column '{target_column}' not in {}", raw_path.display()))?;
        let target_col = raw.columns.remove(pos);
        let targets: Vec<f64> = match target_col.data {
            RawColumnData::Continuous(v) => v,
            RawColumnData::Categorical(_) => {
                bail!("target column '{target_column}' must be numeric")
            }
        };
        let spec_text = fs::read_to_string(data.binarization_spec.as_ref().expect("checked"))?;
        let spec = BinarizationSpec::from_json(&spec_text)?;
        let (matrix, warnings) = apply_spec(&raw, &spec)?;
        for w in warnings {
            eprintln!("warning: {w}");
        }
        finish_load(matrix, targets, data)
    } else {
        let features_path = data.features_csv.as_ref().expect("checked");
        let matrix = match &data.meta_json {
            Some(meta) => io::read_feature_csv_with_meta(features_path, meta)?,
            None => io::read_feature_csv(features_path)?,
        };
        let target_rows = io::read_targets_csv(data.targets_csv.as_ref().expect("checked"))?;
        let by_id: BTreeMap<&str, f64> =
            target_rows.iter().map(|(id, v)| (id.as_str(), *v)).collect();
        let targets = matrix
            .row_ids()
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| anyhow!("no target for row '{id}'"))
            })
            .collect::<anyhow::Result<Vec<f64>>>()?;
        finish_load(matrix, targets, data)
    }
}

fn finish_load(
    matrix: semrules::features::FeatureMatrix,
    targets: Vec<f64>,
    data: &DataConfig,
) -> anyhow::Result<LoadedData> {
    let (matrix, constraints) = match &data.ontology {
        Some(path) => {
            let doc = parse_ontology(&fs::read_to_string(path)?)?;
            let completed = precomplete(&matrix, &doc);
            let options = LiteralPairOptions {
                contrapositive: data.contrapositive,
                transitive: data.transitive_pairs,
            };
            let (constraints, warnings) = literal_pairs(&doc, completed.meta(), options)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            (completed, constraints)
        }
        None => {
            let n = matrix.n_cols();
            (matrix, ConstraintSet::contradictions_only(n))
        }
    };
    Ok(LoadedData { dataset: Dataset::new(matrix, targets)?, constraints })
}

fn resolve_row_index(
    matrix: &semrules::features::FeatureMatrix,
    row: &Option<String>,
    index: &Option<usize>,
) -> anyhow::Result<usize> {
    match (row, index) {
        (Some(id), None) => matrix
            .row_ids()
            .iter()
            .position(|r| r == id)
            .ok_or_else(|| anyhow!("row id '{id}' not found")),
        (None, Some(idx)) => {
            if *idx < matrix.n_rows() {
                Ok(*idx)
            } else {
                bail!("row index {idx} out of range ({} rows)", matrix.n_rows())
            }
        }
        _ => bail!("pass exactly one of --row or --index"),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let out_dir = cli.out_dir.clone();
    match cli.command {
        Command::Binarize { input, spec, output, meta } => {
            let raw = io::read_raw_csv(&input)?;
            let spec = BinarizationSpec::from_json(&fs::read_to_string(&spec)?)?;
            let (matrix, warnings) = apply_spec(&raw, &spec)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            io::write_feature_csv(&matrix, &output)?;
            let meta_path = meta.unwrap_or_else(|| output.with_extension("meta.json"));
            io::write_column_meta(matrix.meta(), &meta_path)?;
            println!(
                "binarized {} rows x {} raw columns into {} feature columns",
                matrix.n_rows(),
                raw.columns.len(),
                matrix.n_cols()
            );
            println!("features: {}", output.display());
            println!("meta: {}", meta_path.display());
        }

        Command::Constraints { action } => match action {
            ConstraintsAction::Validate { ontology, meta, contrapositive, direct_only } => {
                let doc = parse_ontology(&fs::read_to_string(&ontology)?)?;
                let meta = io::read_column_meta(&meta)?;
                let options =
                    LiteralPairOptions { contrapositive, transitive: !direct_only };
                let (set, warnings) = literal_pairs(&doc, &meta, options)?;
                for w in warnings {
                    eprintln!("warning: {w}");
                }
                println!("classes: {}", doc.classes.len());
                println!("subclass axioms: {}", doc.subclass_of.len());
                println!("disjoint axioms: {}", doc.disjoint.len());
                println!("bound implication pairs: {}", set.implications().len());
                println!(
                    "exclusion pairs (incl. {} contradictions): {}",
                    set.n(),
                    set.exclusions().len()
                );
            }
        },

        Command::Train => {
            let config_path =
                cli.config.as_ref().ok_or_else(|| anyhow!("train needs --config"))?;
            let mut cfg = RunConfig::load(config_path)?;
            if let Some(seed) = cli.seed {
                cfg.train.seed = seed;
            }
            let out_dir = resolve_out_dir(out_dir, &cfg)?;
            let loaded = load_dataset(&cfg.data)?;
            let result = train(&loaded.dataset, &cfg.train, &loaded.constraints)?;
            let trained = &result.trained;

            let model_path = out_dir.join("model.json");
            let history_path = out_dir.join("history.csv");
            io::write_model(&trained.model, &model_path)?;
            io::write_history_csv(&trained.history, &history_path)?;

            let test_preds = trained.model.predict_batch(&result.split.test.features)?;
            let test_stats = absolute_errors("rules", &test_preds, &result.split.test.targets)?;
            println!(
                "trained {} rules on {} features for {} epochs",
                trained.model.m,
                trained.model.n,
                trained.history.records.len()
            );
            println!(
                "best validation loss {:.6} at epoch {}",
                trained.best_val_loss, trained.best_epoch
            );
            println!("test mae {:.4} (median {:.4})", test_stats.mean, test_stats.median);
            println!("model: {}", model_path.display());
            println!("history: {}", history_path.display());
        }

        Command::Predict { model, features, output } => {
            let model = io::read_model(&model)?;
            let matrix = io::read_feature_csv(&features)?;
            let preds = model.predict_batch(&matrix)?;
            let rows: Vec<(String, f64)> = matrix
                .row_ids()
                .iter()
                .cloned()
                .zip(preds)
                .collect();
            io::write_predictions_csv(&rows, &output)?;
            println!("wrote {} predictions to {}", rows.len(), output.display());
        }

        Command::Explain {
            model,
            features,
            row,
            index,
            display_threshold,
            contribution_threshold,
            json,
        } => {
            let model = io::read_model(&model)?;
            let matrix = io::read_feature_csv(&features)?;
            let row_idx = resolve_row_index(&matrix, &row, &index)?;
            let defaults = match &cli.config {
                Some(path) => RunConfig::load(path)?.explain,
                None => ExplainDefaults::default(),
            };
            let lits = LiteralVector::from_features(matrix.row(row_idx))?;
            let explanation = explain_prediction(
                &model,
                &lits,
                display_threshold.unwrap_or(defaults.display_threshold),
                contribution_threshold.unwrap_or(defaults.contribution_threshold),
            )?;
            print!("{}", render_text(&explanation));
            let json_path = match json {
                Some(path) => path,
                None => out_dir.unwrap_or_else(|| PathBuf::from(".")).join("explanation.json"),
            };
            fs::write(&json_path, serde_json::to_string_pretty(&explanation)?)?;
            eprintln!("explanation json: {}", json_path.display());
        }

        Command::Evaluate { model, external } => {
            let config_path =
                cli.config.as_ref().ok_or_else(|| anyhow!("evaluate needs --config"))?;
            let mut cfg = RunConfig::load(config_path)?;
            if let Some(seed) = cli.seed {
                cfg.train.seed = seed;
            }
            let out_dir = resolve_out_dir(out_dir, &cfg)?;
            let loaded = load_dataset(&cfg.data)?;
            let split = semrules::train::split(
                &loaded.dataset,
                cfg.train.split_ratios,
                cfg.train.seed,
            )?;
            let model = io::read_model(&model)?;

            let mut report = EvalReport::new(split.test.features.row_ids().to_vec());
            let preds = model.predict_batch(&split.test.features)?;
            report.push(absolute_errors("rules", &preds, &split.test.targets)?)?;
            report.push(ridge_baseline(&split.train, &split.test, cfg.train.ridge_lambda)?)?;

            for spec in &external {
                let (name, path) = spec
                    .split_once('=')
                    .ok_or_else(|| anyhow!("--external expects name=path, got '{spec}'"))?;
                let by_id: BTreeMap<String, f64> =
                    io::read_predictions_csv(Path::new(path))?.into_iter().collect();
                let preds = split
                    .test
                    .features
                    .row_ids()
                    .iter()
                    .map(|id| {
                        by_id
                            .get(id)
                            .copied()
                            .ok_or_else(|| anyhow!("external '{name}' misses test row '{id}'"))
                    })
                    .collect::<anyhow::Result<Vec<f64>>>()?;
                report.push(absolute_errors(name, &preds, &split.test.targets)?)?;
            }

            let json_path = out_dir.join("report.json");
            let csv_path = out_dir.join("report.csv");
            io::write_eval_report_json(&report, &json_path)?;
            io::write_eval_report_csv(&report, &csv_path)?;
            for entry in &report.entries {
                println!(
                    "{}: mae {:.4}, median {:.4}, q1 {:.4}, q3 {:.4}, max {:.4}",
                    entry.label, entry.mean, entry.median, entry.q1, entry.q3, entry.max
                );
            }
            println!("report: {}", json_path.display());
        }

        Command::Synth { spec } => {
            let mut spec = SyntheticSpec::from_json(&fs::read_to_string(&spec)?)?;
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let out_dir = out_dir.unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&out_dir)?;
            let (dataset, truth) = semrules::eval::generate_synthetic(&spec)?;
            io::write_feature_csv(&dataset.features, &out_dir.join("features.csv"))?;
            io::write_column_meta(dataset.features.meta(), &out_dir.join("features.meta.json"))?;
            let targets: Vec<(String, f64)> = dataset
                .features
                .row_ids()
                .iter()
                .cloned()
                .zip(dataset.targets.iter().copied())
                .collect();
            io::write_targets_csv(&targets, &out_dir.join("targets.csv"))?;
            io::write_model(&truth, &out_dir.join("truth_model.json"))?;
            println!(
                "generated {} rows x {} features with {} planted rules in {}",
                dataset.n_rows(),
                dataset.features.n_cols(),
                spec.planted_rules.len(),
                out_dir.display()
            );
        }
    }
    Ok(())
}

fn resolve_out_dir(cli_out: Option<PathBuf>, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = cli_out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // one line, machine parsable
            let msg = format!("{err:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
