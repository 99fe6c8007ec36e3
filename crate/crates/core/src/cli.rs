//! Command-line front end.
//!
//! Exit codes: 0 success or Verified, 1 Falsified, 2 Unknown, 3 any error
//! (including argument errors). Every output file is written atomically.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{DataSpec, Dataset, DatasetError, Split};
use crate::experiment::{self, ExperimentConfig, ExperimentError};
use crate::model_io::{self, write_atomic, ModelIoError};
use crate::network::SequentialNetwork;
use crate::pruning::{self, PruningConfig, PruningError, PruningMethod};
use crate::repair::{self, RepairConfig, RepairError};
use crate::training::{self, TrainingConfig, TrainingError};
use crate::verification::{
    self, emit_smtlib, parse_smtlib, robustness_property, BabConfig, Counterexample, Engine,
    InputBox, Property, SearchStats, Status, VerifyError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FALSIFIED: i32 = 1;
pub const EXIT_UNKNOWN: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelIoError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Pruning(#[from] PruningError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Repair(#[from] RepairError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
    pub init_seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            name: "net".into(),
            hidden: vec![16],
            batch_norm: true,
            init_seed: 0,
        }
    }
}

/// Single document driving every command. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<DataSpec>,
    pub model: ModelSpec,
    pub training: TrainingConfig,
    pub pruning: Option<PruningConfig>,
    pub verifier: BabConfig,
    pub repair: RepairConfig,
    pub experiment: Option<ExperimentConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|e| CliError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.model.hidden.contains(&0) {
            return Err(CliError::Usage("model.hidden widths must be positive".into()));
        }
        self.training.validate()?;
        if let Some(p) = &self.pruning {
            p.amount()?;
        }
        self.verifier.validate()?;
        self.repair.validate()?;
        if let Some(e) = &self.experiment {
            e.validate()?;
        }
        Ok(())
    }

    /// `--seed` replaces every seed in the document.
    pub fn override_seed(&mut self, seed: u64) {
        self.model.init_seed = seed;
        self.training.seed = seed;
        self.verifier.seed = seed;
        self.repair.trainer.seed = seed;
        self.repair.verifier.seed = seed;
        if let Some(p) = &mut self.pruning {
            for t in [&mut p.pre_train, &mut p.fine_tune].into_iter().flatten() {
                t.seed = seed;
            }
        }
        if let Some(e) = &mut self.experiment {
            e.init_seed = seed;
            e.baseline.seed = seed;
            e.sparse.seed = seed;
            e.verifier.seed = seed;
            if let Some(ft) = &mut e.fine_tune {
                ft.seed = seed;
            }
        }
    }

    fn dataset(&self) -> Result<Dataset, CliError> {
        self.data
            .as_ref()
            .ok_or_else(|| CliError::Usage("config has no `data` section".into()))?
            .load()
            .map_err(CliError::from)
    }
}

#[derive(Debug, Parser)]
#[command(name = "nnkit", version, about = "Train, prune, verify and repair ReLU networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Wp,
    Ns,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EngineArg {
    Ibp,
    Bab,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    /// Sample to build the robustness query around
    #[arg(long)]
    pub sample_index: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network; writes the model and a metrics document
    Train {
        #[command(flatten)]
        common: Common,
        /// Start from this model instead of a fresh initialization
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Metrics path (default: <out>.metrics.json)
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Weight pruning or network slimming
    Prune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, conflicts_with = "threshold")]
        ratio: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Fine-tune with the config's training section
        #[arg(long)]
        fine_tune: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a property; exit 0 verified, 1 falsified, 2 unknown
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// SMT-LIB property file
        #[arg(long, conflicts_with = "robustness")]
        property: Option<PathBuf>,
        /// Build a robustness query from a dataset sample
        #[arg(long)]
        robustness: bool,
        #[command(flatten)]
        rob: RobustnessArgs,
        #[arg(long, value_enum, default_value = "bab")]
        engine: EngineArg,
        /// Wall-clock budget in seconds
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long)]
        max_nodes: Option<usize>,
        /// Result record path
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Counterexample-guided repair on robustness queries
    Repair {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Samples to build queries around (comma separated)
        #[arg(long, value_delimiter = ',', required = true)]
        sample_indices: Vec<usize>,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Report path (default: <out>.report.json)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Accuracy on a dataset split
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Architecture summary
    Info {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Write a robustness query as SMT-LIB
    ExportSmtlib {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        rob: RobustnessArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Baseline / Sparse / WP / NS verification table
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_ERROR,
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.override_seed(s);
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    write_atomic(path, text.as_bytes()).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn robustness_from(
    cfg: &RunConfig,
    rob: &RobustnessArgs,
    num_classes_check: Option<usize>,
) -> Result<Property, CliError> {
    let (Some(i), Some(eps)) = (rob.sample_index, rob.epsilon) else {
        return Err(CliError::Usage("robustness queries need --sample-index and --epsilon".into()));
    };
    let ds = cfg.dataset()?;
    if let Some(m) = num_classes_check {
        if m != ds.num_classes {
            return Err(CliError::Usage(format!(
                "model has {m} outputs but the dataset has {} classes",
                ds.num_classes
            )));
        }
    }
    let samples = ds.split(rob.split.into());
    let s = samples.get(i).ok_or_else(|| {
        CliError::Usage(format!("sample index {i} out of range ({} samples)", samples.len()))
    })?;
    Ok(robustness_property(&s.input, s.label, ds.num_classes, eps, &InputBox::unit(ds.input_dim))?)
}

/// Machine-readable verification record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyRecord {
    pub status: Status,
    pub input: Option<Vec<f64>>,
    pub output: Option<Vec<f64>>,
    pub disjunct: Option<usize>,
    pub stats: SearchStats,
}

impl VerifyRecord {
    fn new(status: Status, cex: Option<Counterexample>, stats: SearchStats) -> Self {
        Self {
            status,
            input: cex.as_ref().map(|c| c.input.clone()),
            output: cex.as_ref().map(|c| c.output.clone()),
            disjunct: cex.map(|c| c.disjunct),
            stats,
        }
    }
}

fn execute(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Train {
            common,
            model,
            out,
            metrics,
        } => {
            let cfg = load_config(&common)?;
            let ds = cfg.dataset()?;
            let start = match model {
                Some(p) => model_io::load_model(p)?,
                None => SequentialNetwork::initialized(
                    cfg.model.name.clone(),
                    ds.input_dim,
                    &cfg.model.hidden,
                    ds.num_classes,
                    cfg.model.batch_norm,
                    cfg.model.init_seed,
                ),
            };
            let (net, m) = training::train(&start, &ds, &cfg.training)?;
            model_io::save_model(&net, &out)?;
            write_json(&metrics.unwrap_or_else(|| with_suffix(&out, ".metrics.json")), &m)?;
            if let Some(last) = m.epochs.last() {
                println!(
                    "trained {} epochs: loss {:.6}, train accuracy {:.4}{}",
                    m.epochs.len(),
                    last.loss.total,
                    last.train_accuracy,
                    last.test_accuracy.map_or(String::new(), |a| format!(", test accuracy {a:.4}"))
                );
            } else {
                println!("0 epochs: wrote the initial model");
            }
            Ok(EXIT_OK)
        }
        Command::Prune {
            common,
            model,
            method,
            ratio,
            threshold,
            fine_tune,
            out,
        } => {
            let cfg = load_config(&common)?;
            let net = model_io::load_model(&model)?;
            let mut pc = cfg.pruning.clone().unwrap_or(PruningConfig {
                method: PruningMethod::WeightPruning,
                threshold: None,
                ratio: None,
                pre_train: None,
                fine_tune: None,
            });
            if let Some(m) = method {
                pc.method = match m {
                    MethodArg::Wp => PruningMethod::WeightPruning,
                    MethodArg::Ns => PruningMethod::NetworkSlimming,
                };
            } else if cfg.pruning.is_none() {
                return Err(CliError::Usage("--method is required without a pruning config".into()));
            }
            if ratio.is_some() || threshold.is_some() {
                pc.ratio = ratio;
                pc.threshold = threshold;
            }
            if fine_tune && pc.fine_tune.is_none() {
                pc.fine_tune = Some(cfg.training.clone());
            }
            pc.amount()?;
            let ds = if pc.pre_train.is_some() || pc.fine_tune.is_some() || cfg.data.is_some() {
                cfg.dataset()?
            } else {
                Dataset::new(net.input_dim, net.output_dim())
            };
            let (pruned, report) = pruning::prune_pipeline(&net, &ds, &pc)?;
            model_io::save_model(&pruned, &out)?;
            write_json(&with_suffix(&out, ".report.json"), &report)?;
            println!(
                "pruned: hidden widths {:?} -> {:?}, sparsity {:.4}",
                net.hidden_widths(),
                pruned.hidden_widths(),
                pruning::sparsity(&pruned)
            );
            Ok(EXIT_OK)
        }
        Command::Verify {
            common,
            model,
            property,
            robustness,
            rob,
            engine,
            timeout,
            max_nodes,
            out,
        } => {
            let cfg = load_config(&common)?;
            let net = model_io::load_model(&model)?;
            let prop = match (property, robustness) {
                (Some(path), false) => {
                    let text = fs::read_to_string(&path).map_err(|source| CliError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    parse_smtlib(&text).map_err(VerifyError::from)?
                }
                (None, true) => robustness_from(&cfg, &rob, Some(net.output_dim()))?,
                _ => return Err(CliError::Usage("give exactly one of --property or --robustness".into())),
            };
            let mut bab: BabConfig = cfg.verifier.clone();
            if let Some(t) = timeout {
                bab.time_budget = Some(t);
            }
            if let Some(n) = max_nodes {
                bab.max_nodes = n;
            }
            let engine = match engine {
                EngineArg::Ibp => Engine::Ibp,
                EngineArg::Bab => Engine::Bab,
            };
            let r = verification::verify(&net, &prop, engine, &bab)?;
            let record = VerifyRecord::new(r.status, r.counterexample, r.stats);
            if let Some(p) = &out {
                write_json(p, &record)?;
            }
            println!("{}", serde_json::to_string(&record).expect("serializable"));
            Ok(match record.status {
                Status::Verified => EXIT_OK,
                Status::Falsified => EXIT_FALSIFIED,
                Status::Unknown => EXIT_UNKNOWN,
            })
        }
        Command::Repair {
            common,
            model,
            sample_indices,
            epsilon,
            split,
            max_iterations,
            out,
            report,
        } => {
            let cfg = load_config(&common)?;
            let net = model_io::load_model(&model)?;
            let mut ds = cfg.dataset()?;
            let mut rc = cfg.repair.clone();
            if let Some(n) = max_iterations {
                rc.max_iterations = n;
            }
            let samples = ds.split(split.into());
            let domain = InputBox::unit(ds.input_dim);
            let props = sample_indices
                .iter()
                .map(|&i| {
                    let s = samples.get(i).ok_or_else(|| {
                        CliError::Usage(format!("sample index {i} out of range ({} samples)", samples.len()))
                    })?;
                    Ok(robustness_property(&s.input, s.label, ds.num_classes, epsilon, &domain)?)
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let (fixed, rep) = repair::repair(&net, &props, &mut ds, &rc)?;
            model_io::save_model(&fixed, &out)?;
            write_json(&report.unwrap_or_else(|| with_suffix(&out, ".report.json")), &rep)?;
            println!(
                "repair: {} iterations, {} samples added, all verified: {}",
                rep.iterations.len(),
                rep.total_samples_added,
                rep.all_verified
            );
            Ok(EXIT_OK)
        }
        Command::Eval { common, model, split } => {
            let cfg = load_config(&common)?;
            let net = model_io::load_model(&model)?;
            let ds = cfg.dataset()?;
            let e = training::evaluate(&net, ds.split(split.into()))?;
            println!("{}", serde_json::to_string(&e).expect("serializable"));
            Ok(EXIT_OK)
        }
        Command::Info { common: _, model } => {
            let net = model_io::load_model(&model)?;
            let s = net.stats();
            println!("name: {}", net.name);
            println!("widths: {:?}", s.widths);
            println!("hidden: {:?}", net.hidden_widths());
            println!("batch_norm: {}", net.has_batch_norm());
            println!("parameters: {}", s.param_count);
            Ok(EXIT_OK)
        }
        Command::ExportSmtlib { common, rob, out } => {
            let cfg = load_config(&common)?;
            let p = robustness_from(&cfg, &rob, None)?;
            write_atomic(&out, emit_smtlib(&p).as_bytes()).map_err(|source| CliError::Io {
                path: out.display().to_string(),
                source,
            })?;
            Ok(EXIT_OK)
        }
        Command::Experiment { common, out } => {
            let cfg = load_config(&common)?;
            let ec = cfg
                .experiment
                .ok_or_else(|| CliError::Usage("config has no `experiment` section".into()))?;
            let report = experiment::run_experiment(&ec)?;
            if let Some(p) = &out {
                write_json(p, &report)?;
            }
            print!("{}", report.table());
            Ok(EXIT_OK)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_config_keys_are_rejected() {
        let e = serde_json::from_str::<RunConfig>(r#"{"trainig": {}}"#);
        assert!(e.is_err());
        let e = serde_json::from_str::<RunConfig>(r#"{"training": {"epochs": 1, "lr": 0.1}}"#);
        assert!(e.is_err());
        let ok: RunConfig = serde_json::from_str(r#"{"training": {"epochs": 3}}"#).unwrap();
        assert_eq!(ok.training.epochs, 3);
        assert_eq!(ok.training.batch_size, 32);
    }

    #[test]
    fn seed_override_reaches_every_seed() {
        let mut c = RunConfig::default();
        c.override_seed(9);
        assert_eq!((c.model.init_seed, c.training.seed, c.verifier.seed, c.repair.trainer.seed), (9, 9, 9, 9));
    }

    #[test]
    fn argument_errors_exit_3() {
        assert_eq!(run(["nnkit", "bogus"]), EXIT_ERROR);
        assert_eq!(run(["nnkit", "prune", "--model", "m.json", "--method", "xx", "--out", "o.json"]), EXIT_ERROR);
        assert_eq!(run(["nnkit", "--help"]), EXIT_OK);
    }
}
