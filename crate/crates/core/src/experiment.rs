//! Train a baseline, derive sparse / weight-pruned / slimmed variants and
//! count how many robustness queries the verifier settles on each.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{DataSpec, Dataset, DatasetError};
use crate::network::SequentialNetwork;
use crate::pruning::{self, PruneAmount, PruningError};
use crate::training::{self, TrainingConfig, TrainingError, WeightMask};
use crate::verification::{
    robustness_property, root_unstable_count, verify_bab, BabConfig, InputBox, Status, VerifyError,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Pruning(#[from] PruningError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default)]
    pub baseline: TrainingConfig,
    /// Sparse training, warm-started from the baseline.
    #[serde(default = "default_sparse")]
    pub sparse: TrainingConfig,
    #[serde(default = "default_ratio")]
    pub wp_ratio: f64,
    #[serde(default = "default_ratio")]
    pub ns_ratio: f64,
    #[serde(default)]
    pub fine_tune: Option<TrainingConfig>,
    #[serde(default = "default_queries")]
    pub queries: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub verifier: BabConfig,
}

fn default_hidden() -> Vec<usize> {
    vec![16, 16, 16]
}
fn default_sparse() -> TrainingConfig {
    TrainingConfig {
        slim_lambda: 1e-3,
        ..Default::default()
    }
}
fn default_ratio() -> f64 {
    0.5
}
fn default_queries() -> usize {
    20
}
fn default_epsilon() -> f64 {
    0.02
}
fn default_timeout() -> f64 {
    60.0
}

impl ExperimentConfig {
    pub fn new(data: DataSpec) -> Self {
        Self {
            data,
            hidden: default_hidden(),
            init_seed: 0,
            baseline: TrainingConfig::default(),
            sparse: default_sparse(),
            wp_ratio: default_ratio(),
            ns_ratio: default_ratio(),
            fine_tune: None,
            queries: default_queries(),
            epsilon: default_epsilon(),
            timeout_secs: default_timeout(),
            verifier: BabConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be positive and nonempty");
        }
        if !(0.0..1.0).contains(&self.wp_ratio) || !(0.0..1.0).contains(&self.ns_ratio) {
            return bad("pruning ratios must lie in [0, 1)");
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be nonnegative");
        }
        if !(self.timeout_secs > 0.0) {
            return bad("timeout_secs must be positive");
        }
        self.baseline.validate()?;
        self.sparse.validate()?;
        if let Some(ft) = &self.fine_tune {
            ft.validate()?;
        }
        self.verifier.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub variant: String,
    pub query: usize,
    pub sample_index: usize,
    pub label: usize,
    pub status: Status,
    pub root_unstable: usize,
    pub nodes: usize,
    pub wall_time_secs: f64,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: String,
    pub solved: usize,
    pub verified: usize,
    pub falsified: usize,
    pub unknown: usize,
    pub mean_root_unstable: f64,
    pub test_accuracy: Option<f64>,
    pub hidden_widths: Vec<usize>,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<VariantRow>,
    pub instances: Vec<InstanceRecord>,
}

impl ExperimentReport {
    /// Plain-text table, one row per variant.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>6} {:>8} {:>9} {:>7} {:>10} {:>8}  widths\n",
            "variant", "solved", "verified", "falsified", "unknown", "unstable", "test_acc"
        );
        for r in &self.rows {
            let acc = r.test_accuracy.map_or("-".to_string(), |a| format!("{a:.3}"));
            out += &format!(
                "{:<10} {:>6} {:>8} {:>9} {:>7} {:>10.2} {:>8}  {:?}\n",
                r.variant, r.solved, r.verified, r.falsified, r.unknown, r.mean_root_unstable, acc, r.hidden_widths
            );
        }
        out
    }

    pub fn row(&self, variant: &str) -> Option<&VariantRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

/// The four networks compared by the experiment.
pub fn build_variants(
    cfg: &ExperimentConfig,
    ds: &Dataset,
) -> Result<Vec<(String, SequentialNetwork)>, ExperimentError> {
    let init = SequentialNetwork::initialized(
        "baseline",
        ds.input_dim,
        &cfg.hidden,
        ds.num_classes,
        true,
        cfg.init_seed,
    );
    let baseline = training::train(&init, ds, &cfg.baseline)?.0;
    let sparse = training::train(&baseline, ds, &cfg.sparse)?.0;

    let mut wp = pruning::weight_prune(&baseline, PruneAmount::Ratio(cfg.wp_ratio));
    let mut ns = pruning::network_slim(&sparse, cfg.ns_ratio)?;
    if let Some(ft) = &cfg.fine_tune {
        let mask = WeightMask::zeros_of(&wp);
        wp = training::train_masked(&wp, ds, ft, Some(&mask))?.0;
        let ft = TrainingConfig {
            slim_lambda: 0.0,
            ..ft.clone()
        };
        ns = training::train(&ns, ds, &ft)?.0;
    }
    let named = |mut n: SequentialNetwork, name: &str| {
        n.name = name.into();
        (name.to_string(), n)
    };
    Ok(vec![
        named(baseline, "Baseline"),
        named(sparse, "Sparse"),
        named(wp, "WP"),
        named(ns, "NS"),
    ])
}

/// Verifies the robustness queries on each variant. Queries are the first
/// `cfg.queries` test samples (the training split if there is no test
/// split), each with its true label.
pub fn evaluate_variants(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    variants: &[(String, SequentialNetwork)],
) -> Result<ExperimentReport, ExperimentError> {
    let pool = if ds.test().is_empty() { ds.train() } else { ds.test() };
    let n_queries = cfg.queries.min(pool.len());
    let domain = InputBox::unit(ds.input_dim);
    let bab = BabConfig {
        time_budget: Some(cfg.timeout_secs),
        ..cfg.verifier.clone()
    };
    let mut rows = Vec::new();
    let mut instances = Vec::new();
    for (name, net) in variants {
        let mut row = VariantRow {
            variant: name.clone(),
            solved: 0,
            verified: 0,
            falsified: 0,
            unknown: 0,
            mean_root_unstable: 0.0,
            test_accuracy: (!ds.test().is_empty())
                .then(|| training::evaluate(net, ds.test()).map(|e| e.accuracy))
                .transpose()?,
            hidden_widths: net.hidden_widths(),
            param_count: net.stats().param_count,
        };
        let mut unstable_sum = 0usize;
        for (q, sample) in pool.iter().take(n_queries).enumerate() {
            let p = robustness_property(&sample.input, sample.label, ds.num_classes, cfg.epsilon, &domain)?;
            let root_unstable = root_unstable_count(net, &p)?;
            let start = Instant::now();
            let r = verify_bab(net, &p, &bab)?;
            let wall = start.elapsed().as_secs_f64();
            match r.status {
                Status::Verified => row.verified += 1,
                Status::Falsified => row.falsified += 1,
                Status::Unknown => row.unknown += 1,
            }
            unstable_sum += root_unstable;
            instances.push(InstanceRecord {
                variant: name.clone(),
                query: q,
                sample_index: q,
                label: sample.label,
                status: r.status,
                root_unstable,
                nodes: r.stats.nodes,
                wall_time_secs: wall,
                reason: r.stats.reason,
            });
        }
        row.solved = row.verified + row.falsified;
        if n_queries > 0 {
            row.mean_root_unstable = unstable_sum as f64 / n_queries as f64;
        }
        rows.push(row);
    }
    Ok(ExperimentReport { rows, instances })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let ds = cfg.data.load()?;
    if cfg.queries == 0 {
        return Ok(ExperimentReport {
            rows: Vec::new(),
            instances: Vec::new(),
        });
    }
    let variants = build_variants(cfg, &ds)?;
    evaluate_variants(cfg, &ds, &variants)
}
