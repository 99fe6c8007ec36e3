//! Weight pruning, network slimming and the train/prune/fine-tune pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::Dataset;
use crate::network::{LayerNode, NetworkError, SequentialNetwork};
use crate::tensor::Tensor;
use crate::training::{self, TrainingConfig, TrainingError, WeightMask};

#[derive(Debug, Error)]
pub enum PruningError {
    #[error("invalid pruning config: {0}")]
    Config(String),
    #[error("network slimming needs batch-norm blocks: {0}")]
    NotSlimmable(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Training(#[from] TrainingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruningMethod {
    WeightPruning,
    NetworkSlimming,
}

/// Cutoff for weight pruning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneAmount {
    /// Absolute magnitude below which weights are zeroed.
    Threshold(f64),
    /// Fraction of the smallest-magnitude targets to remove.
    Ratio(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruningConfig {
    pub method: PruningMethod,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub ratio: Option<f64>,
    #[serde(default)]
    pub pre_train: Option<TrainingConfig>,
    #[serde(default)]
    pub fine_tune: Option<TrainingConfig>,
}

impl PruningConfig {
    pub fn amount(&self) -> Result<PruneAmount, PruningError> {
        let bad = |m: &str| Err(PruningError::Config(m.into()));
        match (self.method, self.threshold, self.ratio) {
            (PruningMethod::WeightPruning, Some(t), None) => {
                if t >= 0.0 && t.is_finite() {
                    Ok(PruneAmount::Threshold(t))
                } else {
                    bad("threshold must be a nonnegative real")
                }
            }
            (_, None, Some(r)) => {
                if (0.0..1.0).contains(&r) {
                    Ok(PruneAmount::Ratio(r))
                } else {
                    bad("ratio must lie in [0, 1)")
                }
            }
            (PruningMethod::WeightPruning, _, _) => {
                bad("weight pruning needs exactly one of threshold or ratio")
            }
            (PruningMethod::NetworkSlimming, _, _) => bad("network slimming needs a ratio"),
        }
    }
}

/// Value at position `⌊r·n⌋` of the ascending sort. Everything strictly
/// below it is pruned, so exactly `⌊r·n⌋` values go when there are no ties.
fn quantile_cutoff(mut values: Vec<f64>, ratio: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let k = ((ratio * values.len() as f64).floor() as usize).min(values.len() - 1);
    Some(values[k])
}

pub fn weight_prune_threshold(net: &SequentialNetwork, threshold: f64) -> SequentialNetwork {
    let mut out = net.clone();
    for node in &mut out.nodes {
        if let LayerNode::FullyConnected(fc) = node {
            for w in fc.weights.data_mut() {
                if w.abs() < threshold {
                    *w = 0.0;
                }
            }
        }
    }
    out
}

/// Zeroes fully-connected weights by absolute threshold or global ratio.
/// Biases and batch-norm parameters are never touched.
pub fn weight_prune(net: &SequentialNetwork, amount: PruneAmount) -> SequentialNetwork {
    let threshold = match amount {
        PruneAmount::Threshold(t) => t,
        PruneAmount::Ratio(r) => {
            let mags = net
                .fully_connected()
                .flat_map(|fc| fc.weights.data())
                .map(|w| w.abs())
                .collect();
            quantile_cutoff(mags, r).unwrap_or(0.0)
        }
    };
    weight_prune_threshold(net, threshold)
}

/// Fraction of fully-connected weights equal to zero.
pub fn sparsity(net: &SequentialNetwork) -> f64 {
    let (zeros, total) = net
        .fully_connected()
        .flat_map(|fc| fc.weights.data())
        .fold((0usize, 0usize), |(z, t), &w| (z + usize::from(w == 0.0), t + 1));
    if total == 0 {
        0.0
    } else {
        zeros as f64 / total as f64
    }
}

/// Keep mask for one batch-norm node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlimMask {
    /// Index of the batch-norm node in the network's node list.
    pub node: usize,
    pub keep: Vec<bool>,
}

impl SlimMask {
    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

/// Global `|γ|` quantile across all batch-norm nodes. Neurons with
/// `|γ| ≥ cutoff` survive; each layer keeps at least its largest `|γ|`.
pub fn select_slim_targets(
    net: &SequentialNetwork,
    ratio: f64,
) -> Result<Vec<SlimMask>, PruningError> {
    let pool: Vec<f64> = net
        .batch_norms()
        .flat_map(|bn| bn.gamma.data())
        .map(|g| g.abs())
        .collect();
    let Some(cutoff) = quantile_cutoff(pool, ratio) else {
        return Err(PruningError::NotSlimmable("network has no batch-norm node".into()));
    };
    let masks = net
        .nodes
        .iter()
        .enumerate()
        .filter_map(|(node, n)| match n {
            LayerNode::BatchNorm1D(bn) => {
                let mut keep: Vec<bool> = bn.gamma.data().iter().map(|g| g.abs() >= cutoff).collect();
                if !keep.iter().any(|&k| k) {
                    let best = bn
                        .gamma
                        .data()
                        .iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |acc, (i, g)| {
                            if g.abs() > acc.1 {
                                (i, g.abs())
                            } else {
                                acc
                            }
                        })
                        .0;
                    keep[best] = true;
                }
                Some(SlimMask { node, keep })
            }
            _ => None,
        })
        .collect();
    Ok(masks)
}

fn select<T: Copy>(values: &[T], keep: &[bool]) -> Vec<T> {
    values
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|(v, _)| *v)
        .collect()
}

/// Removes the neurons rejected by `masks`.
///
/// A removed neuron's output is replaced by the constant `relu(β_j)`, which
/// is added into the next layer's bias. That is exact when `γ_j = 0`.
pub fn apply_slim_masks(
    net: &SequentialNetwork,
    masks: &[SlimMask],
) -> Result<SequentialNetwork, PruningError> {
    net.validate().map_err(NetworkError::Invalid)?;
    let mut nodes = net.nodes.clone();
    for mask in masks {
        let bn_idx = mask.node;
        let (fc_idx, relu_idx) = (bn_idx.wrapping_sub(1), bn_idx + 1);
        let next_idx = bn_idx + 2;
        let shape_ok = matches!(nodes.get(fc_idx), Some(LayerNode::FullyConnected(_)))
            && matches!(nodes.get(bn_idx), Some(LayerNode::BatchNorm1D(_)))
            && matches!(nodes.get(relu_idx), Some(LayerNode::ReLU(_)))
            && matches!(nodes.get(next_idx), Some(LayerNode::FullyConnected(_)));
        if !shape_ok {
            return Err(PruningError::NotSlimmable(format!(
                "node {bn_idx} is not inside an FC-BN-ReLU block followed by FC"
            )));
        }
        let keep = &mask.keep;
        let kept = keep.iter().filter(|&&k| k).count();
        if kept == 0 {
            return Err(PruningError::NotSlimmable(format!(
                "mask for node {bn_idx} removes every neuron"
            )));
        }

        let LayerNode::BatchNorm1D(bn) = &mut nodes[bn_idx] else { unreachable!() };
        if keep.len() != bn.dim {
            return Err(PruningError::NotSlimmable(format!(
                "mask length {} does not match layer width {}",
                keep.len(),
                bn.dim
            )));
        }
        let absorbed: Vec<(usize, f64)> = keep
            .iter()
            .enumerate()
            .filter(|(_, &k)| !k)
            .map(|(j, _)| (j, bn.beta.data()[j].max(0.0)))
            .collect();
        bn.gamma = Tensor::vector(select(bn.gamma.data(), keep)).expect("kept > 0");
        bn.beta = Tensor::vector(select(bn.beta.data(), keep)).expect("kept > 0");
        bn.running_mean = Tensor::vector(select(bn.running_mean.data(), keep)).expect("kept > 0");
        bn.running_var = Tensor::vector(select(bn.running_var.data(), keep)).expect("kept > 0");
        bn.dim = kept;

        let LayerNode::FullyConnected(fc) = &mut nodes[fc_idx] else { unreachable!() };
        let cols = fc.in_dim;
        let rows: Vec<f64> = fc
            .weights
            .data()
            .chunks(cols)
            .zip(keep)
            .filter(|(_, &k)| k)
            .flat_map(|(r, _)| r.iter().copied())
            .collect();
        fc.weights = Tensor::matrix(kept, cols, rows).expect("kept > 0");
        fc.bias = Tensor::vector(select(fc.bias.data(), keep)).expect("kept > 0");
        fc.out_dim = kept;

        let LayerNode::ReLU(r) = &mut nodes[relu_idx] else { unreachable!() };
        r.dim = kept;

        let LayerNode::FullyConnected(next) = &mut nodes[next_idx] else { unreachable!() };
        let old_cols = next.in_dim;
        let bias = next.bias.data_mut();
        for (j, value) in &absorbed {
            for (i, b) in bias.iter_mut().enumerate() {
                *b += value * next.weights.data()[i * old_cols + j];
            }
        }
        let mut data = Vec::with_capacity(next.out_dim * kept);
        for row in next.weights.data().chunks(old_cols) {
            data.extend(select(row, keep));
        }
        next.weights = Tensor::matrix(next.out_dim, kept, data).expect("kept > 0");
        next.in_dim = kept;
    }
    let out = SequentialNetwork::new(net.name.clone(), net.input_dim, nodes);
    out.validate().map_err(NetworkError::Invalid)?;
    Ok(out)
}

/// Structured pruning by batch-norm scale magnitude.
pub fn network_slim(net: &SequentialNetwork, ratio: f64) -> Result<SequentialNetwork, PruningError> {
    let masks = select_slim_targets(net, ratio)?;
    apply_slim_masks(net, &masks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub sparsity: f64,
    pub hidden_widths: Vec<usize>,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PruningReport {
    pub stages: Vec<StageReport>,
}

fn stage(name: &str, net: &SequentialNetwork, ds: &Dataset) -> StageReport {
    let acc = |s: &[crate::datasets::Sample]| training::evaluate(net, s).ok().map(|e| e.accuracy);
    StageReport {
        stage: name.into(),
        train_accuracy: acc(ds.train()),
        test_accuracy: acc(ds.test()),
        sparsity: sparsity(net),
        hidden_widths: net.hidden_widths(),
        param_count: net.stats().param_count,
    }
}

/// Optional sparse pre-training, pruning, optional fine-tuning. Every stage
/// is recorded in the report, including the starting point.
pub fn prune_pipeline(
    net: &SequentialNetwork,
    dataset: &Dataset,
    config: &PruningConfig,
) -> Result<(SequentialNetwork, PruningReport), PruningError> {
    let amount = config.amount()?;
    net.validate().map_err(NetworkError::Invalid)?;
    let mut report = PruningReport::default();
    report.stages.push(stage("input", net, dataset));
    let mut current = net.clone();

    match config.method {
        PruningMethod::NetworkSlimming => {
            if let Some(pre) = &config.pre_train {
                current = training::train(&current, dataset, pre)?.0;
                report.stages.push(stage("sparse", &current, dataset));
            }
            let PruneAmount::Ratio(r) = amount else { unreachable!("checked by amount()") };
            current = network_slim(&current, r)?;
            report.stages.push(stage("slimmed", &current, dataset));
            if let Some(ft) = &config.fine_tune {
                let ft = TrainingConfig {
                    slim_lambda: 0.0,
                    ..ft.clone()
                };
                current = training::train(&current, dataset, &ft)?.0;
                report.stages.push(stage("fine_tuned", &current, dataset));
            }
        }
        PruningMethod::WeightPruning => {
            if let Some(pre) = &config.pre_train {
                current = training::train(&current, dataset, pre)?.0;
                report.stages.push(stage("pre_trained", &current, dataset));
            }
            current = weight_prune(&current, amount);
            report.stages.push(stage("weight_pruned", &current, dataset));
            if let Some(ft) = &config.fine_tune {
                let mask = WeightMask::zeros_of(&current);
                current = training::train_masked(&current, dataset, ft, Some(&mask))?.0;
                report.stages.push(stage("fine_tuned", &current, dataset));
            }
        }
    }
    Ok((current, report))
}
