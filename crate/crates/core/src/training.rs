//! Mini-batch training with analytic backpropagation and Adam.
//!
//! The optimised objective per batch of size `n_b` is
//!
//! ```text
//! mean softmax cross-entropy + λ/(2 n_b)·Σ w² + λ_s·Σ|γ|
//! ```
//!
//! where `w` ranges over fully-connected weights only (no biases, no batch
//! norm parameters). The 0–1 objective and the unsquared-norm regulariser
//! are tracked as metrics and never differentiated.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{Dataset, Sample};
use crate::network::{LayerNode, NetworkError, SequentialNetwork};
use crate::tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainingError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("batch of size {0} cannot be normalised; batch norm needs at least 2 samples")]
    BatchTooSmall(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("sample {index} has dimension {got}, network expects {expected}")]
    InputDim {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("label {label} out of range for {classes} outputs")]
    Label { label: usize, classes: usize },
    #[error("non-finite value in node {node} ({kind}) during {phase}")]
    NonFinite {
        node: usize,
        kind: &'static str,
        phase: &'static str,
    },
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("no samples to evaluate")]
    NoSamples,
    #[error("dataset has dimension {dataset}/{classes} classes, network is {input}->{output}")]
    DatasetMismatch {
        dataset: usize,
        classes: usize,
        input: usize,
        output: usize,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// λ: weight on the squared L2 norm of connection weights.
    pub l2_lambda: f64,
    /// λ_s: L1 penalty on batch-norm γ; zero disables sparse training.
    pub slim_lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub bn_momentum: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            l2_lambda: 0.0,
            slim_lambda: 0.0,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            bn_momentum: 0.1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: &str| Err(TrainingError::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) || !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if !(self.l2_lambda >= 0.0) || !(self.slim_lambda >= 0.0) {
            return bad("l2_lambda and slim_lambda must be nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return bad("bn_momentum must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Row-major `rows × cols` activations for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Batch {
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone)]
enum NodeCache {
    FullyConnected { input: Batch },
    BatchNorm {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
    },
    Relu { input: Batch },
}

/// Intermediates of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct TrainCache {
    nodes: Vec<NodeCache>,
}

impl TrainCache {
    /// Batch mean and biased variance of the batch-norm node at `node`.
    pub fn batch_stats(&self, node: usize) -> Option<(&[f64], &[f64])> {
        match self.nodes.get(node)? {
            NodeCache::BatchNorm { mean, var, .. } => Some((mean, var)),
            _ => None,
        }
    }

    /// Signs of every hidden ReLU input, in node order. Used to detect
    /// when a perturbation crosses a kink.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|c| match c {
                NodeCache::Relu { input } => Some(input.data.iter().map(|&v| v > 0.0)),
                _ => None,
            })
            .flatten()
            .collect()
    }
}

fn non_finite(node: usize, kind: &'static str, phase: &'static str) -> TrainingError {
    TrainingError::NonFinite { node, kind, phase }
}

/// Training-mode forward without touching running statistics.
fn forward_batch(net: &SequentialNetwork, input: Batch) -> Result<(Batch, TrainCache), TrainingError> {
    let has_bn = net.has_batch_norm();
    if input.rows == 0 {
        return Err(TrainingError::EmptyBatch);
    }
    if has_bn && input.rows < 2 {
        return Err(TrainingError::BatchTooSmall(input.rows));
    }
    if input.cols != net.input_dim {
        return Err(TrainingError::InputDim {
            index: 0,
            expected: net.input_dim,
            got: input.cols,
        });
    }
    let n = input.rows;
    let mut h = input;
    let mut caches = Vec::with_capacity(net.nodes.len());
    for (idx, node) in net.nodes.iter().enumerate() {
        let (next, cache) = match node {
            LayerNode::FullyConnected(fc) => {
                let w = fc.weights.data();
                let b = fc.bias.data();
                let mut out = vec![0.0; n * fc.out_dim];
                for s in 0..n {
                    let x = h.row(s);
                    for i in 0..fc.out_dim {
                        let row = &w[i * fc.in_dim..(i + 1) * fc.in_dim];
                        out[s * fc.out_dim + i] =
                            row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b[i];
                    }
                }
                let next = Batch {
                    rows: n,
                    cols: fc.out_dim,
                    data: out,
                };
                (next, NodeCache::FullyConnected { input: h })
            }
            LayerNode::BatchNorm1D(bn) => {
                let d = bn.dim;
                let mut mean = vec![0.0; d];
                let mut var = vec![0.0; d];
                for s in 0..n {
                    for (m, v) in mean.iter_mut().zip(h.row(s)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                for s in 0..n {
                    for ((acc, v), m) in var.iter_mut().zip(h.row(s)).zip(&mean) {
                        *acc += (v - m).powi(2);
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();
                let gamma = bn.gamma.data();
                let beta = bn.beta.data();
                let mut xhat = vec![0.0; n * d];
                let mut out = vec![0.0; n * d];
                for s in 0..n {
                    for i in 0..d {
                        let z = (h.data[s * d + i] - mean[i]) * inv_std[i];
                        xhat[s * d + i] = z;
                        out[s * d + i] = gamma[i] * z + beta[i];
                    }
                }
                let next = Batch {
                    rows: n,
                    cols: d,
                    data: out,
                };
                (
                    next,
                    NodeCache::BatchNorm {
                        xhat,
                        inv_std,
                        mean,
                        var,
                    },
                )
            }
            LayerNode::ReLU(_) => {
                let mut next = h.clone();
                tensor::relu_in_place(&mut next.data);
                (next, NodeCache::Relu { input: h })
            }
        };
        if next.data.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(idx, node.kind(), "forward"));
        }
        caches.push(cache);
        h = next;
    }
    Ok((h, TrainCache { nodes: caches }))
}

fn update_running_stats(net: &mut SequentialNetwork, cache: &TrainCache, momentum: f64) {
    for (node, c) in net.nodes.iter_mut().zip(&cache.nodes) {
        if let (LayerNode::BatchNorm1D(bn), NodeCache::BatchNorm { mean, var, .. }) = (node, c) {
            for (r, m) in bn.running_mean.data_mut().iter_mut().zip(mean) {
                *r = (1.0 - momentum) * *r + momentum * m;
            }
            for (r, v) in bn.running_var.data_mut().iter_mut().zip(var) {
                *r = (1.0 - momentum) * *r + momentum * v;
            }
        }
    }
}

/// Training-mode forward: batch statistics normalise, running statistics
/// move towards them by `momentum`.
pub fn forward_train(
    net: &mut SequentialNetwork,
    inputs: &[&[f64]],
    momentum: f64,
) -> Result<(Batch, TrainCache), TrainingError> {
    let (out, cache) = forward_batch(net, Batch::from_rows(inputs))?;
    update_running_stats(net, &cache, momentum);
    Ok((out, cache))
}

/// Gradient storage mirroring the node list.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrad {
    FullyConnected { weights: Vec<f64>, bias: Vec<f64> },
    BatchNorm { gamma: Vec<f64>, beta: Vec<f64> },
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    /// Parameter tensors in canonical order: per FC `weights, bias`, per BN
    /// `gamma, beta`.
    pub fn slots(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                LayerGrad::FullyConnected { weights, bias } => {
                    out.push(weights.as_slice());
                    out.push(bias.as_slice());
                }
                LayerGrad::BatchNorm { gamma, beta } => {
                    out.push(gamma.as_slice());
                    out.push(beta.as_slice());
                }
                LayerGrad::None => {}
            }
        }
        out
    }
}

/// Trainable parameter tensors of `net` in the same order as
/// [`Gradients::slots`].
pub fn parameter_slots_mut(net: &mut SequentialNetwork) -> Vec<&mut [f64]> {
    let mut out = Vec::new();
    for node in &mut net.nodes {
        match node {
            LayerNode::FullyConnected(fc) => {
                out.push(fc.weights.data_mut());
                out.push(fc.bias.data_mut());
            }
            LayerNode::BatchNorm1D(bn) => {
                out.push(bn.gamma.data_mut());
                out.push(bn.beta.data_mut());
            }
            LayerNode::ReLU(_) => {}
        }
    }
    out
}

pub fn parameter_slots(net: &SequentialNetwork) -> Vec<&[f64]> {
    let mut out = Vec::new();
    for node in &net.nodes {
        match node {
            LayerNode::FullyConnected(fc) => {
                out.push(fc.weights.data());
                out.push(fc.bias.data());
            }
            LayerNode::BatchNorm1D(bn) => {
                out.push(bn.gamma.data());
                out.push(bn.beta.data());
            }
            LayerNode::ReLU(_) => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean softmax cross-entropy.
    pub surrogate: f64,
    pub l2_term: f64,
    pub slim_term: f64,
}

fn squared_weight_norm(net: &SequentialNetwork) -> f64 {
    net.fully_connected()
        .flat_map(|fc| fc.weights.data())
        .map(|w| w * w)
        .sum()
}

fn gamma_l1(net: &SequentialNetwork) -> f64 {
    net.batch_norms()
        .flat_map(|bn| bn.gamma.data())
        .map(|g| g.abs())
        .sum()
}

/// Mean cross-entropy and its gradient w.r.t. the logits.
fn cross_entropy(logits: &Batch, labels: &[usize]) -> (f64, Vec<f64>) {
    let n = logits.rows;
    let mut grad = vec![0.0; logits.data.len()];
    let mut loss = 0.0;
    for s in 0..n {
        let z = logits.row(s);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let log_sum = sum.ln() + max;
        loss += log_sum - z[labels[s]];
        for (c, e) in exps.iter().enumerate() {
            let p = e / sum;
            let target = if c == labels[s] { 1.0 } else { 0.0 };
            grad[s * logits.cols + c] = (p - target) / n as f64;
        }
    }
    (loss / n as f64, grad)
}

fn check_labels(net: &SequentialNetwork, labels: &[usize]) -> Result<(), TrainingError> {
    let classes = net.output_dim();
    match labels.iter().find(|&&l| l >= classes) {
        Some(&label) => Err(TrainingError::Label { label, classes }),
        None => Ok(()),
    }
}

fn loss_and_grads_cached(
    net: &SequentialNetwork,
    inputs: &[&[f64]],
    labels: &[usize],
    config: &TrainingConfig,
) -> Result<(LossBreakdown, Gradients, TrainCache), TrainingError> {
    check_labels(net, labels)?;
    if let Some((index, x)) = inputs.iter().enumerate().find(|(_, x)| x.len() != net.input_dim) {
        return Err(TrainingError::InputDim {
            index,
            expected: net.input_dim,
            got: x.len(),
        });
    }
    let (logits, cache) = forward_batch(net, Batch::from_rows(inputs))?;
    let n_b = logits.rows as f64;
    let (surrogate, dlogits) = cross_entropy(&logits, labels);
    let l2_term = config.l2_lambda / (2.0 * n_b) * squared_weight_norm(net);
    let slim_term = config.slim_lambda * gamma_l1(net);
    let total = surrogate + l2_term + slim_term;
    if !total.is_finite() {
        return Err(TrainingError::NonFiniteLoss);
    }

    let n = logits.rows;
    let mut grad = dlogits;
    let mut layers = vec![LayerGrad::None; net.nodes.len()];
    for idx in (0..net.nodes.len()).rev() {
        let node = &net.nodes[idx];
        match (node, &cache.nodes[idx]) {
            (LayerNode::FullyConnected(fc), NodeCache::FullyConnected { input }) => {
                let (ind, outd) = (fc.in_dim, fc.out_dim);
                let w = fc.weights.data();
                let mut dw = vec![0.0; outd * ind];
                let mut db = vec![0.0; outd];
                let mut dx = vec![0.0; n * ind];
                for s in 0..n {
                    let x = input.row(s);
                    let dy = &grad[s * outd..(s + 1) * outd];
                    for i in 0..outd {
                        let g = dy[i];
                        db[i] += g;
                        let wrow = &w[i * ind..(i + 1) * ind];
                        let dwrow = &mut dw[i * ind..(i + 1) * ind];
                        let dxrow = &mut dx[s * ind..(s + 1) * ind];
                        for j in 0..ind {
                            dwrow[j] += g * x[j];
                            dxrow[j] += g * wrow[j];
                        }
                    }
                }
                if config.l2_lambda > 0.0 {
                    let k = config.l2_lambda / n_b;
                    for (d, wv) in dw.iter_mut().zip(w) {
                        *d += k * wv;
                    }
                }
                layers[idx] = LayerGrad::FullyConnected {
                    weights: dw,
                    bias: db,
                };
                grad = dx;
            }
            (LayerNode::BatchNorm1D(bn), NodeCache::BatchNorm { xhat, inv_std, .. }) => {
                let d = bn.dim;
                let gamma = bn.gamma.data();
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                let mut sum_dxhat = vec![0.0; d];
                let mut sum_dxhat_xhat = vec![0.0; d];
                for s in 0..n {
                    for i in 0..d {
                        let k = s * d + i;
                        let dy = grad[k];
                        dgamma[i] += dy * xhat[k];
                        dbeta[i] += dy;
                        let dxh = dy * gamma[i];
                        sum_dxhat[i] += dxh;
                        sum_dxhat_xhat[i] += dxh * xhat[k];
                    }
                }
                let nf = n as f64;
                let mut dx = vec![0.0; n * d];
                for s in 0..n {
                    for i in 0..d {
                        let k = s * d + i;
                        let dxh = grad[k] * gamma[i];
                        dx[k] = inv_std[i] / nf
                            * (nf * dxh - sum_dxhat[i] - xhat[k] * sum_dxhat_xhat[i]);
                    }
                }
                if config.slim_lambda > 0.0 {
                    for (dg, g) in dgamma.iter_mut().zip(gamma) {
                        // subgradient 0 at γ = 0
                        *dg += config.slim_lambda * if *g > 0.0 {
                            1.0
                        } else if *g < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                    }
                }
                layers[idx] = LayerGrad::BatchNorm {
                    gamma: dgamma,
                    beta: dbeta,
                };
                grad = dx;
            }
            (LayerNode::ReLU(_), NodeCache::Relu { input }) => {
                for (g, x) in grad.iter_mut().zip(&input.data) {
                    if *x <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            _ => unreachable!("cache mirrors the node list"),
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(idx, node.kind(), "backward"));
        }
    }
    Ok((
        LossBreakdown {
            total,
            surrogate,
            l2_term,
            slim_term,
        },
        Gradients { layers },
        cache,
    ))
}

/// Batch loss and the analytic gradient of every trainable parameter.
pub fn loss_and_grads(
    net: &SequentialNetwork,
    inputs: &[&[f64]],
    labels: &[usize],
    config: &TrainingConfig,
) -> Result<(LossBreakdown, Gradients), TrainingError> {
    loss_and_grads_cached(net, inputs, labels, config).map(|(l, g, _)| (l, g))
}

/// Batch loss only, plus the ReLU sign pattern it was computed under.
pub fn batch_loss(
    net: &SequentialNetwork,
    inputs: &[&[f64]],
    labels: &[usize],
    config: &TrainingConfig,
) -> Result<(f64, Vec<bool>), TrainingError> {
    check_labels(net, labels)?;
    let (logits, cache) = forward_batch(net, Batch::from_rows(inputs))?;
    let n_b = logits.rows as f64;
    let (surrogate, _) = cross_entropy(&logits, labels);
    let total = surrogate
        + config.l2_lambda / (2.0 * n_b) * squared_weight_norm(net)
        + config.slim_lambda * gamma_l1(net);
    Ok((total, cache.relu_pattern()))
}

/// Adam moments, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub t: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            t: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_network(net: &SequentialNetwork) -> Self {
        let shapes: Vec<usize> = parameter_slots(net).iter().map(|s| s.len()).collect();
        Self::new(&shapes)
    }

    /// One Adam update of every tensor in `params`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], config: &TrainingConfig) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient tensor count");
        assert_eq!(params.len(), self.first.len(), "state/parameter tensor count");
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            assert_eq!(p.len(), g.len(), "tensor {k} shape");
            for i in 0..p.len() {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
            }
        }
    }
}

/// Applies one Adam step to every trainable tensor of `net`.
pub fn adam_step(
    net: &mut SequentialNetwork,
    grads: &Gradients,
    state: &mut AdamState,
    config: &TrainingConfig,
) {
    let g = grads.slots();
    let mut p = parameter_slots_mut(net);
    state.step(&mut p, &g, config);
}

/// Fully-connected weights that must stay zero (pruned connections).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMask {
    /// Per node; `None` for non-FC nodes. `true` means the weight is frozen at zero.
    pub frozen: Vec<Option<Vec<bool>>>,
}

impl WeightMask {
    pub fn zeros_of(net: &SequentialNetwork) -> Self {
        Self {
            frozen: net
                .nodes
                .iter()
                .map(|n| match n {
                    LayerNode::FullyConnected(fc) => {
                        Some(fc.weights.data().iter().map(|&w| w == 0.0).collect())
                    }
                    _ => None,
                })
                .collect(),
        }
    }

    pub fn apply(&self, net: &mut SequentialNetwork) {
        for (node, mask) in net.nodes.iter_mut().zip(&self.frozen) {
            if let (LayerNode::FullyConnected(fc), Some(mask)) = (node, mask) {
                for (w, &f) in fc.weights.data_mut().iter_mut().zip(mask) {
                    if f {
                        *w = 0.0;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Batch-averaged losses.
    pub loss: LossBreakdown,
    /// 0–1 empirical risk plus λ times the unsquared regulariser.
    pub objective_01: f64,
    /// `‖w‖₂ / (2 n)` over the training set size `n`.
    pub reg_unsquared: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMetrics {
    pub epochs: Vec<EpochMetrics>,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub misclassified: usize,
    pub total: usize,
}

pub fn evaluate(net: &SequentialNetwork, samples: &[Sample]) -> Result<Evaluation, TrainingError> {
    if samples.is_empty() {
        return Err(TrainingError::NoSamples);
    }
    let mut wrong = 0;
    for s in samples {
        if net.classify(&s.input)? != s.label {
            wrong += 1;
        }
    }
    Ok(Evaluation {
        accuracy: 1.0 - wrong as f64 / samples.len() as f64,
        misclassified: wrong,
        total: samples.len(),
    })
}

/// Splits a shuffled index list into batches of `batch_size`; a trailing
/// singleton is merged into the previous batch when batch norm needs two
/// samples.
fn batches(order: &[usize], batch_size: usize, needs_pairs: bool) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if needs_pairs && out.len() > 1 && out.last().map_or(false, |b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        let last = out.len() - 1;
        out[last] = &order[start..];
    }
    out
}

pub fn train(
    net: &SequentialNetwork,
    dataset: &Dataset,
    config: &TrainingConfig,
) -> Result<(SequentialNetwork, TrainingMetrics), TrainingError> {
    train_masked(net, dataset, config, None)
}

/// Like [`train`], but weights frozen by `mask` are re-zeroed after every step.
pub fn train_masked(
    net: &SequentialNetwork,
    dataset: &Dataset,
    config: &TrainingConfig,
    mask: Option<&WeightMask>,
) -> Result<(SequentialNetwork, TrainingMetrics), TrainingError> {
    config.validate()?;
    net.validate().map_err(NetworkError::Invalid)?;
    if dataset.input_dim != net.input_dim || dataset.num_classes != net.output_dim() {
        return Err(TrainingError::DatasetMismatch {
            dataset: dataset.input_dim,
            classes: dataset.num_classes,
            input: net.input_dim,
            output: net.output_dim(),
        });
    }
    let mut net = net.clone();
    let mut metrics = TrainingMetrics::default();
    if config.epochs == 0 {
        return Ok((net, metrics));
    }
    let train_set = dataset.train();
    let needs_pairs = net.has_batch_norm();
    if train_set.is_empty() || (needs_pairs && train_set.len() < 2) {
        return Err(TrainingError::BatchTooSmall(train_set.len()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = AdamState::for_network(&net);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sums = LossBreakdown::default();
        let groups = batches(&order, config.batch_size, needs_pairs);
        for group in &groups {
            let inputs: Vec<&[f64]> = group.iter().map(|&i| train_set[i].input.as_slice()).collect();
            let labels: Vec<usize> = group.iter().map(|&i| train_set[i].label).collect();
            let (loss, grads, cache) = loss_and_grads_cached(&net, &inputs, &labels, config)?;
            update_running_stats(&mut net, &cache, config.bn_momentum);
            adam_step(&mut net, &grads, &mut state, config);
            if let Some(mask) = mask {
                mask.apply(&mut net);
            }
            sums.total += loss.total;
            sums.surrogate += loss.surrogate;
            sums.l2_term += loss.l2_term;
            sums.slim_term += loss.slim_term;
            metrics.steps += 1;
        }
        let k = groups.len() as f64;
        let loss = LossBreakdown {
            total: sums.total / k,
            surrogate: sums.surrogate / k,
            l2_term: sums.l2_term / k,
            slim_term: sums.slim_term / k,
        };
        let train_eval = evaluate(&net, train_set)?;
        let n = train_set.len() as f64;
        let reg_unsquared = squared_weight_norm(&net).sqrt() / (2.0 * n);
        let test_accuracy = match dataset.test() {
            [] => None,
            test => Some(evaluate(&net, test)?.accuracy),
        };
        metrics.epochs.push(EpochMetrics {
            epoch,
            loss,
            objective_01: train_eval.misclassified as f64 / n + config.l2_lambda * reg_unsquared,
            reg_unsquared,
            train_accuracy: train_eval.accuracy,
            test_accuracy,
        });
    }
    Ok((net, metrics))
}

/// Mean |γ| across all batch-norm nodes; `None` when there are none.
pub fn mean_abs_gamma(net: &SequentialNetwork) -> Option<f64> {
    let (sum, count) = net
        .batch_norms()
        .flat_map(|bn| bn.gamma.data())
        .fold((0.0, 0usize), |(s, c), g| (s + g.abs(), c + 1));
    (count > 0).then(|| sum / count as f64)
}
