//! Layered network representation with inference-mode semantics.
//!
//! A network is a list of nodes. Hidden blocks are `FC → BN → ReLU` (or
//! `FC → ReLU` once batch norm has been folded away) and the list always
//! ends with a bare fully-connected output layer.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{self, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq)]
pub struct FullyConnectedNode {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out_dim, in_dim]`, rows are output neurons.
    pub weights: Tensor,
    pub bias: Tensor,
}

impl FullyConnectedNode {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, TensorError> {
        Ok(Self {
            in_dim,
            out_dim,
            weights: Tensor::matrix(out_dim, in_dim, weights)?,
            bias: Tensor::vector(bias)?,
        })
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights.data()[row * self.in_dim + col]
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, TensorError> {
        tensor::affine_raw(
            self.weights.data(),
            self.out_dim,
            self.in_dim,
            x,
            self.bias.data(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1DNode {
    pub dim: usize,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
}

impl BatchNorm1DNode {
    pub fn new(
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
        eps: f64,
    ) -> Result<Self, TensorError> {
        Ok(Self {
            dim: gamma.len(),
            gamma: Tensor::vector(gamma)?,
            beta: Tensor::vector(beta)?,
            running_mean: Tensor::vector(running_mean)?,
            running_var: Tensor::vector(running_var)?,
            eps,
        })
    }

    /// Identity-initialised node: γ=1, β=0, running stats (0, 1).
    pub fn identity(dim: usize, eps: f64) -> Self {
        Self {
            dim,
            gamma: Tensor::vector(vec![1.0; dim]).expect("nonempty"),
            beta: Tensor::zeros(vec![dim]),
            running_mean: Tensor::zeros(vec![dim]),
            running_var: Tensor::vector(vec![1.0; dim]).expect("nonempty"),
            eps,
        }
    }

    /// Per-neuron inference scale `γ / √(σ + ε)`.
    pub fn inference_scale(&self) -> Vec<f64> {
        self.gamma
            .data()
            .iter()
            .zip(self.running_var.data())
            .map(|(g, v)| g / (v + self.eps).sqrt())
            .collect()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, TensorError> {
        if x.len() != self.dim {
            return Err(TensorError::ShapeMismatch {
                op: "batch_norm",
                detail: format!("node has dim {} but input has length {}", self.dim, x.len()),
            });
        }
        let centered: Vec<f64> = x
            .iter()
            .zip(self.running_mean.data())
            .map(|(v, m)| v - m)
            .collect();
        tensor::scale_shift(&self.inference_scale(), self.beta.data(), &centered)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReLUNode {
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerNode {
    FullyConnected(FullyConnectedNode),
    BatchNorm1D(BatchNorm1DNode),
    ReLU(ReLUNode),
}

impl LayerNode {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerNode::FullyConnected(_) => "fully_connected",
            LayerNode::BatchNorm1D(_) => "batch_norm_1d",
            LayerNode::ReLU(_) => "relu",
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            LayerNode::FullyConnected(fc) => fc.in_dim,
            LayerNode::BatchNorm1D(bn) => bn.dim,
            LayerNode::ReLU(r) => r.dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            LayerNode::FullyConnected(fc) => fc.out_dim,
            LayerNode::BatchNorm1D(bn) => bn.dim,
            LayerNode::ReLU(r) => r.dim,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            LayerNode::FullyConnected(fc) => fc.weights.len() + fc.bias.len(),
            LayerNode::BatchNorm1D(bn) => 4 * bn.dim,
            LayerNode::ReLU(_) => 0,
        }
    }
}

/// One structural problem found by [`SequentialNetwork::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralError {
    pub node: Option<usize>,
    pub message: String,
}

impl fmt::Display for StructuralError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(i) => write!(f, "node {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("invalid network: {}", join_errors(.0))]
    Invalid(Vec<StructuralError>),
    #[error("input has length {got}, network expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("node {node} ({kind}): {source}")]
    Node {
        node: usize,
        kind: &'static str,
        #[source]
        source: TensorError,
    },
}

fn join_errors(errors: &[StructuralError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkStats {
    /// Layer count including the input layer.
    pub num_layers: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Input width followed by every fully-connected output width.
    pub widths: Vec<usize>,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialNetwork {
    pub name: String,
    pub input_dim: usize,
    pub nodes: Vec<LayerNode>,
}

impl SequentialNetwork {
    pub fn new(name: impl Into<String>, input_dim: usize, nodes: Vec<LayerNode>) -> Self {
        Self {
            name: name.into(),
            input_dim,
            nodes,
        }
    }

    /// Builds and validates in one step.
    pub fn try_new(
        name: impl Into<String>,
        input_dim: usize,
        nodes: Vec<LayerNode>,
    ) -> Result<Self, NetworkError> {
        let net = Self::new(name, input_dim, nodes);
        net.validate().map_err(NetworkError::Invalid)?;
        Ok(net)
    }

    /// Glorot-uniform weights, zero biases, identity batch norm.
    pub fn initialized(
        name: impl Into<String>,
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        batch_norm: bool,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = Vec::new();
        let mut prev = input_dim;
        let widths = hidden.iter().copied().chain(std::iter::once(output_dim));
        let last = hidden.len();
        for (i, width) in widths.enumerate() {
            let limit = (6.0 / (prev + width) as f64).sqrt();
            let weights = (0..prev * width)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            let fc = FullyConnectedNode::new(prev, width, weights, vec![0.0; width])
                .expect("positive dims");
            nodes.push(LayerNode::FullyConnected(fc));
            if i < last {
                if batch_norm {
                    nodes.push(LayerNode::BatchNorm1D(BatchNorm1DNode::identity(width, 1e-5)));
                }
                nodes.push(LayerNode::ReLU(ReLUNode { dim: width }));
            }
            prev = width;
        }
        Self::new(name, input_dim, nodes)
    }

    pub fn output_dim(&self) -> usize {
        self.nodes.last().map_or(self.input_dim, LayerNode::out_dim)
    }

    pub fn has_batch_norm(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n, LayerNode::BatchNorm1D(_)))
    }

    pub fn fully_connected(&self) -> impl Iterator<Item = &FullyConnectedNode> {
        self.nodes.iter().filter_map(|n| match n {
            LayerNode::FullyConnected(fc) => Some(fc),
            _ => None,
        })
    }

    pub fn batch_norms(&self) -> impl Iterator<Item = &BatchNorm1DNode> {
        self.nodes.iter().filter_map(|n| match n {
            LayerNode::BatchNorm1D(bn) => Some(bn),
            _ => None,
        })
    }

    /// Checks every structural invariant and reports all violations.
    pub fn validate(&self) -> Result<(), Vec<StructuralError>> {
        let mut errors = Vec::new();
        let mut err = |node: Option<usize>, message: String| {
            errors.push(StructuralError { node, message })
        };

        if self.input_dim == 0 {
            err(None, "input_dim must be positive".into());
        }
        if self.nodes.is_empty() {
            err(None, "network has no nodes".into());
        }

        let mut prev_out = self.input_dim;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.in_dim() == 0 || node.out_dim() == 0 {
                err(Some(i), "dimensions must be positive".into());
            }
            if node.in_dim() != prev_out {
                err(
                    Some(i),
                    format!(
                        "dim mismatch at node {i}: expects {} inputs, previous layer provides {prev_out}",
                        node.in_dim()
                    ),
                );
            }
            prev_out = node.out_dim();
            match node {
                LayerNode::FullyConnected(fc) => {
                    if fc.weights.shape() != [fc.out_dim, fc.in_dim] {
                        err(
                            Some(i),
                            format!(
                                "weights have shape {:?}, declared {}x{}",
                                fc.weights.shape(),
                                fc.out_dim,
                                fc.in_dim
                            ),
                        );
                    }
                    if fc.bias.shape() != [fc.out_dim] {
                        err(
                            Some(i),
                            format!("bias has shape {:?}, declared {}", fc.bias.shape(), fc.out_dim),
                        );
                    }
                    if !all_finite(fc.weights.data()) || !all_finite(fc.bias.data()) {
                        err(Some(i), "non-finite parameter".into());
                    }
                }
                LayerNode::BatchNorm1D(bn) => {
                    for (label, t) in [
                        ("gamma", &bn.gamma),
                        ("beta", &bn.beta),
                        ("running_mean", &bn.running_mean),
                        ("running_var", &bn.running_var),
                    ] {
                        if t.shape() != [bn.dim] {
                            err(
                                Some(i),
                                format!("{label} has shape {:?}, declared {}", t.shape(), bn.dim),
                            );
                        }
                        if !all_finite(t.data()) {
                            err(Some(i), format!("non-finite {label}"));
                        }
                    }
                    if !(bn.eps >= 0.0 && bn.eps.is_finite()) {
                        err(Some(i), format!("eps must be a nonnegative real, got {}", bn.eps));
                    }
                    if let Some(j) = bn.running_var.data().iter().position(|&v| v < 0.0) {
                        err(Some(i), format!("running_var[{j}] is negative"));
                    } else if let Some(j) =
                        bn.running_var.data().iter().position(|&v| v + bn.eps <= 0.0)
                    {
                        err(Some(i), format!("running_var[{j}] + eps must be positive"));
                    }
                }
                LayerNode::ReLU(_) => {}
            }
        }

        check_block_pattern(&self.nodes, &mut err);

        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        if x.len() != self.input_dim {
            return Err(NetworkError::InputDim {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut h = x.to_vec();
        for (i, node) in self.nodes.iter().enumerate() {
            let wrap = |source| NetworkError::Node {
                node: i,
                kind: node.kind(),
                source,
            };
            h = match node {
                LayerNode::FullyConnected(fc) => fc.apply(&h).map_err(wrap)?,
                LayerNode::BatchNorm1D(bn) => bn.apply(&h).map_err(wrap)?,
                LayerNode::ReLU(_) => tensor::relu(&h),
            };
        }
        Ok(h)
    }

    pub fn classify(&self, x: &[f64]) -> Result<usize, NetworkError> {
        let y = self.forward(x)?;
        Ok(tensor::argmax(&y).expect("output_dim is positive"))
    }

    /// Merges each batch-norm node into the fully-connected node before it.
    pub fn fold_batchnorm(&self) -> Result<SequentialNetwork, NetworkError> {
        self.validate().map_err(NetworkError::Invalid)?;
        let mut nodes: Vec<LayerNode> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            match node {
                LayerNode::BatchNorm1D(bn) => {
                    let Some(LayerNode::FullyConnected(fc)) = nodes.last_mut() else {
                        unreachable!("validated: batch norm always follows a fully-connected node");
                    };
                    let scale = bn.inference_scale();
                    let cols = fc.in_dim;
                    for (i, s) in scale.iter().enumerate() {
                        for w in &mut fc.weights.data_mut()[i * cols..(i + 1) * cols] {
                            *w *= s;
                        }
                    }
                    let bias = fc.bias.data_mut();
                    for i in 0..bn.dim {
                        bias[i] = scale[i] * (bias[i] - bn.running_mean.data()[i])
                            + bn.beta.data()[i];
                    }
                }
                other => nodes.push(other.clone()),
            }
        }
        Ok(SequentialNetwork::new(self.name.clone(), self.input_dim, nodes))
    }

    pub fn stats(&self) -> NetworkStats {
        let mut widths = vec![self.input_dim];
        widths.extend(self.fully_connected().map(|fc| fc.out_dim));
        NetworkStats {
            num_layers: widths.len(),
            input_dim: self.input_dim,
            output_dim: self.output_dim(),
            widths,
            param_count: self.nodes.iter().map(LayerNode::param_count).sum(),
        }
    }

    /// Widths of the hidden layers only.
    pub fn hidden_widths(&self) -> Vec<usize> {
        let w = self.stats().widths;
        w[1..w.len() - 1].to_vec()
    }
}

fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// Hidden blocks are `FC BN ReLU` or `FC ReLU`; the last node is a bare FC.
fn check_block_pattern(nodes: &[LayerNode], err: &mut impl FnMut(Option<usize>, String)) {
    let mut i = 0;
    while i < nodes.len() {
        if !matches!(nodes[i], LayerNode::FullyConnected(_)) {
            err(
                Some(i),
                format!(
                    "non-canonical form: expected fully_connected to start a block, found {}",
                    nodes[i].kind()
                ),
            );
            return;
        }
        if i + 1 == nodes.len() {
            return;
        }
        let mut j = i + 1;
        if matches!(nodes[j], LayerNode::BatchNorm1D(_)) {
            j += 1;
        }
        match nodes.get(j) {
            Some(LayerNode::ReLU(_)) => {
                if j + 1 == nodes.len() {
                    err(
                        Some(j),
                        "non-canonical form: network ends in relu; the output layer must be a bare fully_connected"
                            .into(),
                    );
                    return;
                }
                i = j + 1;
            }
            Some(other) => {
                err(
                    Some(j),
                    format!("non-canonical form: expected relu, found {}", other.kind()),
                );
                return;
            }
            None => {
                err(
                    Some(j - 1),
                    "non-canonical form: network ends in batch_norm_1d; the output layer must be a bare fully_connected"
                        .into(),
                );
                return;
            }
        }
    }
}
