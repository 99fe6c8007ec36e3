//! Property model, interval bounds and a branch-and-bound decision procedure
//! for fully-connected ReLU networks.
//!
//! Properties are violation-oriented: a property holds (Verified) when no
//! input in its box drives the outputs into any violation disjunct, and it
//! is Falsified only together with a concrete input that does.

pub mod bab;
pub mod ibp;
pub mod lp;
pub mod property;
pub mod region;
pub mod sampling;
pub mod smtlib;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{LayerNode, NetworkError, SequentialNetwork};
use crate::tensor::Tensor;

pub use bab::verify_bab;
pub use ibp::{interval_forward, verify_ibp, verify_ibp_with, LayerBounds};
pub use lp::{lp_feasible, LpOutcome};
pub use property::{robustness_property, InputBox, LinearAtom, Property, PropertySource, VarKind};
pub use region::{check_pattern, ActivationPattern, Phase};
pub use sampling::falsify_sample;
pub use smtlib::{emit_smtlib, parse_smtlib, SmtlibError, MAX_DISJUNCTS};

/// Tolerance used when re-validating a counterexample on the original network.
pub const WITNESS_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("invalid property: {0}")]
    Property(String),
    #[error(transparent)]
    Parse(#[from] SmtlibError),
    #[error("property has {property} inputs but the network takes {network}")]
    InputDim { network: usize, property: usize },
    #[error("property has {property} outputs but the network produces {network}")]
    OutputDim { network: usize, property: usize },
    #[error("invalid verifier config: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Verified,
    Falsified,
    Unknown,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Verified => "verified",
            Status::Falsified => "falsified",
            Status::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    /// Index of the violation disjunct the output satisfies.
    pub disjunct: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes: usize,
    pub lp_calls: usize,
    pub wall_time_secs: f64,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub status: Status,
    pub counterexample: Option<Counterexample>,
    pub stats: SearchStats,
}

impl VerificationResult {
    pub fn verified(stats: SearchStats) -> Self {
        Self {
            status: Status::Verified,
            counterexample: None,
            stats,
        }
    }

    pub fn falsified(cex: Counterexample, stats: SearchStats) -> Self {
        Self {
            status: Status::Falsified,
            counterexample: Some(cex),
            stats,
        }
    }

    pub fn unknown(reason: impl Into<String>, mut stats: SearchStats) -> Self {
        stats.reason = Some(reason.into());
        Self {
            status: Status::Unknown,
            counterexample: None,
            stats,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BabConfig {
    pub max_nodes: usize,
    pub min_box_width: f64,
    /// Largest number of unstable ReLUs decided by pattern enumeration.
    pub enum_threshold: usize,
    /// Wall-clock budget in seconds; `None` means unlimited.
    pub time_budget: Option<f64>,
    pub sample_count: usize,
    pub seed: u64,
}

impl Default for BabConfig {
    fn default() -> Self {
        Self {
            max_nodes: 100_000,
            min_box_width: 1e-6,
            enum_threshold: 12,
            time_budget: None,
            sample_count: 32,
            seed: 0,
        }
    }
}

impl BabConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if self.max_nodes == 0 {
            return Err(VerifyError::Config("max_nodes must be positive".into()));
        }
        if !(self.min_box_width > 0.0 && self.min_box_width.is_finite()) {
            return Err(VerifyError::Config("min_box_width must be positive".into()));
        }
        if let Some(t) = self.time_budget {
            if !(t > 0.0) {
                return Err(VerifyError::Config("time_budget must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Ibp,
    Bab,
}

/// Affine layers of a batch-norm-folded network, with a ReLU between
/// consecutive layers and none after the last.
#[derive(Debug, Clone)]
pub struct FoldedNetwork {
    pub input_dim: usize,
    pub layers: Vec<(Tensor, Vec<f64>)>,
}

impl FoldedNetwork {
    pub fn new(net: &SequentialNetwork) -> Result<Self, VerifyError> {
        let folded = net.fold_batchnorm()?;
        let mut layers = Vec::new();
        for node in &folded.nodes {
            match node {
                LayerNode::FullyConnected(fc) => {
                    layers.push((fc.weights.clone(), fc.bias.data().to_vec()));
                }
                LayerNode::ReLU(_) => {}
                LayerNode::BatchNorm1D(_) => unreachable!("folded"),
            }
        }
        Ok(Self {
            input_dim: folded.input_dim,
            layers,
        })
    }

    pub fn hidden_count(&self) -> usize {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|(_, b)| b.len())
            .sum()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |(_, b)| b.len())
    }
}

pub(crate) fn check_dims(net: &SequentialNetwork, p: &Property) -> Result<(), VerifyError> {
    p.check()?;
    if p.input_dim() != net.input_dim {
        return Err(VerifyError::InputDim {
            network: net.input_dim,
            property: p.input_dim(),
        });
    }
    if p.output_dim != net.output_dim() {
        return Err(VerifyError::OutputDim {
            network: net.output_dim(),
            property: p.output_dim,
        });
    }
    Ok(())
}

/// Evaluates `x` on the original network and returns a counterexample if
/// some disjunct holds within `tol`.
pub(crate) fn concrete_witness(
    net: &SequentialNetwork,
    p: &Property,
    x: &[f64],
    tol: f64,
) -> Result<Option<Counterexample>, VerifyError> {
    let y = net.forward(x)?;
    Ok(p.violated_by(&y, tol).map(|disjunct| Counterexample {
        input: x.to_vec(),
        output: y,
        disjunct,
    }))
}

/// Runs the selected engine.
pub fn verify(
    net: &SequentialNetwork,
    p: &Property,
    engine: Engine,
    config: &BabConfig,
) -> Result<VerificationResult, VerifyError> {
    match engine {
        Engine::Ibp => verify_ibp_with(net, p, config),
        Engine::Bab => verify_bab(net, p, config),
    }
}

/// Number of hidden ReLUs whose interval pre-activation straddles zero over
/// the whole property box.
pub fn root_unstable_count(net: &SequentialNetwork, p: &Property) -> Result<usize, VerifyError> {
    check_dims(net, p)?;
    let bounds = interval_forward(net, &p.input_box)?;
    Ok(bounds[..bounds.len() - 1]
        .iter()
        .map(|l| {
            l.pre_lo
                .iter()
                .zip(&l.pre_hi)
                .filter(|(lo, hi)| **lo < 0.0 && **hi > 0.0)
                .count()
        })
        .sum())
}
