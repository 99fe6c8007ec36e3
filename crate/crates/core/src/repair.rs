//! Counterexample-guided repair: verify, add labeled counterexamples to the
//! training split, retrain, repeat.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{Dataset, DatasetError, Sample};
use crate::network::SequentialNetwork;
use crate::training::{self, TrainingConfig, TrainingError};
use crate::verification::{
    falsify_sample, verify_bab, BabConfig, InputBox, Property, Status, VerificationResult,
    VerifyError,
};

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("invalid repair config: {0}")]
    Config(String),
    #[error("property {index} has no reference label; only robustness properties can be repaired")]
    Unlabeled { index: usize },
    #[error("property {index} has label {label} but the dataset has {classes} classes")]
    LabelRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairConfig {
    pub max_iterations: usize,
    pub trainer: TrainingConfig,
    pub counterexamples_per_property_per_round: usize,
    pub verifier: BabConfig,
    /// Retrain from a fresh seeded initialization instead of the current weights.
    pub from_scratch: bool,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            trainer: TrainingConfig::default(),
            counterexamples_per_property_per_round: 1,
            verifier: BabConfig::default(),
            from_scratch: false,
        }
    }
}

impl RepairConfig {
    pub fn validate(&self) -> Result<(), RepairError> {
        if self.max_iterations == 0 {
            return Err(RepairError::Config("max_iterations must be positive".into()));
        }
        if self.counterexamples_per_property_per_round == 0 {
            return Err(RepairError::Config(
                "counterexamples_per_property_per_round must be positive".into(),
            ));
        }
        self.trainer.validate()?;
        self.verifier.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyStatus {
    pub property: usize,
    pub status: Status,
    pub counterexamples_added: usize,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddedSample {
    pub iteration: usize,
    pub property: usize,
    pub input: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub properties: Vec<PropertyStatus>,
    pub samples_added: usize,
    pub retrained: bool,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub iterations: Vec<IterationReport>,
    /// Statuses of a verification pass on the returned network.
    pub final_statuses: Vec<Status>,
    pub all_verified: bool,
    pub total_samples_added: usize,
    pub added_samples: Vec<AddedSample>,
}

fn label_of(p: &Property, index: usize, classes: usize) -> Result<usize, RepairError> {
    let label = p.label().ok_or(RepairError::Unlabeled { index })?;
    if label >= classes {
        return Err(RepairError::LabelRange { index, label, classes });
    }
    Ok(label)
}

/// Further witnesses near `x`, searched in a box a quarter of the property
/// width around it.
fn extra_witnesses(
    net: &SequentialNetwork,
    p: &Property,
    x: &[f64],
    want: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, VerifyError> {
    let mut found: Vec<Vec<f64>> = Vec::new();
    if want == 0 {
        return Ok(found);
    }
    let b = &p.input_box;
    let near = InputBox {
        lo: (0..b.dim()).map(|i| (x[i] - 0.25 * b.width(i)).max(b.lo[i])).collect(),
        hi: (0..b.dim()).map(|i| (x[i] + 0.25 * b.width(i)).min(b.hi[i])).collect(),
    };
    let local = Property {
        input_box: near,
        ..p.clone()
    };
    for attempt in 0..4 * want as u64 {
        if found.len() == want {
            break;
        }
        if let Some(c) = falsify_sample(net, &local, 64, seed.wrapping_add(attempt))? {
            if c.input != x && !found.contains(&c.input) {
                found.push(c.input);
            }
        }
    }
    Ok(found)
}

fn verify_all(
    net: &SequentialNetwork,
    props: &[Property],
    cfg: &BabConfig,
) -> Result<Vec<VerificationResult>, VerifyError> {
    props.iter().map(|p| verify_bab(net, p, cfg)).collect()
}

/// Runs the repair loop. The dataset's training split grows by exactly
/// `report.total_samples_added` samples.
pub fn repair(
    net: &SequentialNetwork,
    properties: &[Property],
    dataset: &mut Dataset,
    config: &RepairConfig,
) -> Result<(SequentialNetwork, RepairReport), RepairError> {
    config.validate()?;
    let labels: Vec<usize> = properties
        .iter()
        .enumerate()
        .map(|(i, p)| label_of(p, i, dataset.num_classes))
        .collect::<Result<_, _>>()?;

    let mut current = net.clone();
    let mut iterations = Vec::new();
    let mut added_samples = Vec::new();
    // results for `current`, when they are still valid
    let mut last_results: Option<Vec<VerificationResult>> = None;

    for iteration in 0..config.max_iterations {
        let results = verify_all(&current, properties, &config.verifier)?;
        let mut statuses = Vec::with_capacity(properties.len());
        let mut added_now = 0;
        for (i, (p, r)) in properties.iter().zip(&results).enumerate() {
            let mut count = 0;
            if let (Status::Falsified, Some(cex)) = (r.status, &r.counterexample) {
                let extra = extra_witnesses(
                    &current,
                    p,
                    &cex.input,
                    config.counterexamples_per_property_per_round - 1,
                    config.verifier.seed ^ ((iteration as u64) << 32 | i as u64),
                )?;
                for input in std::iter::once(cex.input.clone()).chain(extra) {
                    dataset.add_train_sample(Sample {
                        input: input.clone(),
                        label: labels[i],
                    })?;
                    added_samples.push(AddedSample {
                        iteration,
                        property: i,
                        input,
                        label: labels[i],
                    });
                    count += 1;
                }
            }
            added_now += count;
            statuses.push(PropertyStatus {
                property: i,
                status: r.status,
                counterexamples_added: count,
                reason: r.stats.reason.clone(),
            });
        }

        if results.iter().all(|r| r.status == Status::Verified) {
            iterations.push(IterationReport {
                iteration,
                properties: statuses,
                samples_added: 0,
                retrained: false,
                train_accuracy: None,
                test_accuracy: None,
            });
            last_results = Some(results);
            break;
        }

        let mut trainer = config.trainer.clone();
        trainer.seed = trainer.seed.wrapping_add(iteration as u64);
        let start = if config.from_scratch {
            SequentialNetwork::initialized(
                current.name.clone(),
                current.input_dim,
                &current.hidden_widths(),
                current.output_dim(),
                current.has_batch_norm(),
                trainer.seed,
            )
        } else {
            current.clone()
        };
        current = training::train(&start, dataset, &trainer)?.0;
        let acc = |s: &[Sample]| training::evaluate(&current, s).ok().map(|e| e.accuracy);
        iterations.push(IterationReport {
            iteration,
            properties: statuses,
            samples_added: added_now,
            retrained: true,
            train_accuracy: acc(dataset.train()),
            test_accuracy: acc(dataset.test()),
        });
        last_results = None;
    }

    let final_results = match last_results {
        Some(r) => r,
        None => verify_all(&current, properties, &config.verifier)?,
    };
    let final_statuses: Vec<Status> = final_results.iter().map(|r| r.status).collect();
    let report = RepairReport {
        all_verified: final_statuses.iter().all(|s| *s == Status::Verified),
        final_statuses,
        total_samples_added: added_samples.len(),
        added_samples,
        iterations,
    };
    Ok((current, report))
}
