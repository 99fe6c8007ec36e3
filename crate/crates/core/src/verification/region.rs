//! Exact decisions on a box by enumerating ReLU activation patterns.
//!
//! Under a fixed pattern every layer is affine in the input, so each
//! pre-activation and output is `a · x + k`. Sign constraints of the
//! pattern, the box and a disjunct's atoms form one LP.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ibp::LayerBounds;
use super::lp::{self, LpOutcome};
use super::{
    concrete_witness, Counterexample, FoldedNetwork, InputBox, LinearAtom, Property, VerifyError,
    WITNESS_TOLERANCE,
};
use crate::network::SequentialNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// pre-activation ≥ 0
    Active,
    /// pre-activation ≤ 0
    Inactive,
    Free,
}

/// One phase per hidden neuron, layer by layer.
pub type ActivationPattern = Vec<Phase>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegionError {
    #[error("LP returned a point that fails concrete re-validation")]
    Spurious,
    #[error("LP undecided: {0}")]
    LpUndecided(String),
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// Rows of `a · x + k`, stored as `[a..., k]`.
type Affine = Vec<Vec<f64>>;

fn input_affine(d: usize) -> Affine {
    (0..d)
        .map(|i| {
            let mut r = vec![0.0; d + 1];
            r[i] = 1.0;
            r
        })
        .collect()
}

fn apply_layer(w: &crate::tensor::Tensor, b: &[f64], h: &Affine, d: usize) -> Affine {
    let cols = w.cols();
    (0..b.len())
        .map(|i| {
            let mut r = vec![0.0; d + 1];
            r[d] = b[i];
            for (j, hj) in h.iter().enumerate().take(cols) {
                let a = w.data()[i * cols + j];
                if a != 0.0 {
                    for (rv, hv) in r.iter_mut().zip(hj) {
                        *rv += a * hv;
                    }
                }
            }
            r
        })
        .collect()
}

/// `a · y ≤ c` rewritten over x for outputs `y`.
fn atom_row(atom: &LinearAtom, y: &Affine, d: usize) -> (Vec<f64>, f64) {
    let mut r = vec![0.0; d + 1];
    for (c, yr) in atom.coeffs.iter().zip(y) {
        if *c != 0.0 {
            for (rv, yv) in r.iter_mut().zip(yr) {
                *rv += c * yv;
            }
        }
    }
    let k = r.pop().expect("d + 1 entries");
    (r, atom.rhs - k)
}

fn box_lower(a: &[f64], b: &InputBox) -> f64 {
    a.iter()
        .zip(b.lo.iter().zip(&b.hi))
        .map(|(c, (l, h))| if *c >= 0.0 { c * l } else { c * h })
        .sum()
}

fn sign_row(pre: &[f64], phase: Phase) -> (Vec<f64>, f64) {
    let d = pre.len() - 1;
    match phase {
        // −(a·x + k) ≤ 0
        Phase::Active => (pre[..d].iter().map(|v| -v).collect(), pre[d]),
        // a·x + k ≤ 0
        _ => (pre[..d].to_vec(), -pre[d]),
    }
}

fn run_lp(rows: &[(Vec<f64>, f64)], b: &InputBox) -> LpOutcome {
    let refs: Vec<(&[f64], f64)> = rows.iter().map(|(a, c)| (a.as_slice(), *c)).collect();
    lp::solve(&refs, &b.lo, &b.hi)
}

/// Looks for an input in `input_box` that follows `pattern` (no Free
/// entries) and satisfies every atom of `disjunct`.
pub fn check_pattern(
    net: &SequentialNetwork,
    input_box: &InputBox,
    pattern: &[Phase],
    disjunct: &[LinearAtom],
) -> Result<Option<Vec<f64>>, RegionError> {
    let folded = FoldedNetwork::new(net)?;
    let d = folded.input_dim;
    if input_box.dim() != d {
        return Err(VerifyError::InputDim { network: d, property: input_box.dim() }.into());
    }
    if pattern.len() != folded.hidden_count() {
        return Err(RegionError::InvalidPattern(format!(
            "{} entries for {} hidden neurons",
            pattern.len(),
            folded.hidden_count()
        )));
    }
    if pattern.contains(&Phase::Free) {
        return Err(RegionError::InvalidPattern("pattern has Free entries".into()));
    }
    if disjunct.iter().any(|a| a.coeffs.len() != folded.output_dim()) {
        return Err(RegionError::InvalidPattern("atom length differs from the output count".into()));
    }
    let mut h = input_affine(d);
    let mut rows = Vec::new();
    let mut k = 0;
    let last = folded.layers.len() - 1;
    for (w, b) in &folded.layers[..last] {
        let pre = apply_layer(w, b, &h, d);
        h = pre
            .iter()
            .map(|r| {
                let phase = pattern[k];
                k += 1;
                rows.push(sign_row(r, phase));
                if phase == Phase::Active { r.clone() } else { vec![0.0; d + 1] }
            })
            .collect();
    }
    let (w, b) = &folded.layers[last];
    let y = apply_layer(w, b, &h, d);
    rows.extend(disjunct.iter().map(|a| atom_row(a, &y, d)));
    match run_lp(&rows, input_box) {
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Undecided(r) => Err(RegionError::LpUndecided(r)),
        LpOutcome::Feasible(x) => {
            let out = net.forward(&x).map_err(VerifyError::from)?;
            if disjunct.iter().all(|a| a.holds(&out, WITNESS_TOLERANCE)) {
                Ok(Some(x))
            } else {
                Err(RegionError::Spurious)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum RegionOutcome {
    Safe,
    Witness(Counterexample),
    Undecided(String),
    OutOfTime,
}

pub(crate) struct RegionSearch<'a> {
    pub net: &'a FoldedNetwork,
    pub original: &'a SequentialNetwork,
    pub property: &'a Property,
    pub deadline: Option<Instant>,
    pub lp_calls: usize,
}

enum Step {
    Done,
    Found(Counterexample),
    Stop,
}

impl RegionSearch<'_> {
    /// Decides the open disjuncts over `b` exactly; `bounds` must be the
    /// interval bounds of `b`.
    pub fn decide(
        &mut self,
        b: &InputBox,
        bounds: &[LayerBounds],
        disjuncts: &[usize],
    ) -> Result<RegionOutcome, VerifyError> {
        let mut st = Dfs {
            b,
            bounds,
            disjuncts,
            d: b.dim(),
            undecided: None,
            out_of_time: false,
        };
        let mut cons = Vec::new();
        let start = input_affine(st.d);
        let step = self.layer(&mut st, 0, start, &mut cons)?;
        Ok(match step {
            Step::Found(c) => RegionOutcome::Witness(c),
            Step::Stop if st.out_of_time => RegionOutcome::OutOfTime,
            _ => match st.undecided {
                Some(r) => RegionOutcome::Undecided(r),
                None => RegionOutcome::Safe,
            },
        })
    }

    fn lp(&mut self, st: &mut Dfs, rows: &[(Vec<f64>, f64)]) -> Option<LpOutcome> {
        if self.deadline.is_some_and(|t| Instant::now() >= t) {
            st.out_of_time = true;
            return None;
        }
        self.lp_calls += 1;
        Some(run_lp(rows, st.b))
    }

    fn layer(
        &mut self,
        st: &mut Dfs,
        layer: usize,
        h: Affine,
        cons: &mut Vec<(Vec<f64>, f64)>,
    ) -> Result<Step, VerifyError> {
        let (w, bias) = &self.net.layers[layer];
        let pre = apply_layer(w, bias, &h, st.d);
        if layer + 1 == self.net.layers.len() {
            return self.leaf(st, &pre, cons);
        }
        let mut post = Vec::with_capacity(pre.len());
        self.neuron(st, layer, 0, &pre, &mut post, cons)
    }

    fn neuron(
        &mut self,
        st: &mut Dfs,
        layer: usize,
        i: usize,
        pre: &Affine,
        post: &mut Affine,
        cons: &mut Vec<(Vec<f64>, f64)>,
    ) -> Result<Step, VerifyError> {
        if i == pre.len() {
            return self.layer(st, layer + 1, post.clone(), cons);
        }
        let lo = st.bounds[layer].pre_lo[i];
        let hi = st.bounds[layer].pre_hi[i];
        let zero = vec![0.0; st.d + 1];
        if lo >= 0.0 || hi <= 0.0 {
            post.push(if lo >= 0.0 { pre[i].clone() } else { zero });
            let r = self.neuron(st, layer, i + 1, pre, post, cons);
            post.pop();
            return r;
        }
        for phase in [Phase::Active, Phase::Inactive] {
            cons.push(sign_row(&pre[i], phase));
            let Some(outcome) = self.lp(st, cons) else {
                cons.pop();
                return Ok(Step::Stop);
            };
            // an undecided LP cannot prune; keep descending
            if outcome != LpOutcome::Infeasible {
                post.push(if phase == Phase::Active { pre[i].clone() } else { zero.clone() });
                let r = self.neuron(st, layer, i + 1, pre, post, cons)?;
                post.pop();
                if !matches!(r, Step::Done) {
                    cons.pop();
                    return Ok(r);
                }
            }
            cons.pop();
        }
        Ok(Step::Done)
    }

    fn leaf(
        &mut self,
        st: &mut Dfs,
        y: &Affine,
        cons: &mut Vec<(Vec<f64>, f64)>,
    ) -> Result<Step, VerifyError> {
        for &di in st.disjuncts {
            let atoms: Vec<(Vec<f64>, f64)> = self.property.violation[di]
                .iter()
                .map(|a| atom_row(a, y, st.d))
                .collect();
            if atoms.iter().any(|(a, c)| box_lower(a, st.b) > *c) {
                continue;
            }
            let base = cons.len();
            cons.extend(atoms);
            let outcome = self.lp(st, cons);
            cons.truncate(base);
            match outcome {
                None => return Ok(Step::Stop),
                Some(LpOutcome::Infeasible) => {}
                Some(LpOutcome::Undecided(r)) => st.undecided = Some(format!("LP undecided: {r}")),
                Some(LpOutcome::Feasible(x)) => {
                    match concrete_witness(self.original, self.property, &x, WITNESS_TOLERANCE)? {
                        Some(c) => return Ok(Step::Found(c)),
                        None => st.undecided = Some("spurious LP solution".into()),
                    }
                }
            }
        }
        Ok(Step::Done)
    }
}

struct Dfs<'a> {
    b: &'a InputBox,
    bounds: &'a [LayerBounds],
    disjuncts: &'a [usize],
    d: usize,
    undecided: Option<String>,
    out_of_time: bool,
}

/// Hidden neurons whose interval pre-activation straddles zero.
pub(crate) fn free_count(bounds: &[LayerBounds]) -> usize {
    bounds[..bounds.len() - 1]
        .iter()
        .map(|l| l.pre_lo.iter().zip(&l.pre_hi).filter(|(lo, hi)| **lo < 0.0 && **hi > 0.0).count())
        .sum()
}
