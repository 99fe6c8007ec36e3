use serde::{Deserialize, Serialize};

use super::VerifyError;

/// Closed axis-aligned box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, VerifyError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(VerifyError::Property(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(VerifyError::Property(format!("input {i} is unbounded")));
            }
            if l > h {
                return Err(VerifyError::Property(format!(
                    "input {i} has empty range [{l}, {h}]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn point(x: &[f64]) -> Self {
        Self {
            lo: x.to_vec(),
            hi: x.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| l + 0.5 * (h - l)).collect()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    /// Widest dimension; ties go to the lowest index.
    pub fn widest(&self) -> (usize, f64) {
        (0..self.dim()).fold((0, f64::NEG_INFINITY), |best, i| {
            let w = self.width(i);
            if w > best.1 {
                (i, w)
            } else {
                best
            }
        })
    }

    /// Halves along dimension `i` at its midpoint.
    pub fn bisect(&self, i: usize) -> (InputBox, InputBox) {
        let mid = self.lo[i] + 0.5 * (self.hi[i] - self.lo[i]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[i] = mid;
        right.lo[i] = mid;
        (left, right)
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= l - slack && *v <= h + slack)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }

    pub fn intersect(&self, other: &InputBox) -> Option<InputBox> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        lo.iter().zip(&hi).all(|(l, h)| l <= h).then_some(InputBox { lo, hi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Input,
    Output,
}

/// `coeffs · v ≤ rhs` over input or output variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearAtom {
    pub var: VarKind,
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinearAtom {
    pub fn output(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self {
            var: VarKind::Output,
            coeffs,
            rhs,
        }
    }

    pub fn lhs(&self, v: &[f64]) -> f64 {
        self.coeffs.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn holds(&self, v: &[f64], tol: f64) -> bool {
        self.lhs(v) <= self.rhs + tol
    }

    /// Smallest value of `coeffs · v` over the box `[lo, hi]`.
    pub fn lower_bound(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(a, (l, h))| if *a >= 0.0 { a * l } else { a * h })
            .sum()
    }
}

pub type Disjunct = Vec<LinearAtom>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PropertySource {
    Smtlib,
    Robustness {
        center: Vec<f64>,
        label: usize,
        epsilon: f64,
    },
}

/// Input region plus the violation condition: a disjunction of
/// conjunctions of output atoms. The property is violated iff some input in
/// the box drives the outputs into some disjunct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub input_box: InputBox,
    pub output_dim: usize,
    pub violation: Vec<Disjunct>,
    pub source: PropertySource,
}

impl Property {
    pub fn new(
        input_box: InputBox,
        output_dim: usize,
        violation: Vec<Disjunct>,
        source: PropertySource,
    ) -> Result<Self, VerifyError> {
        let p = Self {
            input_box,
            output_dim,
            violation,
            source,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), VerifyError> {
        InputBox::new(self.input_box.lo.clone(), self.input_box.hi.clone())?;
        if self.output_dim == 0 {
            return Err(VerifyError::Property("no output variables".into()));
        }
        if self.violation.is_empty() {
            return Err(VerifyError::Property("violation condition has no disjunct".into()));
        }
        for (i, d) in self.violation.iter().enumerate() {
            if d.is_empty() {
                return Err(VerifyError::Property(format!("disjunct {i} is empty")));
            }
            for atom in d {
                if atom.var != VarKind::Output {
                    return Err(VerifyError::Property(format!(
                        "disjunct {i} constrains input variables"
                    )));
                }
                if atom.coeffs.len() != self.output_dim {
                    return Err(VerifyError::Property(format!(
                        "disjunct {i} has {} coefficients for {} outputs",
                        atom.coeffs.len(),
                        self.output_dim
                    )));
                }
                if atom.coeffs.iter().all(|&c| c == 0.0) {
                    return Err(VerifyError::Property(format!(
                        "disjunct {i} has an all-zero atom"
                    )));
                }
                if !atom.rhs.is_finite() || atom.coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(VerifyError::Property(format!(
                        "disjunct {i} has a non-finite coefficient"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_box.dim()
    }

    /// First disjunct whose atoms all hold for output `y`.
    pub fn violated_by(&self, y: &[f64], tol: f64) -> Option<usize> {
        self.violation
            .iter()
            .position(|d| d.iter().all(|a| a.holds(y, tol)))
    }

    /// Reference label for robustness properties.
    pub fn label(&self) -> Option<usize> {
        match self.source {
            PropertySource::Robustness { label, .. } => Some(label),
            PropertySource::Smtlib => None,
        }
    }

    /// Same box and the same set of disjuncts, ignoring atom and disjunct
    /// order and the source tag.
    pub fn semantically_equal(&self, other: &Property) -> bool {
        fn key(d: &Disjunct) -> Vec<Vec<u64>> {
            let mut atoms: Vec<Vec<u64>> = d
                .iter()
                .map(|a| {
                    let mut k: Vec<u64> = a.coeffs.iter().map(|c| (c + 0.0).to_bits()).collect();
                    k.push((a.rhs + 0.0).to_bits());
                    k
                })
                .collect();
            atoms.sort();
            atoms.dedup();
            atoms
        }
        let bits = |v: &[f64]| v.iter().map(|x| (x + 0.0).to_bits()).collect::<Vec<_>>();
        if self.output_dim != other.output_dim
            || bits(&self.input_box.lo) != bits(&other.input_box.lo)
            || bits(&self.input_box.hi) != bits(&other.input_box.hi)
        {
            return false;
        }
        let mut a: Vec<_> = self.violation.iter().map(key).collect();
        let mut b: Vec<_> = other.violation.iter().map(key).collect();
        a.sort();
        a.dedup();
        b.sort();
        b.dedup();
        a == b
    }
}

/// L∞ ball of radius `epsilon` around `x0`, clipped to `domain`, whose
/// violation is "some other class scores at least as high as `label`".
pub fn robustness_property(
    x0: &[f64],
    label: usize,
    num_classes: usize,
    epsilon: f64,
    domain: &InputBox,
) -> Result<Property, VerifyError> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(VerifyError::Property(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    if label >= num_classes {
        return Err(VerifyError::Property(format!(
            "label {label} out of range for {num_classes} classes"
        )));
    }
    if num_classes < 2 {
        return Err(VerifyError::Property("robustness needs at least two classes".into()));
    }
    if !domain.contains(x0, 0.0) {
        return Err(VerifyError::Property("x0 lies outside the input domain".into()));
    }
    let lo = x0
        .iter()
        .zip(&domain.lo)
        .map(|(x, l)| (x - epsilon).max(*l))
        .collect();
    let hi = x0
        .iter()
        .zip(&domain.hi)
        .map(|(x, h)| (x + epsilon).min(*h))
        .collect();
    let violation = (0..num_classes)
        .filter(|&j| j != label)
        .map(|j| {
            let mut coeffs = vec![0.0; num_classes];
            coeffs[label] = 1.0;
            coeffs[j] = -1.0;
            vec![LinearAtom::output(coeffs, 0.0)]
        })
        .collect();
    Property::new(
        InputBox::new(lo, hi)?,
        num_classes,
        violation,
        PropertySource::Robustness {
            center: x0.to_vec(),
            label,
            epsilon,
        },
    )
}
