//! Dense `f64` tensors and the handful of kernels the rest of the crate is
//! built from.
//!
//! Layout is row-major. A weight matrix of shape `[out, in]` stores the
//! weight from input `j` to output neuron `i` at `data[i * in + j]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op} at index {index}")]
    NonFinite { op: &'static str, index: usize },
    #[error("invalid shape {shape:?} for {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("argmax of an empty vector")]
    Empty,
}

/// Dense tensor with an explicit shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || expected != data.len() {
            return Err(TensorError::InvalidShape {
                shape,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "new", index });
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            shape: vec![n, n],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() > 1 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }
}

fn check_finite(op: &'static str, values: &[f64]) -> Result<(), TensorError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(TensorError::NonFinite { op, index }),
        None => Ok(()),
    }
}

/// `W·x + b` for a row-major `rows × cols` matrix given as a flat slice.
pub fn affine_raw(
    weights: &[f64],
    rows: usize,
    cols: usize,
    x: &[f64],
    bias: &[f64],
) -> Result<Vec<f64>, TensorError> {
    if weights.len() != rows * cols {
        return Err(TensorError::ShapeMismatch {
            op: "affine",
            detail: format!("weights hold {} entries, expected {rows}x{cols}", weights.len()),
        });
    }
    if x.len() != cols {
        return Err(TensorError::ShapeMismatch {
            op: "affine",
            detail: format!("matrix has {cols} columns but input has length {}", x.len()),
        });
    }
    if bias.len() != rows {
        return Err(TensorError::ShapeMismatch {
            op: "affine",
            detail: format!("matrix has {rows} rows but bias has length {}", bias.len()),
        });
    }
    let out: Vec<f64> = weights
        .chunks_exact(cols)
        .zip(bias)
        .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect();
    check_finite("affine", &out)?;
    Ok(out)
}

/// `W·x + b` with `W` a 2-D tensor.
pub fn affine(w: &Tensor, x: &[f64], b: &[f64]) -> Result<Vec<f64>, TensorError> {
    if w.shape().len() != 2 {
        return Err(TensorError::ShapeMismatch {
            op: "affine",
            detail: format!("weights must be 2-D, got shape {:?}", w.shape()),
        });
    }
    affine_raw(w.data(), w.rows(), w.cols(), x, b)
}

/// Elementwise `scale ⊙ x + shift`.
pub fn scale_shift(scale: &[f64], shift: &[f64], x: &[f64]) -> Result<Vec<f64>, TensorError> {
    if scale.len() != x.len() || shift.len() != x.len() {
        return Err(TensorError::ShapeMismatch {
            op: "scale_shift",
            detail: format!(
                "scale {}, shift {}, input {}",
                scale.len(),
                shift.len(),
                x.len()
            ),
        });
    }
    let out: Vec<f64> = x
        .iter()
        .zip(scale.iter().zip(shift))
        .map(|(v, (s, t))| s * v + t)
        .collect();
    check_finite("scale_shift", &out)?;
    Ok(out)
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn relu_in_place(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(x: &[f64]) -> Result<usize, TensorError> {
    let mut best = *x.first().ok_or(TensorError::Empty)?;
    let mut idx = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            idx = i;
        }
    }
    Ok(idx)
}
