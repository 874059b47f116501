use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::NnError;

/// Dense row-major tensor. 4-D tensors are `(B, C, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Normal samples with the given standard deviation.
    pub fn randn<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, std).expect("std must be finite and >= 0");
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(|_| dist.sample(rng)).collect(),
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

    pub fn dims4(&self) -> Result<(usize, usize, usize, usize), NnError> {
        match self.shape[..] {
            [b, c, h, w] => Ok((b, c, h, w)),
            _ => Err(NnError::ShapeMismatch(format!("expected 4-D tensor, got {:?}", self.shape))),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize), NnError> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(NnError::ShapeMismatch(format!("expected 2-D tensor, got {:?}", self.shape))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, NnError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for v in &mut self.data {
            *v *= k;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Fails with `NonFinite` naming `what` if any entry is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<(), NnError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(NnError::NonFinite(format!("{what}[{i}] = {}", self.data[i]))),
        }
    }

    /// Samples `idx` of the batch dimension, in order.
    pub fn select_batch(&self, idx: &[usize]) -> Tensor {
        let per: usize = self.shape[1..].iter().product();
        let mut data = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            data.extend_from_slice(&self.data[i * per..(i + 1) * per]);
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Tensor { shape, data }
    }
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn accumulate(&mut self, g: &Tensor) {
        self.grad.add_assign(g);
    }
}
