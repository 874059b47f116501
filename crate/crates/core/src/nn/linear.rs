use matrixmultiply::dgemm;
use rand::Rng;

use super::tensor::{Param, Tensor};
use super::NnError;

/// `y = x W^T + b` with `W` stored `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::new(Tensor::randn(&[outputs, inputs], (2.0 / inputs as f64).sqrt(), rng)),
            bias: Param::new(Tensor::zeros(&[outputs])),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (b, n_in) = x.dims2()?;
        if n_in != self.inputs() {
            return Err(NnError::ShapeMismatch(format!(
                "linear expects {} inputs, got {n_in}",
                self.inputs()
            )));
        }
        let n_out = self.outputs();
        let mut y = Tensor::zeros(&[b, n_out]);
        for row in y.data_mut().chunks_mut(n_out) {
            row.copy_from_slice(self.bias.value.data());
        }
        // SAFETY: x is (b, n_in), W^T read via strides from (n_out, n_in), y is (b, n_out).
        unsafe {
            dgemm(
                b,
                n_in,
                n_out,
                1.0,
                x.data().as_ptr(),
                n_in as isize,
                1,
                self.weight.value.data().as_ptr(),
                1,
                n_in as isize,
                1.0,
                y.data_mut().as_mut_ptr(),
                n_out as isize,
                1,
            );
        }
        Ok(y)
    }

    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let (b, n_in) = x.dims2()?;
        let n_out = self.outputs();
        if grad_out.shape() != [b, n_out] {
            return Err(NnError::ShapeMismatch(format!(
                "linear grad_out {:?}, expected [{b}, {n_out}]",
                grad_out.shape()
            )));
        }
        let mut gx = Tensor::zeros(&[b, n_in]);
        // SAFETY: all buffers sized to the shapes checked above.
        unsafe {
            // dW (n_out x n_in) += g^T (n_out x b) * x (b x n_in)
            dgemm(
                n_out,
                b,
                n_in,
                1.0,
                grad_out.data().as_ptr(),
                1,
                n_out as isize,
                x.data().as_ptr(),
                n_in as isize,
                1,
                1.0,
                self.weight.grad.data_mut().as_mut_ptr(),
                n_in as isize,
                1,
            );
            // dx (b x n_in) = g (b x n_out) * W (n_out x n_in)
            dgemm(
                b,
                n_out,
                n_in,
                1.0,
                grad_out.data().as_ptr(),
                n_out as isize,
                1,
                self.weight.value.data().as_ptr(),
                n_in as isize,
                1,
                0.0,
                gx.data_mut().as_mut_ptr(),
                n_in as isize,
                1,
            );
        }
        for row in grad_out.data().chunks(n_out) {
            for (g, v) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *g += v;
            }
        }
        Ok(gx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        vec![
            (format!("{prefix}.weight"), &self.weight),
            (format!("{prefix}.bias"), &self.bias),
        ]
    }
}
