use super::tensor::{Param, Tensor};
use super::{Mode, NnError};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

/// What backward needs, plus the batch statistics for the running update.
#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    /// Unbiased batch variance.
    pub batch_var: Vec<f64>,
    train: bool,
}

impl BatchNorm2d {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], 1.0)),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            momentum,
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, BnCache), NnError> {
        let (b, c, h, w) = x.dims4()?;
        if c != self.channels() {
            return Err(NnError::ShapeMismatch(format!(
                "batchnorm has {} channels, input has {c}",
                self.channels()
            )));
        }
        let hw = h * w;
        let n = b * hw;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        let mut unbiased = vec![0.0; c];
        match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(NnError::DegenerateBatch(n));
                }
                for bi in 0..b {
                    for ci in 0..c {
                        let s = &x.data()[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
                        mean[ci] += s.iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                for bi in 0..b {
                    for ci in 0..c {
                        let s = &x.data()[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
                        var[ci] += s.iter().map(|v| (v - mean[ci]) * (v - mean[ci])).sum::<f64>();
                    }
                }
                for ci in 0..c {
                    unbiased[ci] = var[ci] / (n - 1) as f64;
                    var[ci] /= n as f64;
                }
            }
            Mode::Eval => {
                mean.copy_from_slice(self.running_mean.data());
                var.copy_from_slice(self.running_var.data());
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        let (g, be) = (self.gamma.value.data(), self.beta.value.data());
        for bi in 0..b {
            for ci in 0..c {
                let r = (bi * c + ci) * hw..(bi * c + ci + 1) * hw;
                for i in r {
                    let xh = (x.data()[i] - mean[ci]) * inv_std[ci];
                    xhat.data_mut()[i] = xh;
                    y.data_mut()[i] = g[ci] * xh + be[ci];
                }
            }
        }
        let cache = BnCache {
            xhat,
            inv_std,
            batch_mean: mean,
            batch_var: unbiased,
            train: mode == Mode::Train,
        };
        Ok((y, cache))
    }

    /// `running = (1 - momentum) * running + momentum * batch`.
    pub fn update_running(&mut self, cache: &BnCache) {
        if !cache.train {
            return;
        }
        let m = self.momentum;
        for (r, v) in self.running_mean.data_mut().iter_mut().zip(&cache.batch_mean) {
            *r = (1.0 - m) * *r + m * v;
        }
        for (r, v) in self.running_var.data_mut().iter_mut().zip(&cache.batch_var) {
            *r = (1.0 - m) * *r + m * v;
        }
    }

    pub fn backward(&mut self, cache: &BnCache, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let (b, c, h, w) = grad_out.dims4()?;
        let hw = h * w;
        let n = (b * hw) as f64;
        let mut gbeta = vec![0.0; c];
        let mut ggamma = vec![0.0; c];
        for bi in 0..b {
            for ci in 0..c {
                let r = (bi * c + ci) * hw..(bi * c + ci + 1) * hw;
                for i in r {
                    gbeta[ci] += grad_out.data()[i];
                    ggamma[ci] += grad_out.data()[i] * cache.xhat.data()[i];
                }
            }
        }
        let gamma = self.gamma.value.data().to_vec();
        let mut gx = Tensor::zeros(grad_out.shape());
        for bi in 0..b {
            for ci in 0..c {
                let r = (bi * c + ci) * hw..(bi * c + ci + 1) * hw;
                let k = gamma[ci] * cache.inv_std[ci];
                for i in r {
                    let gy = grad_out.data()[i];
                    gx.data_mut()[i] = if cache.train {
                        k * (gy - (gbeta[ci] + cache.xhat.data()[i] * ggamma[ci]) / n)
                    } else {
                        k * gy
                    };
                }
            }
        }
        for (p, v) in self.gamma.grad.data_mut().iter_mut().zip(&ggamma) {
            *p += v;
        }
        for (p, v) in self.beta.grad.data_mut().iter_mut().zip(&gbeta) {
            *p += v;
        }
        Ok(gx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        vec![
            (format!("{prefix}.gamma"), &self.gamma),
            (format!("{prefix}.beta"), &self.beta),
        ]
    }

    pub fn named_buffers(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        vec![
            (format!("{prefix}.running_mean"), &self.running_mean),
            (format!("{prefix}.running_var"), &self.running_var),
        ]
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}
