//! Residual block in pre-activation (BN-ReLU-conv-BN-ReLU-conv + skip) or
//! post-activation (conv-BN-ReLU-conv-BN, add, ReLU) order.

use rand::Rng;

use super::batchnorm::{BatchNorm2d, BnCache};
use super::conv::{Conv2d, ConvGeometry};
use super::ops::{kink_distance, relu, relu_backward};
use super::tensor::{Param, Tensor};
use super::{Mode, NnError};

const SAME3: ConvGeometry = ConvGeometry { stride: 1, padding: 1 };
const POINT: ConvGeometry = ConvGeometry { stride: 1, padding: 0 };

#[derive(Debug, Clone, PartialEq)]
pub struct ParmBlock {
    pub bn1: BatchNorm2d,
    pub conv1: Conv2d,
    pub bn2: BatchNorm2d,
    pub conv2: Conv2d,
    /// 1x1 projection on the skip path when channel counts differ.
    pub proj: Option<Conv2d>,
    pub preactivation: bool,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    input: Tensor,
    a1: Tensor,
    r1: Tensor,
    bn1: BnCache,
    a2: Tensor,
    r2: Tensor,
    bn2: BnCache,
    /// Post-activation only: the sum before the final ReLU.
    sum: Option<Tensor>,
}

impl BlockCache {
    pub fn relu_margin(&self) -> f64 {
        let m = kink_distance(&self.a1).min(kink_distance(&self.a2));
        self.sum.as_ref().map_or(m, |s| m.min(kink_distance(s)))
    }

    pub fn bn_caches(&self) -> [&BnCache; 2] {
        [&self.bn1, &self.bn2]
    }
}

impl ParmBlock {
    pub fn new<R: Rng>(cin: usize, cout: usize, preactivation: bool, bn_momentum: f64, bn_eps: f64, rng: &mut R) -> Self {
        // In pre-activation order bn1 sees the block input, otherwise conv1's output.
        let bn1_ch = if preactivation { cin } else { cout };
        Self {
            bn1: BatchNorm2d::new(bn1_ch, bn_momentum, bn_eps),
            conv1: Conv2d::new(cin, cout, 3, SAME3, false, rng),
            bn2: BatchNorm2d::new(cout, bn_momentum, bn_eps),
            conv2: Conv2d::new(cout, cout, 3, SAME3, false, rng),
            proj: (cin != cout).then(|| Conv2d::new(cin, cout, 1, POINT, false, rng)),
            preactivation,
        }
    }

    fn skip(&self, x: &Tensor) -> Result<Tensor, NnError> {
        match &self.proj {
            Some(p) => p.forward(x),
            None => Ok(x.clone()),
        }
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, BlockCache), NnError> {
        if self.preactivation {
            let (a1, bn1) = self.bn1.forward(x, mode)?;
            let r1 = relu(&a1);
            let c1 = self.conv1.forward(&r1)?;
            let (a2, bn2) = self.bn2.forward(&c1, mode)?;
            let r2 = relu(&a2);
            let mut out = self.conv2.forward(&r2)?;
            out.add_assign(&self.skip(x)?);
            let cache = BlockCache {
                input: x.clone(),
                a1,
                r1,
                bn1,
                a2,
                r2,
                bn2,
                sum: None,
            };
            Ok((out, cache))
        } else {
            let c1 = self.conv1.forward(x)?;
            let (a1, bn1) = self.bn1.forward(&c1, mode)?;
            let r1 = relu(&a1);
            let c2 = self.conv2.forward(&r1)?;
            let (a2, bn2) = self.bn2.forward(&c2, mode)?;
            let mut sum = a2.clone();
            sum.add_assign(&self.skip(x)?);
            let out = relu(&sum);
            let cache = BlockCache {
                input: x.clone(),
                a1,
                r1,
                bn1,
                a2,
                r2: Tensor::zeros(&[0]),
                bn2,
                sum: Some(sum),
            };
            Ok((out, cache))
        }
    }

    pub fn backward(&mut self, cache: &BlockCache, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let x = &cache.input;
        let (branch_grad, mut gx) = if self.preactivation {
            let g_r2 = self.conv2.backward(&cache.r2, grad_out)?;
            let g_a2 = relu_backward(&cache.a2, &g_r2);
            let g_c1 = self.bn2.backward(&cache.bn2, &g_a2)?;
            let g_r1 = self.conv1.backward(&cache.r1, &g_c1)?;
            let g_a1 = relu_backward(&cache.a1, &g_r1);
            let g_x = self.bn1.backward(&cache.bn1, &g_a1)?;
            (grad_out.clone(), g_x)
        } else {
            let sum = cache.sum.as_ref().expect("post-activation cache has sum");
            let g_sum = relu_backward(sum, grad_out);
            let g_c2 = self.bn2.backward(&cache.bn2, &g_sum)?;
            let g_r1 = self.conv2.backward(&cache.r1, &g_c2)?;
            let g_a1 = relu_backward(&cache.a1, &g_r1);
            let g_c1 = self.bn1.backward(&cache.bn1, &g_a1)?;
            let g_x = self.conv1.backward(x, &g_c1)?;
            (g_sum, g_x)
        };
        // skip path
        match self.proj.as_mut() {
            Some(p) => gx.add_assign(&p.backward(x, &branch_grad)?),
            None => {
                for (g, s) in gx.data_mut().iter_mut().zip(branch_grad.data()) {
                    // s + g (not g + s) keeps the skip gradient bit-exact when g is +0
                    *g = s + *g;
                }
            }
        }
        Ok(gx)
    }

    pub fn update_running(&mut self, cache: &BlockCache) {
        self.bn1.update_running(&cache.bn1);
        self.bn2.update_running(&cache.bn2);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.bn1.params_mut();
        v.extend(self.conv1.params_mut());
        v.extend(self.bn2.params_mut());
        v.extend(self.conv2.params_mut());
        if let Some(p) = self.proj.as_mut() {
            v.extend(p.params_mut());
        }
        v
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        let mut v = self.bn1.named_params(&format!("{prefix}.bn1"));
        v.extend(self.conv1.named_params(&format!("{prefix}.conv1")));
        v.extend(self.bn2.named_params(&format!("{prefix}.bn2")));
        v.extend(self.conv2.named_params(&format!("{prefix}.conv2")));
        if let Some(p) = self.proj.as_ref() {
            v.extend(p.named_params(&format!("{prefix}.proj")));
        }
        v
    }

    pub fn named_buffers(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut v = self.bn1.named_buffers(&format!("{prefix}.bn1"));
        v.extend(self.bn2.named_buffers(&format!("{prefix}.bn2")));
        v
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.bn1.buffers_mut();
        v.extend(self.bn2.buffers_mut());
        v
    }
}
