//! Convolutional block attention: channel attention from a shared MLP over
//! average- and max-pooled descriptors, then spatial attention from a 7x7
//! convolution over channel-wise mean and max maps.

use rand::Rng;

use super::conv::{Conv2d, ConvGeometry};
use super::linear::Linear;
use super::ops::{kink_distance, relu, relu_backward, sigmoid};
use super::tensor::{Param, Tensor};
use super::NnError;

/// Largest minus second largest; infinite for a single element. A tie at
/// exactly zero also counts as infinite: CBAM sees post-ReLU features, and
/// clamped zeros do not move under small perturbations.
fn top2_gap(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    let mut second = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best.1 {
            second = best.1;
            best = (i, v);
        } else if v > second {
            second = v;
        }
    }
    (best.0, gap_of(best.1, second))
}

fn gap_of(best: f64, second: f64) -> f64 {
    if best == 0.0 && second == 0.0 {
        f64::INFINITY
    } else {
        best - second
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAttention {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct ChannelCache {
    /// Average rows then max rows, `(2B, C)`.
    pooled: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
    argmax: Vec<usize>,
    /// `(B, C)` attention weights.
    pub weights: Tensor,
    pub relu_margin: f64,
    pub max_gap: f64,
}

impl ChannelAttention {
    pub fn new<R: Rng>(channels: usize, reduction: usize, rng: &mut R) -> Result<Self, NnError> {
        if reduction == 0 || channels % reduction != 0 {
            return Err(NnError::BadConfig(format!(
                "reduction {reduction} does not divide {channels} channels"
            )));
        }
        Ok(Self {
            fc1: Linear::new(channels, channels / reduction, rng),
            fc2: Linear::new(channels / reduction, channels, rng),
        })
    }

    /// Weights `sigmoid(MLP(avg(F)) + MLP(max(F)))`, shape `(B, C)`.
    pub fn forward(&self, f: &Tensor) -> Result<ChannelCache, NnError> {
        let (b, c, h, w) = f.dims4()?;
        if c != self.fc1.inputs() {
            return Err(NnError::ShapeMismatch(format!(
                "channel attention built for {} channels, got {c}",
                self.fc1.inputs()
            )));
        }
        let hw = h * w;
        let mut pooled = Tensor::zeros(&[2 * b, c]);
        let mut argmax = vec![0; b * c];
        let mut max_gap = f64::INFINITY;
        for (i, s) in f.data().chunks(hw).enumerate() {
            pooled.data_mut()[i] = s.iter().sum::<f64>() / hw as f64;
            let (idx, gap) = top2_gap(s.iter().copied());
            pooled.data_mut()[b * c + i] = s[idx];
            argmax[i] = idx;
            max_gap = max_gap.min(gap);
        }
        let hidden_pre = self.fc1.forward(&pooled)?;
        let hidden = relu(&hidden_pre);
        let out = self.fc2.forward(&hidden)?;
        let mut weights = Tensor::zeros(&[b, c]);
        for i in 0..b * c {
            weights.data_mut()[i] = sigmoid(out.data()[i] + out.data()[b * c + i]);
        }
        Ok(ChannelCache {
            relu_margin: kink_distance(&hidden_pre),
            pooled,
            hidden_pre,
            hidden,
            argmax,
            weights,
            max_gap,
        })
    }

    /// Backward from the gradient w.r.t. the `(B, C)` weights; returns the
    /// contribution to the gradient w.r.t. `F` through the pooling paths.
    pub fn backward(&mut self, f_shape: &[usize], cache: &ChannelCache, grad_weights: &Tensor) -> Result<Tensor, NnError> {
        let (b, c, h, w) = (f_shape[0], f_shape[1], f_shape[2], f_shape[3]);
        let hw = h * w;
        let mut gout = Tensor::zeros(&[2 * b, c]);
        for i in 0..b * c {
            let a = cache.weights.data()[i];
            let gz = grad_weights.data()[i] * a * (1.0 - a);
            gout.data_mut()[i] = gz;
            gout.data_mut()[b * c + i] = gz;
        }
        let ghidden = self.fc2.backward(&cache.hidden, &gout)?;
        let ghidden_pre = relu_backward(&cache.hidden_pre, &ghidden);
        let gpooled = self.fc1.backward(&cache.pooled, &ghidden_pre)?;
        let mut gf = Tensor::zeros(f_shape);
        for (i, chunk) in gf.data_mut().chunks_mut(hw).enumerate() {
            let ga = gpooled.data()[i] / hw as f64;
            chunk.iter_mut().for_each(|v| *v = ga);
            chunk[cache.argmax[i]] += gpooled.data()[b * c + i];
        }
        Ok(gf)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.fc1.params_mut();
        v.extend(self.fc2.params_mut());
        v
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        let mut v = self.fc1.named_params(&format!("{prefix}.fc1"));
        v.extend(self.fc2.named_params(&format!("{prefix}.fc2")));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialAttention {
    pub conv: Conv2d,
}

#[derive(Debug, Clone)]
pub struct SpatialCache {
    /// `(B, 2, H, W)`: channel mean, channel max.
    stacked: Tensor,
    argmax: Vec<usize>,
    /// `(B, 1, H, W)` attention map.
    pub map: Tensor,
    pub max_gap: f64,
}

impl SpatialAttention {
    pub fn new<R: Rng>(kernel: usize, rng: &mut R) -> Result<Self, NnError> {
        if kernel % 2 == 0 {
            return Err(NnError::BadConfig(format!("spatial kernel {kernel} must be odd")));
        }
        let geometry = ConvGeometry {
            stride: 1,
            padding: kernel / 2,
        };
        let mut conv = Conv2d::new(2, 1, kernel, geometry, true, rng);
        // small start so the map begins near 0.5 everywhere
        conv.weight.value.scale(0.1);
        Ok(Self { conv })
    }

    pub fn forward(&self, f: &Tensor) -> Result<SpatialCache, NnError> {
        let (b, c, h, w) = f.dims4()?;
        let hw = h * w;
        let mut stacked = Tensor::zeros(&[b, 2, h, w]);
        let mut argmax = vec![0; b * hw];
        let mut second = vec![f64::NEG_INFINITY; hw];
        let mut max_gap = f64::INFINITY;
        for bi in 0..b {
            let (mean, max) = stacked.data_mut()[bi * 2 * hw..(bi + 1) * 2 * hw].split_at_mut(hw);
            let am = &mut argmax[bi * hw..(bi + 1) * hw];
            max.fill(f64::NEG_INFINITY);
            second.fill(f64::NEG_INFINITY);
            for ci in 0..c {
                let row = &f.data()[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
                for p in 0..hw {
                    let v = row[p];
                    mean[p] += v;
                    if v > max[p] {
                        second[p] = max[p];
                        max[p] = v;
                        am[p] = ci;
                    } else if v > second[p] {
                        second[p] = v;
                    }
                }
            }
            mean.iter_mut().for_each(|m| *m /= c as f64);
            for p in 0..hw {
                max_gap = max_gap.min(gap_of(max[p], second[p]));
            }
        }
        let mut map = self.conv.forward(&stacked)?;
        map.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        Ok(SpatialCache {
            stacked,
            argmax,
            map,
            max_gap,
        })
    }

    /// Backward from the gradient w.r.t. the `(B, 1, H, W)` map.
    pub fn backward(&mut self, f_shape: &[usize], cache: &SpatialCache, grad_map: &Tensor) -> Result<Tensor, NnError> {
        let (b, c, h, w) = (f_shape[0], f_shape[1], f_shape[2], f_shape[3]);
        let hw = h * w;
        let mut gz = grad_map.clone();
        for (g, m) in gz.data_mut().iter_mut().zip(cache.map.data()) {
            *g *= m * (1.0 - m);
        }
        let gs = self.conv.backward(&cache.stacked, &gz)?;
        let mut gf = Tensor::zeros(f_shape);
        for bi in 0..b {
            let gmean = &gs.data()[bi * 2 * hw..bi * 2 * hw + hw];
            let gmax = &gs.data()[bi * 2 * hw + hw..(bi + 1) * 2 * hw];
            let am = &cache.argmax[bi * hw..(bi + 1) * hw];
            let block = &mut gf.data_mut()[bi * c * hw..(bi + 1) * c * hw];
            for row in block.chunks_mut(hw) {
                for (d, g) in row.iter_mut().zip(gmean) {
                    *d = g / c as f64;
                }
            }
            for p in 0..hw {
                block[am[p] * hw + p] += gmax[p];
            }
        }
        Ok(gf)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.conv.params_mut()
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        self.conv.named_params(&format!("{prefix}.conv"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cbam {
    pub channel: ChannelAttention,
    pub spatial: SpatialAttention,
}

#[derive(Debug, Clone)]
pub struct CbamCache {
    input: Tensor,
    /// After channel attention.
    refined: Tensor,
    pub channel: ChannelCache,
    pub spatial: SpatialCache,
}

impl CbamCache {
    pub fn relu_margin(&self) -> f64 {
        self.channel.relu_margin
    }

    pub fn max_gap(&self) -> f64 {
        self.channel.max_gap.min(self.spatial.max_gap)
    }
}

impl Cbam {
    pub fn new<R: Rng>(channels: usize, reduction: usize, spatial_kernel: usize, rng: &mut R) -> Result<Self, NnError> {
        Ok(Self {
            channel: ChannelAttention::new(channels, reduction, rng)?,
            spatial: SpatialAttention::new(spatial_kernel, rng)?,
        })
    }

    /// `F' = Mc(F) * F`, `F'' = Ms(F') * F'`.
    pub fn forward(&self, f: &Tensor) -> Result<(Tensor, CbamCache), NnError> {
        let (b, c, h, w) = f.dims4()?;
        let hw = h * w;
        let channel = self.channel.forward(f)?;
        let mut refined = f.clone();
        for (chunk, a) in refined.data_mut().chunks_mut(hw).zip(channel.weights.data()) {
            chunk.iter_mut().for_each(|v| *v *= a);
        }
        let spatial = self.spatial.forward(&refined)?;
        let mut out = refined.clone();
        for bi in 0..b {
            let m = &spatial.map.data()[bi * hw..(bi + 1) * hw];
            for ci in 0..c {
                let chunk = &mut out.data_mut()[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
                chunk.iter_mut().zip(m).for_each(|(v, mv)| *v *= mv);
            }
        }
        Ok((
            out,
            CbamCache {
                input: f.clone(),
                refined,
                channel,
                spatial,
            },
        ))
    }

    pub fn backward(&mut self, cache: &CbamCache, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let shape = grad_out.shape().to_vec();
        let (b, c, h, w) = grad_out.dims4()?;
        let hw = h * w;
        // out = map * refined
        let mut grad_refined = grad_out.clone();
        let mut grad_map = Tensor::zeros(&[b, 1, h, w]);
        for bi in 0..b {
            for ci in 0..c {
                let r = (bi * c + ci) * hw;
                for p in 0..hw {
                    let g = grad_out.data()[r + p];
                    grad_map.data_mut()[bi * hw + p] += g * cache.refined.data()[r + p];
                    grad_refined.data_mut()[r + p] = g * cache.spatial.map.data()[bi * hw + p];
                }
            }
        }
        grad_refined.add_assign(&self.spatial.backward(&shape, &cache.spatial, &grad_map)?);
        // refined = weights * input
        let mut grad_in = grad_refined.clone();
        let mut grad_weights = Tensor::zeros(&[b, c]);
        for (i, (gchunk, xchunk)) in grad_in.data_mut().chunks_mut(hw).zip(cache.input.data().chunks(hw)).enumerate() {
            let a = cache.channel.weights.data()[i];
            let mut acc = 0.0;
            for (g, x) in gchunk.iter_mut().zip(xchunk) {
                acc += *g * x;
                *g *= a;
            }
            grad_weights.data_mut()[i] = acc;
        }
        grad_in.add_assign(&self.channel.backward(&shape, &cache.channel, &grad_weights)?);
        Ok(grad_in)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.channel.params_mut();
        v.extend(self.spatial.params_mut());
        v
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        let mut v = self.channel.named_params(&format!("{prefix}.channel"));
        v.extend(self.spatial.named_params(&format!("{prefix}.spatial")));
        v
    }

    /// Zeroes every attention parameter, making both maps 0.5.
    pub fn zero_params(&mut self) {
        for p in self.params_mut() {
            p.value.fill(0.0);
        }
    }
}
