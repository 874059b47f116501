//! The classifier: conv stem, then per stage a channel-changing conv, CBAM
//! and residual blocks, then global average pooling and a two-layer head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::{Cbam, CbamCache};
use super::batchnorm::{BatchNorm2d, BnCache};
use super::block::{BlockCache, ParmBlock};
use super::conv::{Conv2d, ConvGeometry};
use super::linear::Linear;
use super::ops::{global_avg_pool, global_avg_pool_backward, kink_distance, relu, relu_backward, softmax};
use super::tensor::{Param, Tensor};
use super::{Mode, NnError};
use crate::kv::{self, KvDoc};

const SAME3: ConvGeometry = ConvGeometry { stride: 1, padding: 1 };

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub stem_channels: usize,
    /// `(out_channels, residual blocks)` per stage.
    pub stages: Vec<(usize, usize)>,
    pub cbam_enabled: bool,
    pub cbam_reduction: usize,
    pub preactivation: bool,
    pub spatial_kernel: usize,
    pub fc_hidden: usize,
    pub n_classes: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 8,
            stem_channels: 32,
            stages: vec![(32, 1), (64, 1)],
            cbam_enabled: true,
            cbam_reduction: 8,
            preactivation: true,
            spatial_kernel: 7,
            fc_hidden: 128,
            n_classes: 4,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

pub fn format_stages(stages: &[(usize, usize)]) -> String {
    kv::join(stages.iter().map(|(c, n)| format!("{c}x{n}")))
}

pub fn parse_stages(s: &str) -> Result<Vec<(usize, usize)>, NnError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let err = || NnError::BadConfig(format!("stage `{t}` is not CHANNELSxBLOCKS"));
            let (c, n) = t.split_once('x').ok_or_else(err)?;
            Ok((c.parse().map_err(|_| err())?, n.parse().map_err(|_| err())?))
        })
        .collect()
}

impl ModelConfig {
    /// The small configuration used for whole-model gradient checks.
    pub fn reduced() -> Self {
        Self {
            stem_channels: 4,
            stages: vec![(4, 1)],
            cbam_reduction: 2,
            fc_hidden: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::BadConfig(m));
        if self.in_channels == 0 || self.stem_channels == 0 || self.fc_hidden == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.stages.is_empty() {
            return bad("at least one stage is required".into());
        }
        if self.n_classes < 2 {
            return bad(format!("n_classes must be >= 2, got {}", self.n_classes));
        }
        if self.spatial_kernel % 2 == 0 {
            return bad(format!("spatial_kernel must be odd, got {}", self.spatial_kernel));
        }
        for &(c, _) in &self.stages {
            if c == 0 {
                return bad("stage channels must be positive".into());
            }
            if self.cbam_enabled && (self.cbam_reduction == 0 || c % self.cbam_reduction != 0) {
                return bad(format!("cbam_reduction {} does not divide stage width {c}", self.cbam_reduction));
            }
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0 && self.bn_eps > 0.0) {
            return bad("bn_momentum must be in (0, 1] and bn_eps > 0".into());
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::new();
        d.set("in_channels", self.in_channels);
        d.set("stem_channels", self.stem_channels);
        d.set("stages", format_stages(&self.stages));
        d.set("cbam_enabled", self.cbam_enabled);
        d.set("cbam_reduction", self.cbam_reduction);
        d.set("preactivation", self.preactivation);
        d.set("spatial_kernel", self.spatial_kernel);
        d.set("fc_hidden", self.fc_hidden);
        d.set("n_classes", self.n_classes);
        d.set("bn_momentum", self.bn_momentum);
        d.set("bn_eps", self.bn_eps);
        d
    }

    pub fn from_kv(d: &KvDoc) -> Result<Self, NnError> {
        let cfg = Self {
            in_channels: d.parse_value("in_channels")?,
            stem_channels: d.parse_value("stem_channels")?,
            stages: parse_stages(d.require("stages")?)?,
            cbam_enabled: d.parse_value("cbam_enabled")?,
            cbam_reduction: d.parse_value("cbam_reduction")?,
            preactivation: d.parse_value("preactivation")?,
            spatial_kernel: d.parse_value("spatial_kernel")?,
            fc_hidden: d.parse_value("fc_hidden")?,
            n_classes: d.parse_value("n_classes")?,
            bn_momentum: d.parse_value("bn_momentum")?,
            bn_eps: d.parse_value("bn_eps")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    pub cbam: Option<Cbam>,
    pub blocks: Vec<ParmBlock>,
}

#[derive(Debug, Clone)]
struct StageCache {
    input: Tensor,
    pre: Tensor,
    bn: BnCache,
    cbam: Option<CbamCache>,
    blocks: Vec<BlockCache>,
}

/// Activations saved by a forward pass. [`Model::backward`] takes it by value.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Tensor,
    stem_pre: Tensor,
    stem_bn: BnCache,
    stages: Vec<StageCache>,
    final_bn: Option<(Tensor, BnCache)>,
    pooled_shape: Vec<usize>,
    pooled: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
    pub mode: Mode,
}

impl ForwardCache {
    /// Smallest distance of any ReLU input from zero and of any max-pool
    /// winner from the runner-up. Finite differences are only trustworthy
    /// when both exceed the perturbation's effect.
    pub fn kink_margin(&self) -> f64 {
        let mut m = kink_distance(&self.stem_pre).min(kink_distance(&self.hidden_pre));
        for s in &self.stages {
            m = m.min(kink_distance(&s.pre));
            if let Some(c) = &s.cbam {
                m = m.min(c.relu_margin()).min(c.max_gap());
            }
            for b in &s.blocks {
                m = m.min(b.relu_margin());
            }
        }
        if let Some((pre, _)) = &self.final_bn {
            m = m.min(kink_distance(pre));
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub stem: Conv2d,
    pub stem_bn: BatchNorm2d,
    pub stages: Vec<Stage>,
    /// Pre-activation networks end with BN-ReLU before pooling.
    pub final_bn: Option<BatchNorm2d>,
    pub fc1: Linear,
    pub fc2: Linear,
    grad_fault: f64,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, e) = (config.bn_momentum, config.bn_eps);
        let stem = Conv2d::new(config.in_channels, config.stem_channels, 3, SAME3, false, &mut rng);
        let stem_bn = BatchNorm2d::new(config.stem_channels, m, e);
        let mut width = config.stem_channels;
        let mut stages = Vec::new();
        for &(out, n_blocks) in &config.stages {
            let conv = Conv2d::new(width, out, 3, SAME3, false, &mut rng);
            let bn = BatchNorm2d::new(out, m, e);
            let cbam = if config.cbam_enabled {
                Some(Cbam::new(out, config.cbam_reduction, config.spatial_kernel, &mut rng)?)
            } else {
                None
            };
            let blocks = (0..n_blocks)
                .map(|_| ParmBlock::new(out, out, config.preactivation, m, e, &mut rng))
                .collect();
            stages.push(Stage { conv, bn, cbam, blocks });
            width = out;
        }
        let final_bn = config.preactivation.then(|| BatchNorm2d::new(width, m, e));
        let fc1 = Linear::new(width, config.fc_hidden, &mut rng);
        let mut fc2 = Linear::new(config.fc_hidden, config.n_classes, &mut rng);
        fc2.weight.value.scale(0.1);
        Ok(Self {
            config,
            stem,
            stem_bn,
            stages,
            final_bn,
            fc1,
            fc2,
            grad_fault: 1.0,
        })
    }

    /// Multiplies the stem convolution's weight gradient by `scale` on every
    /// backward pass. Only for checking that the gradient check notices.
    pub fn set_backward_fault(&mut self, scale: f64) {
        self.grad_fault = scale;
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, ForwardCache), NnError> {
        let (_, c, _, _) = x.dims4()?;
        if c != self.config.in_channels {
            return Err(NnError::ShapeMismatch(format!(
                "model expects {} input channels, got {c}",
                self.config.in_channels
            )));
        }
        x.check_finite("input")?;
        let h = self.stem.forward(x)?;
        let (stem_pre, stem_bn) = self.stem_bn.forward(&h, mode)?;
        let mut r = relu(&stem_pre);
        let mut stage_caches = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let input = r;
            let c = stage.conv.forward(&input)?;
            let (pre, bn) = stage.bn.forward(&c, mode)?;
            r = relu(&pre);
            let cbam = match &stage.cbam {
                Some(cb) => {
                    let (out, cache) = cb.forward(&r)?;
                    r = out;
                    Some(cache)
                }
                None => None,
            };
            let mut blocks = Vec::with_capacity(stage.blocks.len());
            for b in &stage.blocks {
                let (out, cache) = b.forward(&r, mode)?;
                r = out;
                blocks.push(cache);
            }
            stage_caches.push(StageCache {
                input,
                pre,
                bn,
                cbam,
                blocks,
            });
        }
        let final_bn = match &self.final_bn {
            Some(bn) => {
                let (pre, cache) = bn.forward(&r, mode)?;
                r = relu(&pre);
                Some((pre, cache))
            }
            None => None,
        };
        let pooled = global_avg_pool(&r)?;
        let hidden_pre = self.fc1.forward(&pooled)?;
        let hidden = relu(&hidden_pre);
        let logits = self.fc2.forward(&hidden)?;
        logits.check_finite("logits")?;
        let cache = ForwardCache {
            input: x.clone(),
            stem_pre,
            stem_bn,
            stages: stage_caches,
            final_bn,
            pooled_shape: r.shape().to_vec(),
            pooled,
            hidden_pre,
            hidden,
            mode,
        };
        Ok((logits, cache))
    }

    /// Eval-mode logits.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.forward(x, Mode::Eval)?.0)
    }

    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor, NnError> {
        softmax(&self.predict(x)?)
    }

    /// Train-mode forward that also folds the batch statistics into the
    /// running averages.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, ForwardCache), NnError> {
        let (logits, cache) = self.forward(x, Mode::Train)?;
        self.update_running(&cache);
        Ok((logits, cache))
    }

    fn update_running(&mut self, cache: &ForwardCache) {
        self.stem_bn.update_running(&cache.stem_bn);
        for (stage, sc) in self.stages.iter_mut().zip(&cache.stages) {
            stage.bn.update_running(&sc.bn);
            for (b, bc) in stage.blocks.iter_mut().zip(&sc.blocks) {
                b.update_running(bc);
            }
        }
        if let (Some(bn), Some((_, c))) = (self.final_bn.as_mut(), cache.final_bn.as_ref()) {
            bn.update_running(c);
        }
    }

    /// Accumulates parameter gradients for `d loss / d logits` and returns
    /// the gradient w.r.t. the input.
    pub fn backward(&mut self, cache: ForwardCache, grad_logits: &Tensor) -> Result<Tensor, NnError> {
        let g_hidden = self.fc2.backward(&cache.hidden, grad_logits)?;
        let g_hidden_pre = relu_backward(&cache.hidden_pre, &g_hidden);
        let g_pooled = self.fc1.backward(&cache.pooled, &g_hidden_pre)?;
        let mut g = global_avg_pool_backward(&g_pooled, &cache.pooled_shape);
        if let (Some(bn), Some((pre, c))) = (self.final_bn.as_mut(), cache.final_bn.as_ref()) {
            g = bn.backward(c, &relu_backward(pre, &g))?;
        }
        for (stage, sc) in self.stages.iter_mut().zip(&cache.stages).rev() {
            for (b, bc) in stage.blocks.iter_mut().zip(&sc.blocks).rev() {
                g = b.backward(bc, &g)?;
            }
            if let (Some(cb), Some(cc)) = (stage.cbam.as_mut(), sc.cbam.as_ref()) {
                g = cb.backward(cc, &g)?;
            }
            let g_pre = relu_backward(&sc.pre, &g);
            let g_c = stage.bn.backward(&sc.bn, &g_pre)?;
            g = stage.conv.backward(&sc.input, &g_c)?;
        }
        let g_pre = relu_backward(&cache.stem_pre, &g);
        let g_h = self.stem_bn.backward(&cache.stem_bn, &g_pre)?;
        let before = (self.grad_fault != 1.0).then(|| self.stem.weight.grad.clone());
        let gx = self.stem.backward(&cache.input, &g_h)?;
        if let Some(before) = before {
            let k = self.grad_fault;
            for (g, b) in self.stem.weight.grad.data_mut().iter_mut().zip(before.data()) {
                *g = b + (*g - b) * k;
            }
        }
        Ok(gx)
    }

    /// Parameters in their canonical order (the order of [`Self::named_params`]).
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.stem.params_mut();
        v.extend(self.stem_bn.params_mut());
        for s in &mut self.stages {
            v.extend(s.conv.params_mut());
            v.extend(s.bn.params_mut());
            if let Some(cb) = s.cbam.as_mut() {
                v.extend(cb.params_mut());
            }
            for b in &mut s.blocks {
                v.extend(b.params_mut());
            }
        }
        if let Some(bn) = self.final_bn.as_mut() {
            v.extend(bn.params_mut());
        }
        v.extend(self.fc1.params_mut());
        v.extend(self.fc2.params_mut());
        v
    }

    pub fn named_params(&self) -> Vec<(String, &Param)> {
        let mut v = self.stem.named_params("stem");
        v.extend(self.stem_bn.named_params("stem_bn"));
        for (i, s) in self.stages.iter().enumerate() {
            v.extend(s.conv.named_params(&format!("stage{i}.conv")));
            v.extend(s.bn.named_params(&format!("stage{i}.bn")));
            if let Some(cb) = s.cbam.as_ref() {
                v.extend(cb.named_params(&format!("stage{i}.cbam")));
            }
            for (j, b) in s.blocks.iter().enumerate() {
                v.extend(b.named_params(&format!("stage{i}.block{j}")));
            }
        }
        if let Some(bn) = self.final_bn.as_ref() {
            v.extend(bn.named_params("final_bn"));
        }
        v.extend(self.fc1.named_params("fc1"));
        v.extend(self.fc2.named_params("fc2"));
        v
    }

    /// BatchNorm running statistics, canonical order.
    pub fn named_buffers(&self) -> Vec<(String, &Tensor)> {
        let mut v = self.stem_bn.named_buffers("stem_bn");
        for (i, s) in self.stages.iter().enumerate() {
            v.extend(s.bn.named_buffers(&format!("stage{i}.bn")));
            for (j, b) in s.blocks.iter().enumerate() {
                v.extend(b.named_buffers(&format!("stage{i}.block{j}")));
            }
        }
        if let Some(bn) = self.final_bn.as_ref() {
            v.extend(bn.named_buffers("final_bn"));
        }
        v
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.stem_bn.buffers_mut();
        for s in &mut self.stages {
            v.extend(s.bn.buffers_mut());
            for b in &mut s.blocks {
                v.extend(b.buffers_mut());
            }
        }
        if let Some(bn) = self.final_bn.as_mut() {
            v.extend(bn.buffers_mut());
        }
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn n_params(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.value.len()).sum()
    }

    /// Copies of every gradient, canonical order.
    pub fn gradients(&self) -> Vec<Tensor> {
        self.named_params().into_iter().map(|(_, p)| p.grad.clone()).collect()
    }
}
