//! Central-difference gradient checking for the whole model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::Cbam;
use super::batchnorm::BatchNorm2d;
use super::block::ParmBlock;
use super::conv::{Conv2d, ConvGeometry};
use super::linear::Linear;
use super::model::Model;
use super::ops::cross_entropy;
use super::tensor::{Param, Tensor};
use super::{Mode, NnError};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    /// Perturbation for the central difference.
    pub step: f64,
    /// Use the five-point stencil `(8(f(h) - f(-h)) - (f(2h) - f(-2h))) / 12h`
    /// instead of `(f(h) - f(-h)) / 2h`. Its truncation error is O(h^4),
    /// which allows a larger step and so less rounding noise.
    pub fourth_order: bool,
    pub tolerance: f64,
    /// Denominator floor for the relative error. The difference quotient of
    /// an O(1) loss carries about 1e-12 of rounding noise, so gradients much
    /// below 1e-6 cannot be resolved to 1e-5 relative.
    pub abs_floor: f64,
    /// Inputs are redrawn until every ReLU input and max-pool gap is at
    /// least this far from its kink.
    pub min_kink_margin: f64,
    pub max_resamples: usize,
    /// Also check `d loss / d input`.
    pub check_input: bool,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            fourth_order: true,
            tolerance: 1e-5,
            abs_floor: 1e-6,
            min_kink_margin: 1e-3,
            max_resamples: 50,
            check_input: true,
            seed: 0,
        }
    }
}

impl GradCheckConfig {
    /// Settings for [`check_layers`]. Single layers have few kinks, so inputs
    /// can be held 1e-2 away from them, which permits a 1e-3 step and keeps
    /// rounding noise well under the tighter per-layer tolerance.
    pub fn per_layer() -> Self {
        Self {
            step: 1e-3,
            tolerance: 1e-6,
            min_kink_margin: 1e-2,
            max_resamples: 500,
            abs_floor: 1e-5,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coordinate {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub coordinates: Vec<Coordinate>,
    pub resamples: usize,
    pub kink_margin: f64,
    pub loss: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.coordinates.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }

    /// Maximum relative error recomputed with a different denominator floor.
    pub fn max_rel_error_with_floor(&self, floor: f64) -> f64 {
        self.coordinates
            .iter()
            .map(|c| relative_error(c.analytic, c.numeric, floor))
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Coordinate> {
        self.coordinates.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn failures(&self, tolerance: f64) -> usize {
        self.coordinates.iter().filter(|c| c.rel_error > tolerance).count()
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.failures(tolerance) == 0
    }
}

/// Numerical derivative of `f` at `x0`.
pub fn central_difference<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    x0: f64,
    h: f64,
    fourth_order: bool,
) -> Result<f64, E> {
    let d1 = f(x0 + h)? - f(x0 - h)?;
    if !fourth_order {
        return Ok(d1 / (2.0 * h));
    }
    let d2 = f(x0 + 2.0 * h)? - f(x0 - 2.0 * h)?;
    Ok((8.0 * d1 - d2) / (12.0 * h))
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn loss(model: &Model, x: &Tensor, labels: &[usize]) -> Result<f64, NnError> {
    let (logits, _) = model.forward(x, Mode::Train)?;
    Ok(cross_entropy(&logits, labels)?.0)
}

/// Draws a random input of `shape` and labels, compares the analytic
/// gradient of the mean cross-entropy (batch statistics, as in training)
/// with central differences for every parameter coordinate.
pub fn check_model(model: &Model, shape: [usize; 4], cfg: &GradCheckConfig) -> Result<GradCheckReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_classes = model.config.n_classes;
    let mut resamples = 0;
    let (x, labels, cache, logits) = loop {
        let x = Tensor::randn(&shape, 1.0, &mut rng);
        let labels: Vec<usize> = (0..shape[0]).map(|_| rng.random_range(0..n_classes)).collect();
        let (logits, cache) = model.forward(&x, Mode::Train)?;
        if cache.kink_margin() >= cfg.min_kink_margin || resamples >= cfg.max_resamples {
            break (x, labels, cache, logits);
        }
        resamples += 1;
    };
    let kink_margin = cache.kink_margin();
    let (loss0, grad) = cross_entropy(&logits, &labels)?;

    let mut work = model.clone();
    work.zero_grad();
    let grad_x = work.backward(cache, &grad)?;
    let analytic = work.gradients();
    let names: Vec<String> = work.named_params().into_iter().map(|(n, _)| n).collect();

    let mut coordinates = Vec::new();
    let h = cfg.step;
    for (ti, (name, g)) in names.iter().zip(&analytic).enumerate() {
        for j in 0..g.len() {
            let orig = work.params_mut()[ti].value.data()[j];
            let numeric = central_difference(
                |v| {
                    work.params_mut()[ti].value.data_mut()[j] = v;
                    loss(&work, &x, &labels)
                },
                orig,
                h,
                cfg.fourth_order,
            )?;
            work.params_mut()[ti].value.data_mut()[j] = orig;
            let a = g.data()[j];
            coordinates.push(Coordinate {
                tensor: name.clone(),
                index: j,
                analytic: a,
                numeric,
                rel_error: relative_error(a, numeric, cfg.abs_floor),
            });
        }
    }
    if cfg.check_input {
        let mut xp = x.clone();
        for j in 0..x.len() {
            let orig = x.data()[j];
            let numeric = central_difference(
                |v| {
                    xp.data_mut()[j] = v;
                    loss(&work, &xp, &labels)
                },
                orig,
                h,
                cfg.fourth_order,
            )?;
            xp.data_mut()[j] = orig;
            let a = grad_x.data()[j];
            coordinates.push(Coordinate {
                tensor: "input".into(),
                index: j,
                analytic: a,
                numeric,
                rel_error: relative_error(a, numeric, cfg.abs_floor),
            });
        }
    }
    Ok(GradCheckReport {
        coordinates,
        resamples,
        kink_margin,
        loss: loss0,
    })
}

/// Compares `analytic` with numerical derivatives of `f` around `point`,
/// one coordinate at a time.
pub fn compare_gradient(
    name: &str,
    point: &Tensor,
    analytic: &Tensor,
    mut f: impl FnMut(&Tensor) -> Result<f64, NnError>,
    cfg: &GradCheckConfig,
) -> Result<Vec<Coordinate>, NnError> {
    if point.shape() != analytic.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "{name}: gradient {:?} for point {:?}",
            analytic.shape(),
            point.shape()
        )));
    }
    let mut p = point.clone();
    let mut out = Vec::with_capacity(point.len());
    for j in 0..point.len() {
        let orig = point.data()[j];
        let numeric = central_difference(
            |v| {
                p.data_mut()[j] = v;
                f(&p)
            },
            orig,
            cfg.step,
            cfg.fourth_order,
        )?;
        p.data_mut()[j] = orig;
        let a = analytic.data()[j];
        out.push(Coordinate {
            tensor: name.to_string(),
            index: j,
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric, cfg.abs_floor),
        });
    }
    Ok(out)
}

/// Per-layer result of [`check_layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub coordinates: Vec<Coordinate>,
}

impl LayerCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.coordinates.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Checks a layer with parameters under the projection loss `sum(r * y)`.
/// `forward` returns the output and the kink margin of the pass, `backward`
/// accumulates parameter gradients and returns the input gradient.
fn check_with_params<L: Clone>(
    layer: &'static str,
    base: &L,
    x: &Tensor,
    r: &Tensor,
    forward: impl Fn(&L, &Tensor) -> Result<Tensor, NnError>,
    backward: impl Fn(&mut L, &Tensor, &Tensor) -> Result<Tensor, NnError>,
    params: impl Fn(&mut L) -> Vec<&mut Param>,
    cfg: &GradCheckConfig,
) -> Result<LayerCheck, NnError> {
    let mut work = base.clone();
    for p in params(&mut work) {
        p.zero_grad();
    }
    let gx = backward(&mut work, x, r)?;
    let mut coordinates = compare_gradient(layer, x, &gx, |xp| Ok(dot(&forward(base, xp)?, r)), cfg)?;
    let n = params(&mut work).len();
    for i in 0..n {
        let (value, grad) = {
            let p = &params(&mut work)[i];
            (p.value.clone(), p.grad.clone())
        };
        let mut probe = base.clone();
        let coords = compare_gradient(
            layer,
            &value,
            &grad,
            |v| {
                params(&mut probe)[i].value = v.clone();
                Ok(dot(&forward(&probe, x)?, r))
            },
            cfg,
        )?;
        coordinates.extend(coords);
    }
    Ok(LayerCheck { layer, coordinates })
}

/// Draws inputs until `margin(x)` clears the configured kink margin.
fn draw_clear(
    shape: &[usize],
    rng: &mut ChaCha8Rng,
    cfg: &GradCheckConfig,
    margin: impl Fn(&Tensor) -> Result<f64, NnError>,
) -> Result<Tensor, NnError> {
    let mut x = Tensor::randn(shape, 1.0, rng);
    for _ in 0..cfg.max_resamples {
        if margin(&x)? >= cfg.min_kink_margin {
            break;
        }
        x = Tensor::randn(shape, 1.0, rng);
    }
    Ok(x)
}

/// Gradient checks of each layer on small random shapes: strided padded
/// convolution with bias, linear, batch norm in training mode, CBAM, both
/// residual block orderings (one with a projection skip) and the
/// cross-entropy loss.
pub fn check_layers(cfg: &GradCheckConfig) -> Result<Vec<LayerCheck>, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();

    let g = ConvGeometry { stride: 2, padding: 1 };
    let conv = Conv2d::new(3, 4, 3, g, true, &mut rng);
    let x = Tensor::randn(&[2, 3, 5, 6], 1.0, &mut rng);
    let r = Tensor::randn(&conv.forward(&x)?.shape().to_vec(), 1.0, &mut rng);
    out.push(check_with_params(
        "conv2d",
        &conv,
        &x,
        &r,
        |l, x| l.forward(x),
        |l, x, r| l.backward(x, r),
        |l| l.params_mut(),
        cfg,
    )?);

    let lin = Linear::new(5, 4, &mut rng);
    let x = Tensor::randn(&[3, 5], 1.0, &mut rng);
    let r = Tensor::randn(&[3, 4], 1.0, &mut rng);
    out.push(check_with_params(
        "linear",
        &lin,
        &x,
        &r,
        |l, x| l.forward(x),
        |l, x, r| l.backward(x, r),
        |l| l.params_mut(),
        cfg,
    )?);

    let mut bn = BatchNorm2d::new(3, 0.1, 1e-5);
    bn.gamma.value = Tensor::randn(&[3], 1.0, &mut rng);
    bn.beta.value = Tensor::randn(&[3], 1.0, &mut rng);
    let x = Tensor::randn(&[2, 3, 3, 4], 1.0, &mut rng);
    let r = Tensor::randn(&[2, 3, 3, 4], 1.0, &mut rng);
    out.push(check_with_params(
        "batchnorm2d",
        &bn,
        &x,
        &r,
        |l, x| Ok(l.forward(x, Mode::Train)?.0),
        |l, x, r| {
            let (_, c) = l.forward(x, Mode::Train)?;
            l.backward(&c, r)
        },
        |l| l.params_mut(),
        cfg,
    )?);

    let cbam = Cbam::new(8, 4, 7, &mut rng)?;
    let x = draw_clear(&[2, 8, 4, 5], &mut rng, cfg, |x| {
        let (_, c) = cbam.forward(x)?;
        Ok(c.relu_margin().min(c.max_gap()))
    })?;
    let r = Tensor::randn(&[2, 8, 4, 5], 1.0, &mut rng);
    out.push(check_with_params(
        "cbam",
        &cbam,
        &x,
        &r,
        |l, x| Ok(l.forward(x)?.0),
        |l, x, r| {
            let (_, c) = l.forward(x)?;
            l.backward(&c, r)
        },
        |l| l.params_mut(),
        cfg,
    )?);

    for (layer, cin, cout, pre) in [("parm_block", 4, 4, true), ("post_block_projection", 3, 5, false)] {
        let block = ParmBlock::new(cin, cout, pre, 0.1, 1e-5, &mut rng);
        let x = draw_clear(&[2, cin, 4, 4], &mut rng, cfg, |x| Ok(block.forward(x, Mode::Train)?.1.relu_margin()))?;
        let r = Tensor::randn(&[2, cout, 4, 4], 1.0, &mut rng);
        out.push(check_with_params(
            layer,
            &block,
            &x,
            &r,
            |l, x| Ok(l.forward(x, Mode::Train)?.0),
            |l, x, r| {
                let (_, c) = l.forward(x, Mode::Train)?;
                l.backward(&c, r)
            },
            |l| l.params_mut(),
            cfg,
        )?);
    }

    let logits = Tensor::randn(&[3, 4], 2.0, &mut rng);
    let labels = [2, 0, 3];
    let (_, grad) = cross_entropy(&logits, &labels)?;
    let coordinates = compare_gradient(
        "cross_entropy",
        &logits,
        &grad,
        |z| Ok(cross_entropy(z, &labels)?.0),
        cfg,
    )?;
    out.push(LayerCheck {
        layer: "cross_entropy",
        coordinates,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-6), 0.0);
        assert!((relative_error(2.0, 1.0, 1e-6) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0, 1e-6) - 1e-3).abs() < 1e-15);
        assert_eq!(relative_error(0.0, 0.0, 1e-12), 0.0);
    }

    #[test]
    fn stencils_on_cubic() {
        let f = |x: f64| Ok::<_, ()>(x * x * x);
        let d2 = central_difference(f, 2.0, 1e-3, false).unwrap();
        let d4 = central_difference(f, 2.0, 1e-3, true).unwrap();
        assert!((d2 - 12.0).abs() < 2e-6);
        assert!((d4 - 12.0).abs() < 1e-9);
    }

    #[test]
    fn layers_pass() {
        let cfg = GradCheckConfig::per_layer();
        for l in check_layers(&cfg).unwrap() {
            assert!(l.max_rel_error() < 1e-6, "{}: {:e}", l.layer, l.max_rel_error());
        }
    }

    #[test]
    fn reduced_model_passes() {
        let model = Model::new(ModelConfig::reduced(), 3).unwrap();
        let cfg = GradCheckConfig::default();
        let r = check_model(&model, [2, 8, 4, 5], &cfg).unwrap();
        assert!(r.kink_margin >= cfg.min_kink_margin);
        let w = r.worst().unwrap();
        assert!(r.passed(cfg.tolerance), "worst {w:?}");
    }
}
