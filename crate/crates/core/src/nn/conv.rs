//! 2-D cross-correlation via im2col and a GEMM.

use matrixmultiply::dgemm;
use rand::Rng;

use super::tensor::{Param, Tensor};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn output_size(&self, h: usize, w: usize, kh: usize, kw: usize) -> Result<(usize, usize), NnError> {
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if self.stride == 0 || hp < kh || wp < kw {
            return Err(NnError::ShapeMismatch(format!(
                "kernel {kh}x{kw} does not fit {h}x{w} with padding {}",
                self.padding
            )));
        }
        Ok(((hp - kh) / self.stride + 1, (wp - kw) / self.stride + 1))
    }
}

/// `c = a(m x k) * b(k x n)` with the given transposes, row-major storage,
/// `c = alpha * op + beta * c`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    // Stored shapes: a is (m,k) or (k,m) when transposed; b is (k,n) or (n,k).
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths cover the strided ranges described above.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output columns `ox` whose input column `ox*s + kx - p` lies inside `0..w`.
fn valid_range(wo: usize, w: usize, kx: usize, g: ConvGeometry) -> (usize, usize) {
    let (s, p) = (g.stride, g.padding);
    // ox*s + kx >= p
    let lo = if kx >= p { 0 } else { (p - kx).div_ceil(s) };
    // ox*s + kx - p <= w - 1
    let hi = if kx > w - 1 + p { 0 } else { ((w - 1 + p - kx) / s + 1).min(wo) };
    (lo.min(hi), hi)
}

/// Unrolls one image `(C, H, W)` into `(C*kh*kw, Ho*Wo)`.
#[allow(clippy::too_many_arguments)]
fn im2col(x: &[f64], c: usize, h: usize, w: usize, kh: usize, kw: usize, g: ConvGeometry, ho: usize, wo: usize, cols: &mut [f64]) {
    let p = g.padding as isize;
    let s = g.stride;
    let npos = ho * wo;
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * npos;
                let (lo, hi) = valid_range(wo, w, kx, g);
                for oy in 0..ho {
                    let iy = (oy * s + ky) as isize - p;
                    let dst = &mut cols[row + oy * wo..row + (oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                    dst[..lo].fill(0.0);
                    dst[hi..].fill(0.0);
                    if lo < hi {
                        let i0 = lo * s + kx - g.padding;
                        if s == 1 {
                            dst[lo..hi].copy_from_slice(&src[i0..i0 + hi - lo]);
                        } else {
                            for (j, d) in dst[lo..hi].iter_mut().enumerate() {
                                *d = src[i0 + j * s];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `x`.
#[allow(clippy::too_many_arguments)]
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, kh: usize, kw: usize, g: ConvGeometry, ho: usize, wo: usize, x: &mut [f64]) {
    let p = g.padding as isize;
    let s = g.stride;
    let npos = ho * wo;
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * npos;
                let (lo, hi) = valid_range(wo, w, kx, g);
                if lo >= hi {
                    continue;
                }
                let i0 = lo * s + kx - g.padding;
                for oy in 0..ho {
                    let iy = (oy * s + ky) as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                    let src = &cols[row + oy * wo + lo..row + oy * wo + hi];
                    for (j, v) in src.iter().enumerate() {
                        dst[i0 + j * s] += v;
                    }
                }
            }
        }
    }
}

fn check_shapes(x: &Tensor, k: &Tensor, bias: Option<&Tensor>) -> Result<(usize, usize, usize, usize, usize, usize, usize), NnError> {
    let (b, cin, h, w) = x.dims4()?;
    let (cout, kcin, kh, kw) = k.dims4()?;
    if kcin != cin {
        return Err(NnError::ShapeMismatch(format!(
            "conv input has {cin} channels, kernel expects {kcin}"
        )));
    }
    if let Some(bias) = bias {
        if bias.shape() != [cout] {
            return Err(NnError::ShapeMismatch(format!("bias shape {:?}, expected [{cout}]", bias.shape())));
        }
    }
    Ok((b, cin, h, w, cout, kh, kw))
}

pub fn conv2d_forward(x: &Tensor, k: &Tensor, bias: Option<&Tensor>, g: ConvGeometry) -> Result<Tensor, NnError> {
    let (b, cin, h, w, cout, kh, kw) = check_shapes(x, k, bias)?;
    let (ho, wo) = g.output_size(h, w, kh, kw)?;
    let kk = cin * kh * kw;
    let npos = ho * wo;
    let mut out = Tensor::zeros(&[b, cout, ho, wo]);
    let mut cols = vec![0.0; kk * npos];
    let in_per = cin * h * w;
    let out_per = cout * npos;
    for bi in 0..b {
        im2col(&x.data()[bi * in_per..(bi + 1) * in_per], cin, h, w, kh, kw, g, ho, wo, &mut cols);
        let dst = &mut out.data_mut()[bi * out_per..(bi + 1) * out_per];
        if let Some(bias) = bias {
            for (co, chunk) in dst.chunks_mut(npos).enumerate() {
                chunk.fill(bias.data()[co]);
            }
        }
        gemm(cout, kk, npos, k.data(), false, &cols, false, 1.0, dst);
    }
    Ok(out)
}

pub struct ConvGrads {
    pub x: Tensor,
    pub k: Tensor,
    pub bias: Option<Tensor>,
}

/// Gradients of [`conv2d_forward`] given the upstream gradient.
pub fn conv2d_backward(x: &Tensor, k: &Tensor, has_bias: bool, g: ConvGeometry, grad_out: &Tensor) -> Result<ConvGrads, NnError> {
    let (b, cin, h, w, cout, kh, kw) = check_shapes(x, k, None)?;
    let (ho, wo) = g.output_size(h, w, kh, kw)?;
    if grad_out.shape() != [b, cout, ho, wo] {
        return Err(NnError::ShapeMismatch(format!(
            "conv grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [b, cout, ho, wo]
        )));
    }
    let kk = cin * kh * kw;
    let npos = ho * wo;
    let in_per = cin * h * w;
    let out_per = cout * npos;
    let mut gx = Tensor::zeros(x.shape());
    let mut gk = Tensor::zeros(k.shape());
    let mut gb = has_bias.then(|| Tensor::zeros(&[cout]));
    let mut cols = vec![0.0; kk * npos];
    let mut gcols = vec![0.0; kk * npos];
    for bi in 0..b {
        let gy = &grad_out.data()[bi * out_per..(bi + 1) * out_per];
        im2col(&x.data()[bi * in_per..(bi + 1) * in_per], cin, h, w, kh, kw, g, ho, wo, &mut cols);
        // dK += gy (cout x npos) * cols^T (npos x kk)
        gemm(cout, npos, kk, gy, false, &cols, true, 1.0, gk.data_mut());
        // dcols = K^T (kk x cout) * gy (cout x npos)
        gemm(kk, cout, npos, k.data(), true, gy, false, 0.0, &mut gcols);
        col2im(&gcols, cin, h, w, kh, kw, g, ho, wo, &mut gx.data_mut()[bi * in_per..(bi + 1) * in_per]);
        if let Some(gb) = gb.as_mut() {
            for (co, chunk) in gy.chunks(npos).enumerate() {
                gb.data_mut()[co] += chunk.iter().sum::<f64>();
            }
        }
    }
    Ok(ConvGrads { x: gx, k: gk, bias: gb })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub geometry: ConvGeometry,
}

impl Conv2d {
    /// He-normal initialisation; bias (if any) starts at zero.
    pub fn new<R: Rng>(cin: usize, cout: usize, kernel: usize, geometry: ConvGeometry, bias: bool, rng: &mut R) -> Self {
        let fan_in = (cin * kernel * kernel) as f64;
        Self {
            weight: Param::new(Tensor::randn(&[cout, cin, kernel, kernel], (2.0 / fan_in).sqrt(), rng)),
            bias: bias.then(|| Param::new(Tensor::zeros(&[cout]))),
            geometry,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        conv2d_forward(x, &self.weight.value, self.bias.as_ref().map(|b| &b.value), self.geometry)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let g = conv2d_backward(x, &self.weight.value, self.bias.is_some(), self.geometry, grad_out)?;
        self.weight.accumulate(&g.k);
        if let (Some(b), Some(gb)) = (self.bias.as_mut(), g.bias) {
            b.accumulate(&gb);
        }
        Ok(g.x)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.weight];
        if let Some(b) = self.bias.as_mut() {
            v.push(b);
        }
        v
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        let mut v = vec![(format!("{prefix}.weight"), &self.weight)];
        if let Some(b) = self.bias.as_ref() {
            v.push((format!("{prefix}.bias"), b));
        }
        v
    }
}
