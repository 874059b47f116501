//! Butterworth band-pass design and second-order-section filtering.
//!
//! Design path: analog Butterworth low-pass prototype of order `n`, low-pass
//! to band-pass substitution `s -> (s^2 + w0^2) / (bw * s)` (order `2n`), edge
//! frequencies prewarped, bilinear transform, then grouping of conjugate pole
//! pairs into `n` biquads. Each band-pass biquad carries one zero at `z = 1`
//! and one at `z = -1`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::DspError;

/// Band-pass specification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    /// Order of the analog low-pass prototype; the band-pass has twice this.
    pub prototype_order: usize,
    pub low_cut: f64,
    pub high_cut: f64,
    pub fs: f64,
    /// Treat `prototype_order` as the overall band-pass order and halve it
    /// (rounding down, minimum 1).
    pub order_is_overall: bool,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            prototype_order: 11,
            low_cut: 5.0,
            high_cut: 18.0,
            fs: 250.0,
            order_is_overall: false,
        }
    }
}

impl FilterSpec {
    pub fn effective_prototype_order(&self) -> usize {
        if self.order_is_overall {
            (self.prototype_order / 2).max(1)
        } else {
            self.prototype_order
        }
    }

    pub fn validate(&self) -> Result<(), DspError> {
        let nyquist = self.fs / 2.0;
        if self.prototype_order == 0 {
            return Err(DspError::InvalidSpec("prototype_order must be >= 1".into()));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(DspError::InvalidSpec(format!("fs must be positive, got {}", self.fs)));
        }
        if !(0.0 < self.low_cut && self.low_cut < self.high_cut && self.high_cut < nyquist) {
            return Err(DspError::InvalidSpec(format!(
                "need 0 < low_cut ({}) < high_cut ({}) < fs/2 ({nyquist})",
                self.low_cut, self.high_cut
            )));
        }
        Ok(())
    }
}

/// `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z2) / (1.0 + self.a1 * z_inv + self.a2 * z2)
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }
}

/// Cascade of biquads with an overall gain applied at the input.
#[derive(Debug, Clone, PartialEq)]
pub struct SosCascade {
    pub sections: Vec<Biquad>,
    pub gain: f64,
}

impl SosCascade {
    /// Complex response at `freq` Hz for sample rate `fs`.
    pub fn frequency_response(&self, freq: f64, fs: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq / fs);
        self.sections
            .iter()
            .fold(Complex64::new(self.gain, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude_db(&self, freq: f64, fs: f64) -> f64 {
        20.0 * self.frequency_response(freq, fs).norm().log10()
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.sections
            .iter()
            .flat_map(|s| s.poles())
            .map(|p| p.norm())
            .fold(0.0, f64::max)
    }

    /// Every pole strictly inside the unit circle with margin 1e-9.
    pub fn is_stable(&self) -> bool {
        self.max_pole_radius() < 1.0 - 1e-9
    }

    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }
}

pub fn design_bandpass(spec: &FilterSpec) -> Result<SosCascade, DspError> {
    spec.validate()?;
    let n = spec.effective_prototype_order();
    let fs2 = 2.0 * spec.fs;
    let w1 = fs2 * (PI * spec.low_cut / spec.fs).tan();
    let w2 = fs2 * (PI * spec.high_cut / spec.fs).tan();
    let bw = w2 - w1;
    let w0_sq = w1 * w2;

    // Analog band-pass poles from the prototype's left-half-plane poles.
    let mut analog_poles = Vec::with_capacity(2 * n);
    for k in 0..n {
        let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let pb = p * bw / 2.0;
        let root = (pb * pb - w0_sq).sqrt();
        analog_poles.push(pb + root);
        analog_poles.push(pb - root);
    }

    // Bilinear map. Zeros: n at s = 0 -> z = 1, n at infinity -> z = -1.
    let digital: Vec<Complex64> = analog_poles
        .iter()
        .map(|&p| (fs2 + p) / (fs2 - p))
        .collect();
    // k_analog = bw^n; k_digital = k_analog * prod(fs2 - zeros) / prod(fs2 - poles)
    let mut k = Complex64::new(bw.powi(n as i32) * fs2.powi(n as i32), 0.0);
    for &p in &analog_poles {
        k /= fs2 - p;
    }

    let mut sections: Vec<Biquad> = pair_poles(&digital)
        .into_iter()
        .map(|(a1, a2)| Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1,
            a2,
        })
        .collect();
    // Scale each section to unit gain at the band centre, folding the
    // normalisation into the overall gain.
    let f_center = (spec.low_cut * spec.high_cut).sqrt();
    let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f_center / spec.fs);
    let mut gain = k.re;
    for s in sections.iter_mut() {
        let g = s.response(z_inv).norm();
        s.b0 /= g;
        s.b1 /= g;
        s.b2 /= g;
        gain *= g;
    }
    // Least-damped sections last.
    sections.sort_by(|a, b| a.a2.abs().total_cmp(&b.a2.abs()));
    Ok(SosCascade { sections, gain })
}

/// Groups poles into `(a1, a2)` denominators: conjugate pairs first, then
/// remaining real poles two at a time.
fn pair_poles(poles: &[Complex64]) -> Vec<(f64, f64)> {
    let tol = 1e-10;
    let mut out = Vec::new();
    let mut reals = Vec::new();
    for p in poles {
        if p.im > tol {
            out.push((-2.0 * p.re, p.norm_sqr()));
        } else if p.im.abs() <= tol {
            reals.push(p.re);
        }
    }
    reals.sort_by(f64::total_cmp);
    for pair in reals.chunks(2) {
        match pair {
            [r1, r2] => out.push((-(r1 + r2), r1 * r2)),
            [r] => out.push((-r, 0.0)),
            _ => unreachable!(),
        }
    }
    out
}

/// Per-channel delay state for streaming use.
#[derive(Debug, Clone)]
pub struct SosState {
    state: Vec<[f64; 2]>,
}

impl SosState {
    pub fn new(sos: &SosCascade) -> Self {
        Self {
            state: vec![[0.0; 2]; sos.sections.len()],
        }
    }

    /// Direct-form-II-transposed, one sample.
    #[inline]
    pub fn step(&mut self, sos: &SosCascade, x: f64) -> f64 {
        let mut v = x * sos.gain;
        for (s, st) in sos.sections.iter().zip(self.state.iter_mut()) {
            let y = s.b0 * v + st[0];
            st[0] = s.b1 * v - s.a1 * y + st[1];
            st[1] = s.b2 * v - s.a2 * y;
            v = y;
        }
        v
    }

    pub fn process(&mut self, sos: &SosCascade, input: &[f64]) -> Vec<f64> {
        input.iter().map(|&x| self.step(sos, x)).collect()
    }
}

/// Causal filtering of every row from zero initial state.
pub fn apply_filter(sos: &SosCascade, signal: &[Vec<f64>]) -> Vec<Vec<f64>> {
    signal
        .iter()
        .map(|row| SosState::new(sos).process(sos, row))
        .collect()
}

/// Zero-phase forward-backward filtering with odd-reflection padding at both
/// ends. Magnitude response is squared.
pub fn filtfilt(sos: &SosCascade, signal: &[Vec<f64>]) -> Vec<Vec<f64>> {
    signal
        .iter()
        .map(|row| {
            let n = row.len();
            if n < 2 {
                return row.clone();
            }
            let pad = (3 * (2 * sos.sections.len() + 1)).min(n - 1);
            let mut ext = Vec::with_capacity(n + 2 * pad);
            for i in (1..=pad).rev() {
                ext.push(2.0 * row[0] - row[i]);
            }
            ext.extend_from_slice(row);
            for i in 1..=pad {
                ext.push(2.0 * row[n - 1] - row[n - 1 - i]);
            }
            let mut fwd = SosState::new(sos).process(sos, &ext);
            fwd.reverse();
            let mut back = SosState::new(sos).process(sos, &fwd);
            back.reverse();
            back[pad..pad + n].to_vec()
        })
        .collect()
}
