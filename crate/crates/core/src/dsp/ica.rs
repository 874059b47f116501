//! FastICA with the `tanh` contrast and symmetric decorrelation, plus
//! kurtosis/template based removal of artifact components.
//!
//! Fitting centres the data, whitens it with the eigendecomposition of the
//! covariance, then iterates
//!
//! ```text
//! W+ = E{g(WZ) Z^T} - diag(E{g'(WZ)}) W,   W <- (W+ W+^T)^(-1/2) W+
//! ```
//!
//! until `max_i |1 - |<w_i+, w_i>|| < tol`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::DspError;

/// Minimum samples per channel for a fit.
pub const MIN_SAMPLES_PER_CHANNEL: usize = 50;
/// Covariance eigenvalues below this fraction of the largest are rank loss.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-4,
            seed: 0,
        }
    }
}

/// A fitted decomposition: `sources = unmixing * whitening * (x - mean)` and
/// `x = mixing * sources + mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct IcaModel {
    pub mean: DVector<f64>,
    pub whitening: DMatrix<f64>,
    pub unmixing: DMatrix<f64>,
    pub mixing: DMatrix<f64>,
    /// False when `max_iter` ran out; the model then holds the best iterate seen.
    pub converged: bool,
    pub iterations: usize,
}

impl IcaModel {
    pub fn n_components(&self) -> usize {
        self.unmixing.nrows()
    }

    /// Full unmixing matrix `unmixing * whitening`.
    pub fn separating_matrix(&self) -> DMatrix<f64> {
        &self.unmixing * &self.whitening
    }

    pub fn sources(&self, data: &[Vec<f64>]) -> DMatrix<f64> {
        let mut x = to_matrix(data);
        for (mut row, m) in x.row_iter_mut().zip(self.mean.iter()) {
            row.add_scalar_mut(-m);
        }
        self.separating_matrix() * x
    }

    pub fn reconstruct(&self, sources: &DMatrix<f64>) -> Vec<Vec<f64>> {
        let mut x = &self.mixing * sources;
        for (mut row, m) in x.row_iter_mut().zip(self.mean.iter()) {
            row.add_scalar_mut(*m);
        }
        from_matrix(&x)
    }
}

pub(crate) fn to_matrix(data: &[Vec<f64>]) -> DMatrix<f64> {
    let rows = data.len();
    let cols = data.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, cols, |r, c| data[r][c])
}

pub(crate) fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// `(W W^T)^(-1/2) W`
fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|d| 1.0 / d.max(f64::MIN_POSITIVE).sqrt()));
    &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}

pub fn fit_ica(data: &[Vec<f64>], cfg: &IcaConfig) -> Result<IcaModel, DspError> {
    let c = data.len();
    let n = data.first().map_or(0, Vec::len);
    if c == 0 || n < c * MIN_SAMPLES_PER_CHANNEL {
        return Err(DspError::TooFewSamples {
            needed: c.max(1) * MIN_SAMPLES_PER_CHANNEL,
            got: n,
        });
    }

    let mut x = to_matrix(data);
    let mean = DVector::from_iterator(c, x.row_iter().map(|r| r.sum() / n as f64));
    for (mut row, m) in x.row_iter_mut().zip(mean.iter()) {
        row.add_scalar_mut(-m);
    }

    let cov = &x * x.transpose() / n as f64;
    let eig = SymmetricEigen::new(cov);
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    if !(max_ev > 0.0) || min_ev < RANK_TOLERANCE * max_ev {
        return Err(DspError::RankDeficient {
            min_eigenvalue: min_ev,
            max_eigenvalue: max_ev,
        });
    }
    let whitening = DMatrix::from_diagonal(&eig.eigenvalues.map(|d| 1.0 / d.sqrt()))
        * eig.eigenvectors.transpose();
    let z = &whitening * &x;
    let zt = z.transpose();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = DMatrix::from_fn(c, c, |_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init);
    let mut best = (f64::INFINITY, w.clone());
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let mut g = &w * &z;
        let mut g_prime_mean = DVector::zeros(c);
        for (r, mut row) in g.row_iter_mut().enumerate() {
            let mut acc = 0.0;
            for v in row.iter_mut() {
                let t = v.tanh();
                *v = t;
                acc += 1.0 - t * t;
            }
            g_prime_mean[r] = acc / n as f64;
        }
        let mut w_next = &g * &zt / n as f64;
        for r in 0..c {
            let scale = g_prime_mean[r];
            for col in 0..c {
                w_next[(r, col)] -= scale * w[(r, col)];
            }
        }
        let w_next = symmetric_decorrelation(&w_next);
        let change = (&w_next * w.transpose())
            .diagonal()
            .iter()
            .map(|d| (d.abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = w_next;
        if change < best.0 {
            best = (change, w.clone());
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        w = best.1;
    }

    let separating = &w * &whitening;
    let mixing = separating
        .clone()
        .try_inverse()
        .or_else(|| separating.pseudo_inverse(1e-12).ok())
        .ok_or(DspError::RankDeficient {
            min_eigenvalue: 0.0,
            max_eigenvalue: max_ev,
        })?;
    Ok(IcaModel {
        mean,
        whitening,
        unmixing: w,
        mixing,
        converged,
        iterations,
    })
}

/// Rules for flagging components as artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactPolicy {
    /// Flag when excess kurtosis exceeds this.
    pub kurtosis_threshold: f64,
    /// Optional reference waveform (same length as the data).
    pub template: Option<Vec<f64>>,
    /// Flag when `|corr(source, template)|` exceeds this.
    pub template_threshold: f64,
}

impl Default for ArtifactPolicy {
    fn default() -> Self {
        Self {
            kurtosis_threshold: 5.0,
            template: None,
            template_threshold: 0.7,
        }
    }
}

pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (m2, m4) = x.iter().fold((0.0, 0.0), |(m2, m4), v| {
        let d = (v - mean) * (v - mean);
        (m2 + d, m4 + d * d)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 <= 0.0 {
        return 0.0;
    }
    m4 / (m2 * m2) - 3.0
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (da, db) = (a[i] - ma, b[i] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Indices of components the policy flags on `data`.
pub fn flag_components(model: &IcaModel, data: &[Vec<f64>], policy: &ArtifactPolicy) -> Vec<usize> {
    let sources = model.sources(data);
    sources
        .row_iter()
        .enumerate()
        .filter_map(|(i, row)| {
            let s: Vec<f64> = row.iter().copied().collect();
            let spiky = excess_kurtosis(&s) > policy.kurtosis_threshold;
            let matches = policy
                .template
                .as_ref()
                .is_some_and(|t| correlation(&s, t).abs() > policy.template_threshold);
            (spiky || matches).then_some(i)
        })
        .collect()
}

/// Zeroes the listed sources and remixes.
pub fn remove_components(model: &IcaModel, data: &[Vec<f64>], remove: &[usize]) -> Vec<Vec<f64>> {
    let mut sources = model.sources(data);
    for &i in remove {
        if i < sources.nrows() {
            sources.row_mut(i).fill(0.0);
        }
    }
    model.reconstruct(&sources)
}

pub fn remove_artifact_components(
    model: &IcaModel,
    data: &[Vec<f64>],
    policy: &ArtifactPolicy,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let flagged = flag_components(model, data, policy);
    (remove_components(model, data, &flagged), flagged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mixed(n: usize, seed: u64) -> (Vec<Vec<f64>>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sources: Vec<Vec<f64>> = (0..4)
            .map(|k| {
                (0..n)
                    .map(|i| {
                        let t = i as f64 / 250.0;
                        match k {
                            0 => (2.0 * PI * 3.0 * t).sin(),
                            1 => ((2.0 * PI * 0.7 * t).sin() * 4.0).signum(),
                            2 => (t * 1.3 % 1.0) * 2.0 - 1.0,
                            _ => StandardNormal.sample(&mut rng),
                        }
                    })
                    .collect()
            })
            .collect();
        let a = DMatrix::from_fn(4, 4, |_, _| StandardNormal.sample(&mut rng));
        (from_matrix(&(&a * to_matrix(&sources))), a)
    }

    #[test]
    fn whitening_is_white() {
        let (x, _) = mixed(4000, 1);
        let m = fit_ica(&x, &IcaConfig::default()).unwrap();
        let mut xc = to_matrix(&x);
        for (mut row, mu) in xc.row_iter_mut().zip(m.mean.iter()) {
            row.add_scalar_mut(-mu);
        }
        let z = &m.whitening * xc;
        let cov = &z * z.transpose() / 4000.0;
        assert!((cov - DMatrix::identity(4, 4)).amax() < 1e-6);
    }

    #[test]
    fn model_invariants() {
        let (x, _) = mixed(4000, 2);
        let m = fit_ica(&x, &IcaConfig::default()).unwrap();
        let gram = &m.unmixing * m.unmixing.transpose();
        assert!((gram - DMatrix::identity(4, 4)).amax() < 1e-6);
        assert!((&m.mixing * m.separating_matrix() - DMatrix::identity(4, 4)).amax() < 1e-6);
    }

    #[test]
    fn reconstruction_identity() {
        let (x, _) = mixed(3000, 3);
        let m = fit_ica(&x, &IcaConfig::default()).unwrap();
        let y = remove_components(&m, &x, &[]);
        let scale = x.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        let err = x.iter().flatten().zip(y.iter().flatten()).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        assert!(err < 1e-6 * scale);
    }

    #[test]
    fn remove_all_leaves_mean() {
        let (x, _) = mixed(3000, 4);
        let m = fit_ica(&x, &IcaConfig::default()).unwrap();
        let y = remove_components(&m, &x, &[0, 1, 2, 3]);
        for (row, mu) in y.iter().zip(m.mean.iter()) {
            assert!(row.iter().all(|v| (v - mu).abs() < 1e-9));
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            fit_ica(&vec![vec![1.0; 100]; 8], &IcaConfig::default()),
            Err(DspError::TooFewSamples { .. })
        ));
        let row: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let dup = vec![row.clone(), row.clone(), row];
        assert!(matches!(
            fit_ica(&dup, &IcaConfig::default()),
            Err(DspError::RankDeficient { .. })
        ));
    }

    #[test]
    fn no_convergence_flagged() {
        let (x, _) = mixed(3000, 5);
        let m = fit_ica(&x, &IcaConfig { max_iter: 1, tol: 1e-12, seed: 0 }).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 1);
    }

    #[test]
    fn kurtosis_values() {
        let sine: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.0123).sin()).collect();
        assert!((excess_kurtosis(&sine) + 1.5).abs() < 0.05);
        let mut sparse = vec![0.0; 10_000];
        sparse[10] = 1.0;
        assert!(excess_kurtosis(&sparse) > 1000.0);
    }
}
