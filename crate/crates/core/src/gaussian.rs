//! Gaussian fields with stationary increments and Brown-Resnick spectral fields.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::{FieldSample, FieldSampler};
use crate::lattice::Window;
use crate::mc::{run_replications, McConfig, MCEstimate, StreamRng};
use crate::norm::HomogeneousNorm;

pub const DEFAULT_JITTER: f64 = 1e-10;

/// Power variogram `gamma(h) = sigma * |h|_2^kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramSpec {
    sigma: f64,
    kappa: f64,
}

impl VariogramSpec {
    pub fn power(sigma: f64, kappa: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::usage(format!("sigma must be positive, got {sigma}")));
        }
        if !(kappa > 0.0 && kappa <= 2.0) {
            return Err(Error::usage(format!("kappa must lie in (0, 2], got {kappa}")));
        }
        Ok(Self { sigma, kappa })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn gamma(&self, h: &[f64]) -> f64 {
        let r2: f64 = h.iter().map(|x| x * x).sum();
        if r2 == 0.0 {
            0.0
        } else {
            self.sigma * r2.powf(self.kappa / 2.0)
        }
    }
}

/// Covariance of the centered field with `Y(0) = 0` and variogram `v`:
/// `C[s, t] = (gamma(s) + gamma(t) - gamma(t - s)) / 2`.
pub fn covariance_matrix(v: &VariogramSpec, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::usage("covariance needs at least one point"));
    }
    let n = points.len();
    let g: Vec<f64> = points.iter().map(|p| v.gamma(p)).collect();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let diff: Vec<f64> = points[i].iter().zip(&points[j]).map(|(a, b)| a - b).collect();
            let val = if i == j { g[i] } else { 0.5 * (g[i] + g[j] - v.gamma(&diff)) };
            c[(i, j)] = val;
            c[(j, i)] = val;
        }
    }
    Ok(c)
}

/// Zero-mean Gaussian vector sampler by Cholesky factorisation of
/// `C + jitter * I`. Coordinates with zero variance are not factorised and
/// are returned as exact zeros.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    n: usize,
    active: Vec<usize>,
    /// Row-major lower-triangular factor over the active coordinates.
    chol: Vec<f64>,
    jitter: f64,
}

impl GaussianSampler {
    pub fn new(c: &DMatrix<f64>, jitter: f64) -> Result<Self> {
        let n = c.nrows();
        if c.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: c.ncols(),
            });
        }
        if !(jitter >= 0.0) {
            return Err(Error::usage("jitter must be nonnegative"));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (c[(i, j)], c[(j, i)]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::usage("covariance matrix is not symmetric"));
                }
            }
        }
        let active: Vec<usize> = (0..n).filter(|&i| c[(i, i)] != 0.0).collect();
        for &i in (0..n).filter(|i| !active.contains(i)).collect::<Vec<_>>().iter() {
            if (0..n).any(|j| c[(i, j)] != 0.0) {
                return Err(Error::Numerical(format!(
                    "row {i} has zero variance but nonzero covariance; matrix is not PSD"
                )));
            }
        }
        let m = active.len();
        let sub = DMatrix::from_fn(m, m, |i, j| {
            c[(active[i], active[j])] + if i == j { jitter } else { 0.0 }
        });
        let chol = match sub.clone().cholesky() {
            Some(ch) => ch.l(),
            None => {
                let min_eig = sub.symmetric_eigenvalues().min();
                return Err(Error::Numerical(format!(
                    "Cholesky factorisation failed for a {m}x{m} covariance (jitter {jitter:e}, smallest eigenvalue {min_eig:e})"
                )));
            }
        };
        let mut flat = Vec::with_capacity(m * (m + 1) / 2);
        for i in 0..m {
            for j in 0..=i {
                flat.push(chol[(i, j)]);
            }
        }
        Ok(Self {
            n,
            active,
            chol: flat,
            jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// The dense factor `L` over all coordinates (zero rows for inactive ones).
    pub fn factor(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        let mut k = 0;
        for (i, &ai) in self.active.iter().enumerate() {
            for j in 0..=i {
                l[(ai, self.active[j])] = self.chol[k];
                k += 1;
            }
        }
        l
    }

    /// Writes one draw into `out` (length `dim()`), using `scratch` for the
    /// standard normals.
    pub fn sample_into(&self, rng: &mut StreamRng, scratch: &mut Vec<f64>, out: &mut [f64]) {
        let m = self.active.len();
        scratch.clear();
        scratch.extend((0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        if m < out.len() {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
        let z = &scratch[..m];
        let mut k = 0;
        for (i, &ai) in self.active.iter().enumerate() {
            let row = &self.chol[k..k + i + 1];
            let mut s = 0.0;
            for j in 0..=i {
                s += row[j] * z[j];
            }
            out[ai] = s;
            k += i + 1;
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut scratch = Vec::new();
        self.sample_into(rng, &mut scratch, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignMode {
    PlusOne,
    Rademacher,
}

/// Brown-Resnick specification: `d` independent components built from one
/// variogram family, tail index `alpha` and the law of the signs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralModel {
    pub variogram: VariogramSpec,
    pub d: usize,
    pub alpha: f64,
    pub sign_mode: SignMode,
    pub jitter: f64,
}

impl SpectralModel {
    pub fn new(variogram: VariogramSpec, d: usize, alpha: f64) -> Result<Self> {
        let m = Self {
            variogram,
            d,
            alpha,
            sign_mode: SignMode::PlusOne,
            jitter: DEFAULT_JITTER,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_signs(mut self, s: SignMode) -> Self {
        self.sign_mode = s;
        self
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::usage("d must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::usage(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::usage("jitter must be nonnegative"));
        }
        Ok(())
    }

    pub fn norm(&self) -> HomogeneousNorm {
        HomogeneousNorm::AlphaSum {
            alpha: self.alpha,
            d: self.d,
        }
    }
}

/// Sampler of `Z_i(t) = xi_i exp(Y_i(t) - alpha Var(Y_i(t)) / 2)` on a window.
#[derive(Debug, Clone)]
pub struct BrownResnick {
    model: SpectralModel,
    window: Arc<Window>,
    gauss: GaussianSampler,
    drift: Vec<f64>,
}

impl BrownResnick {
    pub fn new(model: SpectralModel, window: Arc<Window>) -> Result<Self> {
        model.validate()?;
        if window.origin_index().is_none() {
            return Err(Error::usage("Brown-Resnick window must contain the origin"));
        }
        let pts: Vec<Vec<f64>> = (0..window.len()).map(|i| window.embedded(i).to_vec()).collect();
        let c = covariance_matrix(&model.variogram, &pts)?;
        let gauss = GaussianSampler::new(&c, model.jitter)?;
        let drift = (0..c.nrows()).map(|i| 0.5 * model.alpha * c[(i, i)]).collect();
        Ok(Self {
            model,
            window,
            gauss,
            drift,
        })
    }

    pub fn model(&self) -> &SpectralModel {
        &self.model
    }
}

impl FieldSampler for BrownResnick {
    fn window(&self) -> &Arc<Window> {
        &self.window
    }

    fn alpha(&self) -> f64 {
        self.model.alpha
    }

    fn norm(&self) -> HomogeneousNorm {
        self.model.norm()
    }

    fn sample(&self, rng: &mut StreamRng) -> Result<FieldSample> {
        let n = self.window.len();
        let d = self.model.d;
        let mut values = vec![0.0; n * d];
        let mut y = vec![0.0; n];
        let mut scratch = Vec::with_capacity(n);
        for i in 0..d {
            let xi = match self.model.sign_mode {
                SignMode::PlusOne => 1.0,
                SignMode::Rademacher => {
                    if rng.gen::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            self.gauss.sample_into(rng, &mut scratch, &mut y);
            for t in 0..n {
                values[t * d + i] = xi * (y[t] - self.drift[t]).exp();
            }
        }
        FieldSample::new(self.window.clone(), values, self.model.alpha, self.model.norm())
    }

    fn sample_norms(&self, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        if self.model.d != 1 {
            out.copy_from_slice(self.sample(rng)?.norms());
            return Ok(());
        }
        self.sample_log_norms(rng, out)?;
        out.iter_mut().for_each(|v| *v = v.exp());
        if let Some(v) = out.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite field value {v}")));
        }
        Ok(())
    }

    // For d = 1 the norm is exp(Y - drift) whatever the sign.
    fn sample_log_norms(&self, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        if self.model.d != 1 {
            let z = self.sample(rng)?;
            out.iter_mut().zip(z.norms()).for_each(|(o, v)| *o = v.ln());
            return Ok(());
        }
        if let SignMode::Rademacher = self.model.sign_mode {
            let _: bool = rng.gen();
        }
        BR_SCRATCH.with(|s| self.gauss.sample_into(rng, &mut s.borrow_mut(), out));
        for (o, m) in out.iter_mut().zip(&self.drift) {
            *o -= m;
        }
        Ok(())
    }
}

thread_local! {
    static BR_SCRATCH: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
}

/// Mean shift of `X` under the tilted law `e^{Y - v/2} dP` for jointly
/// Gaussian `(X, Y)` with `Var Y = v`: the vector `Cov(X(t_k), Y)`.
pub fn tilt_mean_shift(cov_xy: &[f64], v: f64) -> Result<Vec<f64>> {
    if !(v > 0.0) {
        return Err(Error::usage(format!("Var(Y) must be positive, got {v}")));
    }
    Ok(cov_xy.to_vec())
}

/// One row of a tilting check: importance-weighted moments of `X(t_k)`
/// against the moments of the shifted Gaussian.
#[derive(Debug, Clone, Copy)]
pub struct TiltRow {
    pub point: usize,
    pub mean: MCEstimate,
    pub mean_exact: f64,
    pub second: MCEstimate,
    pub second_exact: f64,
}

/// For centered `X` with covariance `c` and `Y = w . X + noise_sd * eta`,
/// estimates `E e^{Y - v/2} X(t)` and `E e^{Y - v/2} X(t)^2` and pairs them
/// with `Cov(X(t), Y)` and `C[t, t] + Cov(X(t), Y)^2`.
pub fn tilt_moment_check(
    c: &DMatrix<f64>,
    w: &[f64],
    noise_sd: f64,
    jitter: f64,
    mc: &McConfig,
    bank: &str,
) -> Result<Vec<TiltRow>> {
    let n = c.nrows();
    if w.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: w.len(),
        });
    }
    let cw: Vec<f64> = (0..n).map(|i| (0..n).map(|j| c[(i, j)] * w[j]).sum()).collect();
    let v: f64 = w.iter().zip(&cw).map(|(a, b)| a * b).sum::<f64>() + noise_sd * noise_sd;
    let shift = tilt_mean_shift(&cw, v)?;
    let g = GaussianSampler::new(c, jitter)?;
    let draws = run_replications(mc, bank, |rng, _| {
        let x = g.sample(rng);
        let eta: f64 = rng.sample(StandardNormal);
        let y: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + noise_sd * eta;
        let wt = (y - v / 2.0).exp();
        Ok(x.into_iter().map(|xi| (wt * xi, wt * xi * xi)).collect::<Vec<_>>())
    })?;
    (0..n)
        .map(|k| {
            let m: Vec<f64> = draws.iter().map(|r| r[k].0).collect();
            let s: Vec<f64> = draws.iter().map(|r| r[k].1).collect();
            Ok(TiltRow {
                point: k,
                mean: MCEstimate::from_values(&m)?,
                mean_exact: shift[k],
                second: MCEstimate::from_values(&s)?,
                second_exact: c[(k, k)] + shift[k] * shift[k],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use crate::mc::{run_mc, stream_rng};

    fn bm() -> VariogramSpec {
        VariogramSpec::power(1.5, 1.0).unwrap()
    }

    #[test]
    fn variogram_basics() {
        let v = VariogramSpec::power(2.0, 1.5).unwrap();
        assert_eq!(v.gamma(&[0.0, 0.0]), 0.0);
        assert_eq!(v.gamma(&[1.0, -2.0]), v.gamma(&[-1.0, 2.0]));
        assert!(VariogramSpec::power(1.0, 3.0).is_err());
        assert!(VariogramSpec::power(0.0, 1.0).is_err());
        assert!(VariogramSpec::power(1.0, 2.0).is_ok());
    }

    #[test]
    fn covariance_examples() {
        let c = covariance_matrix(&bm(), &[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[1.5, 1.5, 1.5, 3.0]));
        let c = covariance_matrix(&bm(), &[vec![0.0], vec![3.0]]).unwrap();
        assert_eq!(c[(0, 0)], 0.0);
        assert_eq!(c[(0, 1)], 0.0);
        assert_eq!(c[(1, 1)], 4.5);
    }

    #[test]
    fn cholesky_round_trip() {
        let w = Window::centered(Arc::new(Lattice::integer(2)), 3.0).unwrap();
        for kappa in [0.5, 1.0, 1.9] {
            let v = VariogramSpec::power(0.7, kappa).unwrap();
            let pts: Vec<Vec<f64>> = (0..w.len()).map(|i| w.embedded(i).to_vec()).collect();
            let c = covariance_matrix(&v, &pts).unwrap();
            let g = GaussianSampler::new(&c, DEFAULT_JITTER).unwrap();
            let l = g.factor();
            let mut target = c.clone();
            for i in 0..c.nrows() {
                if c[(i, i)] != 0.0 {
                    target[(i, i)] += DEFAULT_JITTER;
                }
            }
            let err = (&l * l.transpose() - target).amax();
            assert!(err <= 1e-8, "kappa={kappa} err={err}");
        }
    }

    #[test]
    fn zero_covariance_gives_zeros() {
        let g = GaussianSampler::new(&DMatrix::zeros(3, 3), DEFAULT_JITTER).unwrap();
        assert_eq!(g.sample(&mut stream_rng(1, 0, 0)), vec![0.0; 3]);
    }

    #[test]
    fn rejects_non_psd() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(GaussianSampler::new(&c, 0.0), Err(Error::Numerical(_))));
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]);
        assert!(GaussianSampler::new(&c, 0.0).is_err());
    }

    #[test]
    fn identity_variances() {
        let g = GaussianSampler::new(&DMatrix::identity(3, 3), 0.0).unwrap();
        let draws = run_replications(&McConfig::new(2, 100_000), "id", |rng, _| Ok(g.sample(rng))).unwrap();
        for k in 0..3 {
            let sq: Vec<f64> = draws.iter().map(|x| x[k] * x[k]).collect();
            let e = MCEstimate::from_values(&sq).unwrap();
            assert!((e.mean - 1.0).abs() <= 4.0 * e.se, "{e:?}");
        }
    }

    #[test]
    fn brownian_cross_covariance() {
        let c = covariance_matrix(&bm(), &[vec![1.0], vec![2.0]]).unwrap();
        let g = GaussianSampler::new(&c, 0.0).unwrap();
        let e = run_mc(&McConfig::new(4, 200_000), "bm", |rng, _| {
            let x = g.sample(rng);
            Ok(x[0] * x[1])
        })
        .unwrap();
        assert!((e.mean - 1.5).abs() <= 4.0 * e.se, "{e:?}");
    }

    #[test]
    fn br_origin_is_exactly_one() {
        let w = Arc::new(Window::centered(Arc::new(Lattice::integer(1)), 4.0).unwrap());
        for (d, signs) in [(1, SignMode::PlusOne), (3, SignMode::Rademacher)] {
            let m = SpectralModel::new(bm(), d, 1.3).unwrap().with_signs(signs);
            let br = BrownResnick::new(m, w.clone()).unwrap();
            for rep in 0..200 {
                let z = br.sample(&mut stream_rng(9, 0, rep)).unwrap();
                assert_eq!(z.norms()[z.origin_index()], 1.0);
            }
        }
    }

    #[test]
    fn norm_fast_path_matches_full_sample() {
        let w = Arc::new(Window::centered(Arc::new(Lattice::integer(1)), 5.0).unwrap());
        for (d, signs) in [(1, SignMode::PlusOne), (1, SignMode::Rademacher), (2, SignMode::Rademacher)] {
            let m = SpectralModel::new(bm(), d, 1.7).unwrap().with_signs(signs);
            let br = BrownResnick::new(m, w.clone()).unwrap();
            let mut out = vec![0.0; w.len()];
            for rep in 0..50 {
                let z = br.sample(&mut stream_rng(3, 0, rep)).unwrap();
                let mut rng = stream_rng(3, 0, rep);
                br.sample_norms(&mut rng, &mut out).unwrap();
                assert_eq!(z.norms(), &out[..]);
                br.sample_log_norms(&mut stream_rng(3, 0, rep), &mut out).unwrap();
                for (a, b) in z.norms().iter().zip(&out) {
                    assert!((a.ln() - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn br_normalisation() {
        let w = Arc::new(Window::centered(Arc::new(Lattice::integer(1)), 3.0).unwrap());
        let m = SpectralModel::new(VariogramSpec::power(0.5, 1.0).unwrap(), 2, 1.0)
            .unwrap()
            .with_signs(SignMode::Rademacher);
        let br = BrownResnick::new(m, w.clone()).unwrap();
        let draws = run_replications(&McConfig::new(6, 100_000), "br", |rng, _| {
            Ok(br.sample(rng)?.norms().to_vec())
        })
        .unwrap();
        for t in 0..w.len() {
            let v: Vec<f64> = draws.iter().map(|r| r[t]).collect();
            let e = MCEstimate::from_values(&v).unwrap();
            assert!((e.mean - 1.0).abs() <= 4.0 * e.se, "t={t} {e:?}");
        }
    }

    #[test]
    fn tiny_variogram_is_nearly_constant() {
        let w = Arc::new(Window::centered(Arc::new(Lattice::integer(1)), 3.0).unwrap());
        let m = SpectralModel::new(VariogramSpec::power(1e-8, 1.0).unwrap(), 1, 1.0).unwrap();
        let z = BrownResnick::new(m, w).unwrap().sample(&mut stream_rng(1, 1, 1)).unwrap();
        assert!(z.values().iter().all(|v| (v - 1.0).abs() < 1e-3));
    }

    #[test]
    fn tilt_shift_examples() {
        assert_eq!(tilt_mean_shift(&[0.0, 0.0], 1.0).unwrap(), vec![0.0, 0.0]);
        assert!(tilt_mean_shift(&[1.0], 0.0).is_err());
        // Y = X(t0): the shift at t0 is Var X(t0)
        let c = covariance_matrix(&bm(), &[vec![1.0], vec![2.0]]).unwrap();
        let rows = tilt_moment_check(&c, &[0.0, 1.0], 0.0, 0.0, &McConfig::new(1, 200_000), "tilt").unwrap();
        assert_eq!(rows[1].mean_exact, c[(1, 1)]);
        for r in rows {
            assert!((r.mean.mean - r.mean_exact).abs() <= 4.0 * r.mean.se, "{r:?}");
        }
    }
}
