//! Field realisations on lattice windows and the sampler interface.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::Window;
use crate::mc::StreamRng;
use crate::norm::HomogeneousNorm;

/// Values of an `R^d`-valued field on a finite window, with the norm of
/// every value cached.
#[derive(Debug, Clone)]
pub struct FieldSample {
    window: Arc<Window>,
    values: Vec<f64>,
    d: usize,
    alpha: f64,
    norm: HomogeneousNorm,
    norms: Vec<f64>,
    origin: usize,
}

impl FieldSample {
    /// `values` is row-major, one row of length `norm.dim()` per window point.
    pub fn new(window: Arc<Window>, values: Vec<f64>, alpha: f64, norm: HomogeneousNorm) -> Result<Self> {
        let d = norm.dim();
        if values.len() != window.len() * d {
            return Err(Error::Dimension {
                expected: window.len() * d,
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite field value {v}")));
        }
        let origin = window
            .origin_index()
            .ok_or_else(|| Error::usage("window does not contain the origin"))?;
        let norms = values.chunks(d).map(|x| norm.eval_unchecked(x)).collect();
        Ok(Self {
            window,
            values,
            d,
            alpha,
            norm,
            norms,
            origin,
        })
    }

    pub fn window(&self) -> &Arc<Window> {
        &self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn norm_kind(&self) -> HomogeneousNorm {
        self.norm
    }

    pub fn origin_index(&self) -> usize {
        self.origin
    }

    /// `||f(k)||`, or `None` outside the window.
    pub fn norm_at(&self, k: &[i64]) -> Option<f64> {
        self.window.index_of(k).map(|i| self.norms[i])
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.norms.iter_mut().for_each(|v| *v *= c.abs());
        out
    }

    pub fn view(&self) -> FieldView<'_> {
        FieldView {
            sample: self,
            shift: vec![0; self.window.lattice().dim()],
            scale: 1.0,
        }
    }
}

/// Read-only view `t -> c * f(t - h)` of a sample, i.e. `c B^h f`.
#[derive(Debug, Clone)]
pub struct FieldView<'a> {
    sample: &'a FieldSample,
    shift: Vec<i64>,
    scale: f64,
}

impl<'a> FieldView<'a> {
    pub fn sample(&self) -> &'a FieldSample {
        self.sample
    }

    pub fn shift(&self) -> &[i64] {
        &self.shift
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Applies `B^h`.
    pub fn shifted(mut self, h: &[i64]) -> Self {
        self.shift.iter_mut().zip(h).for_each(|(a, b)| *a += b);
        self
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.scale *= c;
        self
    }

    pub fn try_norm_at(&self, k: &[i64]) -> Option<f64> {
        self.sample
            .window
            .index_of_shifted(k, &self.shift)
            .map(|i| self.scale.abs() * self.sample.norms[i])
    }

    pub fn norm_at(&self, k: &[i64]) -> Result<f64> {
        self.try_norm_at(k).ok_or_else(|| Error::OutsideWindow {
            point: k.iter().zip(&self.shift).map(|(a, b)| a - b).collect(),
        })
    }

    /// Materialises the view on the points of `window` that it covers.
    pub fn to_sample(&self, window: Arc<Window>) -> Result<FieldSample> {
        let d = self.sample.d;
        let mut values = Vec::with_capacity(window.len() * d);
        for k in window.points() {
            let i = self
                .sample
                .window
                .index_of_shifted(k, &self.shift)
                .ok_or_else(|| Error::OutsideWindow {
                    point: k.iter().zip(&self.shift).map(|(a, b)| a - b).collect(),
                })?;
            values.extend(self.sample.value(i).iter().map(|v| v * self.scale));
        }
        FieldSample::new(window, values, self.sample.alpha, self.sample.norm)
    }
}

/// Source of independent field realisations on a fixed window.
///
/// `sample_weighted` returns a realisation with an importance weight; the
/// default weight is one. Expectations under a weighted sampler are ratio
/// estimates `sum w F / sum w`.
pub trait FieldSampler: Send + Sync {
    fn window(&self) -> &Arc<Window>;
    fn alpha(&self) -> f64;
    fn norm(&self) -> HomogeneousNorm;
    fn sample(&self, rng: &mut StreamRng) -> Result<FieldSample>;

    /// Writes `||Z(t)||` for one draw into `out` (length `window().len()`).
    /// Consumes the stream exactly like `sample`.
    fn sample_norms(&self, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        let z = self.sample(rng)?;
        out.copy_from_slice(z.norms());
        Ok(())
    }

    /// Like `sample_norms` but writes `ln ||Z(t)||` (`-inf` where zero).
    fn sample_log_norms(&self, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        self.sample_norms(rng, out)?;
        out.iter_mut().for_each(|v| *v = v.ln());
        Ok(())
    }

    fn sample_weighted(&self, rng: &mut StreamRng) -> Result<(FieldSample, f64)> {
        Ok((self.sample(rng)?, 1.0))
    }

    /// Whether every weight is one.
    fn is_unweighted(&self) -> bool {
        true
    }
}

impl<S: FieldSampler + ?Sized> FieldSampler for Arc<S> {
    fn window(&self) -> &Arc<Window> {
        (**self).window()
    }
    fn alpha(&self) -> f64 {
        (**self).alpha()
    }
    fn norm(&self) -> HomogeneousNorm {
        (**self).norm()
    }
    fn sample(&self, rng: &mut StreamRng) -> Result<FieldSample> {
        (**self).sample(rng)
    }
    fn sample_norms(&self, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        (**self).sample_norms(rng, out)
    }
    fn sample_log_norms(&self, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        (**self).sample_log_norms(rng, out)
    }
    fn sample_weighted(&self, rng: &mut StreamRng) -> Result<(FieldSample, f64)> {
        (**self).sample_weighted(rng)
    }
    fn is_unweighted(&self) -> bool {
        (**self).is_unweighted()
    }
}

/// The field `c Z` for a fixed `c > 0`.
pub struct ScaledSampler<S> {
    pub inner: S,
    pub c: f64,
}

impl<S: FieldSampler> FieldSampler for ScaledSampler<S> {
    fn window(&self) -> &Arc<Window> {
        self.inner.window()
    }
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }
    fn norm(&self) -> HomogeneousNorm {
        self.inner.norm()
    }
    fn sample(&self, rng: &mut StreamRng) -> Result<FieldSample> {
        Ok(self.inner.sample(rng)?.scaled(self.c))
    }
    fn sample_weighted(&self, rng: &mut StreamRng) -> Result<(FieldSample, f64)> {
        let (f, w) = self.inner.sample_weighted(rng)?;
        Ok((f.scaled(self.c), w))
    }
    fn is_unweighted(&self) -> bool {
        self.inner.is_unweighted()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;

    fn line(a: f64) -> Arc<Window> {
        Arc::new(Window::centered(Arc::new(Lattice::integer(1)), a).unwrap())
    }

    #[test]
    fn rejects_non_finite_and_bad_shape() {
        let w = line(1.0);
        let n = HomogeneousNorm::Sup { d: 1 };
        assert!(FieldSample::new(w.clone(), vec![1.0, f64::NAN, 0.0], 1.0, n).is_err());
        assert!(FieldSample::new(w.clone(), vec![1.0, 0.0], 1.0, n).is_err());
        let f = FieldSample::new(w, vec![0.1, 0.5, 0.2], 1.0, n).unwrap();
        assert_eq!(f.origin_index(), 1);
        assert_eq!(f.norm_at(&[0]), Some(0.5));
        assert_eq!(f.norm_at(&[2]), None);
    }

    #[test]
    fn window_without_origin() {
        let lat = Arc::new(Lattice::integer(1));
        let w = Arc::new(Window::from_points(lat, vec![vec![1], vec![2]]).unwrap());
        let n = HomogeneousNorm::Sup { d: 1 };
        assert!(FieldSample::new(w, vec![1.0, 1.0], 1.0, n).is_err());
    }

    #[test]
    fn shifted_view_reads_backwards() {
        let n = HomogeneousNorm::Euclidean { d: 2 };
        let f = FieldSample::new(line(1.0), vec![3.0, 4.0, 0.0, 1.0, 0.0, 2.0], 1.0, n).unwrap();
        let v = f.view().shifted(&[1]).scaled(2.0);
        // (2 B^1 f)(1) = 2 f(0)
        assert_eq!(v.norm_at(&[1]).unwrap(), 2.0);
        assert_eq!(v.norm_at(&[0]).unwrap(), 10.0);
        assert!(matches!(v.norm_at(&[-1]), Err(Error::OutsideWindow { .. })));
        let g = f.view().shifted(&[-1]).to_sample(line(0.0)).unwrap();
        assert_eq!(g.value(0), &[0.0, 2.0]);
    }
}
