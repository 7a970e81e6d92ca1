use rand::distributions::{Distribution, Open01};
use rand::Rng;

use crate::error::{Error, Result};

/// Pareto law with survival function `t^-alpha` on `[1, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoAlpha {
    alpha: f64,
}

impl ParetoAlpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::usage(format!("pareto index must be positive, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn survival(&self, t: f64) -> f64 {
        if t <= 1.0 {
            1.0
        } else {
            t.powf(-self.alpha)
        }
    }
}

impl Distribution<f64> for ParetoAlpha {
    /// Inverse transform `U^(-1/alpha)`; `U` is drawn from the open unit
    /// interval so every draw is strictly greater than one.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = Open01.sample(rng);
        u.powf(-1.0 / self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::{stream_rng, MCEstimate};

    fn draws(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
        let p = ParetoAlpha::new(alpha).unwrap();
        let mut rng = stream_rng(seed, 0, 0);
        (0..n).map(|_| p.sample(&mut rng)).collect()
    }

    #[test]
    fn rejects_bad_index() {
        assert!(ParetoAlpha::new(0.0).is_err());
        assert!(ParetoAlpha::new(-1.0).is_err());
        assert!(ParetoAlpha::new(f64::NAN).is_err());
    }

    #[test]
    fn support_lower_bound() {
        for alpha in [0.5, 1.0, 3.0] {
            let min = draws(alpha, 100_000, 7).into_iter().fold(f64::INFINITY, f64::min);
            assert!(min > 1.0);
        }
    }

    #[test]
    fn half_moment_alpha_one() {
        let v: Vec<f64> = draws(1.0, 1_000_000, 11).into_iter().map(|r| r.sqrt()).collect();
        let e = MCEstimate::from_values(&v).unwrap();
        assert!((e.mean - 2.0).abs() <= 4.0 * e.se, "{e:?}");
    }

    #[test]
    fn empirical_survival() {
        for alpha in [1.0, 2.0] {
            let p = ParetoAlpha::new(alpha).unwrap();
            let x = draws(alpha, 1_000_000, 13);
            for t in [1.5, 2.0, 4.0] {
                let ind: Vec<f64> = x.iter().map(|&r| (r > t) as u8 as f64).collect();
                let e = MCEstimate::from_values(&ind).unwrap();
                let exact = p.survival(t);
                let se = (exact * (1.0 - exact) / x.len() as f64).sqrt();
                assert!((e.mean - exact).abs() <= 4.0 * se, "alpha={alpha} t={t} {e:?}");
            }
        }
        assert_eq!(ParetoAlpha::new(2.0).unwrap().survival(2.0), 0.25);
    }
}
