//! Positively 1-homogeneous maps on `R^d`.

use crate::error::{Error, Result};

/// A 1-homogeneous map `R^d -> [0, inf)`.
///
/// `AlphaSum` computes `(sum_i |x_i|^alpha / d)^(1/alpha)`, the choice under
/// which a Brown-Resnick spectral field has `E ||Z(t)||^alpha = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HomogeneousNorm {
    AlphaSum { alpha: f64, d: usize },
    Euclidean { d: usize },
    Sup { d: usize },
}

impl HomogeneousNorm {
    pub fn dim(&self) -> usize {
        match *self {
            HomogeneousNorm::AlphaSum { d, .. }
            | HomogeneousNorm::Euclidean { d }
            | HomogeneousNorm::Sup { d } => d,
        }
    }

    /// Checked evaluation; rejects vectors of the wrong length.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match *self {
            HomogeneousNorm::AlphaSum { alpha, d } => {
                if d == 1 {
                    return x[0].abs();
                }
                // scale by the max component so large alphas do not overflow
                let m = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if m == 0.0 {
                    return 0.0;
                }
                let s: f64 = x.iter().map(|v| (v.abs() / m).powf(alpha)).sum();
                m * (s / d as f64).powf(1.0 / alpha)
            }
            HomogeneousNorm::Euclidean { .. } => {
                let m = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if m == 0.0 {
                    return 0.0;
                }
                m * x.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt()
            }
            HomogeneousNorm::Sup { .. } => x.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }

    /// The vector `(1, ..., 1) / ||(1, ..., 1)||`, which has norm one.
    pub fn unit_diagonal(&self) -> Vec<f64> {
        let d = self.dim();
        let ones = vec![1.0; d];
        let n = self.eval_unchecked(&ones);
        ones.into_iter().map(|v| v / n).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spec_values() {
        let n = HomogeneousNorm::AlphaSum { alpha: 1.0, d: 2 };
        assert_eq!(n.eval(&[1.0, 1.0]).unwrap(), 1.0);
        let n = HomogeneousNorm::AlphaSum { alpha: 2.0, d: 1 };
        assert_eq!(n.eval(&[-3.0]).unwrap(), 3.0);
        let n = HomogeneousNorm::Sup { d: 3 };
        assert_eq!(n.eval(&[0.2, -0.7, 0.5]).unwrap(), 0.7);
    }

    #[test]
    fn dimension_mismatch() {
        let n = HomogeneousNorm::Euclidean { d: 2 };
        assert_eq!(
            n.eval(&[1.0]),
            Err(Error::Dimension {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn zero_vector() {
        for n in [
            HomogeneousNorm::AlphaSum { alpha: 0.7, d: 3 },
            HomogeneousNorm::Euclidean { d: 3 },
            HomogeneousNorm::Sup { d: 3 },
        ] {
            assert_eq!(n.eval(&[0.0; 3]).unwrap(), 0.0);
            let u = n.unit_diagonal();
            assert!((n.eval(&u).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    fn any_norm() -> impl Strategy<Value = HomogeneousNorm> {
        prop_oneof![
            (0.2f64..4.0, 1usize..5).prop_map(|(alpha, d)| HomogeneousNorm::AlphaSum { alpha, d }),
            (1usize..5).prop_map(|d| HomogeneousNorm::Euclidean { d }),
            (1usize..5).prop_map(|d| HomogeneousNorm::Sup { d }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn positive_homogeneity(n in any_norm(), raw in prop::collection::vec(-50.0f64..50.0, 4), c in 1e-3f64..1e3) {
            let x = &raw[..n.dim()];
            let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
            let lhs = n.eval(&cx).unwrap();
            let rhs = c * n.eval(x).unwrap();
            prop_assert!(lhs >= 0.0);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(f64::MIN_POSITIVE));
        }
    }
}
