//! Parameterised test functionals on field samples.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{FieldSample, FieldView};
use crate::lattice::{Lattice, Point, Window};

/// A set of lattice points: explicit integer coordinates or the centered
/// cube `[-r, r]^l` in embedded coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Points(Vec<Point>),
    Cube(f64),
}

impl Region {
    pub fn resolve(&self, lattice: &Arc<Lattice>) -> Result<Vec<Point>> {
        match self {
            Region::Points(p) => {
                if let Some(q) = p.iter().find(|q| q.len() != lattice.dim()) {
                    return Err(Error::Dimension {
                        expected: lattice.dim(),
                        got: q.len(),
                    });
                }
                Ok(p.clone())
            }
            Region::Cube(r) => Ok(Window::centered(lattice.clone(), *r)?
                .points()
                .map(|p| p.to_vec())
                .collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalKind {
    /// `prod_k 1{lower_k <= ||f(t_k)|| <= upper_k}`; bounds may be infinite.
    IndicatorBox {
        points: Vec<Point>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// `prod_k ||f(t_k)||^e_k`.
    ProductPower { points: Vec<Point>, exponents: Vec<f64> },
    /// `max_{t in V} ||f(t)||`.
    SupWindow { region: Region },
    /// `sum_{t in V} ||f(t)|| * cell weight`.
    IntegralFI { region: Region },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Homogeneity {
    Deg0,
    DegAlpha,
    General,
}

/// Optional division of the argument by `||f(t)||` or `sup_V ||f||` before
/// evaluation, which makes any kind 0-homogeneous. A zero normaliser gives 0.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalizer {
    None,
    Point(Point),
    Sup(Region),
}

/// Weight of a lattice point in `IntegralFI`: one, or the cell volume `Delta(L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Counting,
    Volume,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSpec {
    pub kind: FunctionalKind,
    pub tag: Homogeneity,
    pub normalize: Normalizer,
    pub measure: Measure,
}

impl FunctionalSpec {
    fn with_kind(kind: FunctionalKind) -> Self {
        Self {
            kind,
            tag: Homogeneity::General,
            normalize: Normalizer::None,
            measure: Measure::Counting,
        }
    }

    pub fn indicator_box(points: Vec<Point>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self::with_kind(FunctionalKind::IndicatorBox { points, lower, upper })
    }

    /// Indicator that `||f(t)|| >= lower` at each given point.
    pub fn exceedance(points: Vec<Point>, lower: Vec<f64>) -> Self {
        let upper = vec![f64::INFINITY; lower.len()];
        Self::indicator_box(points, lower, upper)
    }

    pub fn product_power(points: Vec<Point>, exponents: Vec<f64>) -> Self {
        Self::with_kind(FunctionalKind::ProductPower { points, exponents })
    }

    pub fn constant_one() -> Self {
        Self::product_power(vec![], vec![]).tagged(Homogeneity::Deg0)
    }

    pub fn sup_window(region: Region) -> Self {
        Self::with_kind(FunctionalKind::SupWindow { region })
    }

    pub fn integral(region: Region) -> Self {
        Self::with_kind(FunctionalKind::IntegralFI { region })
    }

    pub fn tagged(mut self, tag: Homogeneity) -> Self {
        self.tag = tag;
        self
    }

    pub fn normalized(mut self, n: Normalizer) -> Self {
        if n != Normalizer::None {
            self.tag = Homogeneity::Deg0;
        }
        self.normalize = n;
        self
    }

    pub fn with_measure(mut self, m: Measure) -> Self {
        self.measure = m;
        self
    }

    /// Degree of homogeneity of the functional, if it has one.
    pub fn degree(&self) -> Option<f64> {
        if self.normalize != Normalizer::None {
            return Some(0.0);
        }
        match &self.kind {
            FunctionalKind::IndicatorBox { lower, upper, .. } => {
                // only the trivial box {0 <= . <= inf} is scale-free
                let trivial = lower.iter().all(|&l| l <= 0.0) && upper.iter().all(|&u| u == f64::INFINITY);
                trivial.then_some(0.0)
            }
            FunctionalKind::ProductPower { exponents, .. } => Some(exponents.iter().sum()),
            FunctionalKind::SupWindow { .. } | FunctionalKind::IntegralFI { .. } => Some(1.0),
        }
    }

    /// Checks the parameters and that the declared tag matches the degree.
    pub fn validate(&self, alpha: f64) -> Result<()> {
        match &self.kind {
            FunctionalKind::IndicatorBox { points, lower, upper } => {
                if points.len() != lower.len() || points.len() != upper.len() {
                    return Err(Error::usage("indicator box needs one bound pair per point"));
                }
                if lower.iter().zip(upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
                    return Err(Error::usage("indicator box bounds must satisfy lower <= upper"));
                }
            }
            FunctionalKind::ProductPower { points, exponents } => {
                if points.len() != exponents.len() {
                    return Err(Error::usage("product power needs one exponent per point"));
                }
                if exponents.iter().any(|e| !e.is_finite()) {
                    return Err(Error::usage("exponents must be finite"));
                }
            }
            FunctionalKind::SupWindow { region } | FunctionalKind::IntegralFI { region } => {
                if let Region::Cube(r) = region {
                    if !(*r >= 0.0 && r.is_finite()) {
                        return Err(Error::usage("region radius must be nonnegative"));
                    }
                }
            }
        }
        let deg = self.degree();
        let ok = match self.tag {
            Homogeneity::General => true,
            Homogeneity::Deg0 => deg == Some(0.0),
            Homogeneity::DegAlpha => deg.is_some_and(|d| (d - alpha).abs() <= 1e-12 * alpha.max(1.0)),
        };
        if !ok {
            return Err(Error::usage(format!(
                "functional tagged {:?} has degree {:?} (alpha = {alpha})",
                self.tag, deg
            )));
        }
        Ok(())
    }

    /// Resolves regions against `lattice`.
    pub fn bind(&self, lattice: &Arc<Lattice>) -> Result<BoundFunctional> {
        let l = lattice.dim();
        let check = |pts: &[Point]| -> Result<()> {
            match pts.iter().find(|p| p.len() != l) {
                Some(p) => Err(Error::Dimension {
                    expected: l,
                    got: p.len(),
                }),
                None => Ok(()),
            }
        };
        let points = match &self.kind {
            FunctionalKind::IndicatorBox { points, .. } | FunctionalKind::ProductPower { points, .. } => {
                check(points)?;
                points.clone()
            }
            FunctionalKind::SupWindow { region } | FunctionalKind::IntegralFI { region } => region.resolve(lattice)?,
        };
        let norm_points = match &self.normalize {
            Normalizer::None => vec![],
            Normalizer::Point(p) => {
                check(std::slice::from_ref(p))?;
                vec![p.clone()]
            }
            Normalizer::Sup(r) => r.resolve(lattice)?,
        };
        let weight = match self.measure {
            Measure::Counting => 1.0,
            Measure::Volume => lattice.delta(),
        };
        Ok(BoundFunctional {
            spec: self.clone(),
            points,
            norm_points,
            weight,
        })
    }
}

/// A functional with its point sets resolved on a lattice.
#[derive(Debug, Clone)]
pub struct BoundFunctional {
    spec: FunctionalSpec,
    points: Vec<Point>,
    norm_points: Vec<Point>,
    weight: f64,
}

impl BoundFunctional {
    pub fn spec(&self) -> &FunctionalSpec {
        &self.spec
    }

    /// Every point the functional reads.
    pub fn referenced_points(&self) -> impl Iterator<Item = &Point> {
        self.points.iter().chain(&self.norm_points)
    }

    pub fn eval_sample(&self, f: &FieldSample) -> Result<f64> {
        self.eval(&f.view())
    }

    pub fn eval(&self, v: &FieldView<'_>) -> Result<f64> {
        if self.spec.normalize == Normalizer::None {
            return self.eval_raw(v);
        }
        let mut n = 0.0f64;
        for p in &self.norm_points {
            n = n.max(v.norm_at(p)?);
        }
        if n == 0.0 {
            // 0/0 = 0 convention; still check the points are present
            for p in &self.points {
                v.norm_at(p)?;
            }
            return Ok(0.0);
        }
        self.eval_raw(&v.clone().scaled(1.0 / n))
    }

    fn eval_raw(&self, v: &FieldView<'_>) -> Result<f64> {
        match &self.spec.kind {
            FunctionalKind::IndicatorBox { lower, upper, .. } => {
                let mut inside = true;
                for (i, p) in self.points.iter().enumerate() {
                    let x = v.norm_at(p)?;
                    inside &= lower[i] <= x && x <= upper[i];
                }
                Ok(inside as u8 as f64)
            }
            FunctionalKind::ProductPower { exponents, .. } => {
                let mut prod = 1.0;
                for (p, e) in self.points.iter().zip(exponents) {
                    prod *= v.norm_at(p)?.powf(*e);
                }
                Ok(prod)
            }
            FunctionalKind::SupWindow { .. } => {
                let mut m = 0.0f64;
                for p in &self.points {
                    m = m.max(v.norm_at(p)?);
                }
                Ok(m)
            }
            FunctionalKind::IntegralFI { .. } => {
                let mut s = 0.0;
                for p in &self.points {
                    s += v.norm_at(p)?;
                }
                Ok(s * self.weight)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::HomogeneousNorm;
    use proptest::prelude::*;

    fn line_sample(norms: &[f64]) -> FieldSample {
        let a = (norms.len() / 2) as f64;
        let w = Window::centered(Arc::new(Lattice::integer(1)), a).unwrap();
        FieldSample::new(Arc::new(w), norms.to_vec(), 1.0, HomogeneousNorm::Sup { d: 1 }).unwrap()
    }

    fn z() -> Arc<Lattice> {
        Arc::new(Lattice::integer(1))
    }

    #[test]
    fn spec_examples() {
        let f = line_sample(&[0.3, 0.9, 0.1]);
        let g = FunctionalSpec::exceedance(vec![vec![0]], vec![0.5]).bind(&z()).unwrap();
        assert_eq!(g.eval_sample(&f).unwrap(), 1.0);

        let f = line_sample(&[1.0, 2.0, 3.0]);
        let g = FunctionalSpec::integral(Region::Cube(1.0)).bind(&z()).unwrap();
        assert_eq!(g.eval_sample(&f).unwrap(), 6.0);

        let f = line_sample(&[0.1, 0.4, 0.2]);
        let g = FunctionalSpec::sup_window(Region::Cube(1.0)).bind(&z()).unwrap();
        assert_eq!(g.eval_sample(&f).unwrap(), 0.4);
    }

    #[test]
    fn volume_weight() {
        let lat = Arc::new(Lattice::integer(1).refine(1));
        let w = Window::centered(lat.clone(), 0.5).unwrap();
        let f = FieldSample::new(Arc::new(w), vec![1.0, 2.0, 3.0], 1.0, HomogeneousNorm::Sup { d: 1 }).unwrap();
        let g = FunctionalSpec::integral(Region::Cube(0.5))
            .with_measure(Measure::Volume)
            .bind(&lat)
            .unwrap();
        assert_eq!(g.eval_sample(&f).unwrap(), 3.0);
    }

    #[test]
    fn outside_window_is_an_error() {
        let f = line_sample(&[1.0, 2.0, 3.0]);
        let g = FunctionalSpec::exceedance(vec![vec![9]], vec![0.5]).bind(&z()).unwrap();
        assert!(matches!(g.eval_sample(&f), Err(Error::OutsideWindow { .. })));
    }

    #[test]
    fn zero_normaliser_gives_zero() {
        let f = line_sample(&[1.0, 0.0, 3.0]);
        let g = FunctionalSpec::exceedance(vec![vec![1]], vec![0.5])
            .normalized(Normalizer::Point(vec![0]))
            .bind(&z())
            .unwrap();
        assert_eq!(g.eval_sample(&f).unwrap(), 0.0);
    }

    #[test]
    fn tag_validation() {
        let box_ = FunctionalSpec::exceedance(vec![vec![0]], vec![0.5]);
        assert!(box_.clone().validate(1.0).is_ok());
        assert!(box_.clone().tagged(Homogeneity::Deg0).validate(1.0).is_err());
        assert!(box_.normalized(Normalizer::Point(vec![0])).validate(1.0).is_ok());
        let pp = FunctionalSpec::product_power(vec![vec![0], vec![1]], vec![0.5, 0.5]).tagged(Homogeneity::DegAlpha);
        assert!(pp.validate(1.0).is_ok());
        assert!(pp.validate(2.0).is_err());
        assert!(FunctionalSpec::indicator_box(vec![vec![0]], vec![2.0], vec![1.0]).validate(1.0).is_err());
    }

    fn tagged_specs(alpha: f64) -> Vec<FunctionalSpec> {
        vec![
            FunctionalSpec::exceedance(vec![vec![0], vec![1]], vec![0.5, 0.2]).normalized(Normalizer::Point(vec![-1])),
            FunctionalSpec::integral(Region::Cube(2.0)).normalized(Normalizer::Sup(Region::Cube(1.0))),
            FunctionalSpec::product_power(vec![vec![-2], vec![2]], vec![alpha / 2.0, alpha / 2.0]).tagged(Homogeneity::DegAlpha),
            FunctionalSpec::sup_window(Region::Cube(2.0)).tagged(if alpha == 1.0 {
                Homogeneity::DegAlpha
            } else {
                Homogeneity::General
            }),
            FunctionalSpec::constant_one(),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn declared_scaling_law_holds(
            norms in prop::collection::vec(0.01f64..10.0, 5),
            c in 0.01f64..100.0,
            alpha in prop_oneof![Just(1.0), 0.3f64..3.0],
        ) {
            let f = line_sample(&norms);
            let cf = f.scaled(c);
            for spec in tagged_specs(alpha) {
                spec.validate(alpha).unwrap();
                let g = spec.bind(&z()).unwrap();
                let (a, b) = (g.eval_sample(&f).unwrap(), g.eval_sample(&cf).unwrap());
                let want = match spec.tag {
                    Homogeneity::Deg0 => a,
                    Homogeneity::DegAlpha => c.powf(alpha) * a,
                    Homogeneity::General => continue,
                };
                prop_assert!((b - want).abs() <= 1e-10 * want.abs().max(1e-300), "{spec:?}: {b} vs {want}");
            }
        }
    }
}
