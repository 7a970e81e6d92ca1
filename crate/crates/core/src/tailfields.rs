//! Local (spectral tail) fields, tail fields, random-shift representations
//! and Monte Carlo checkers for the identities that tie them together.

use std::sync::Arc;

use rand::distributions::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{FieldSample, FieldSampler, FieldView};
use crate::functional::{BoundFunctional, FunctionalSpec, Homogeneity, Region};
use crate::lattice::{Lattice, Point, Window};
use crate::mc::{compare, run_replications, stream_rng, ComparisonReport, MCEstimate, McConfig, StreamRng};
use crate::norm::HomogeneousNorm;
use crate::pareto::ParetoAlpha;

/// Weighted Monte Carlo estimate of `E f(sample)` under the law of `s`.
pub fn estimate<S, F>(s: &S, mc: &McConfig, bank: &str, f: F) -> Result<MCEstimate>
where
    S: FieldSampler + ?Sized,
    F: Fn(&FieldSample, &mut StreamRng) -> Result<f64> + Sync,
{
    if mc.reps < 2 {
        return Err(Error::usage("at least two replications are required"));
    }
    let draws = run_replications(mc, bank, |rng, _| {
        let (z, w) = s.sample_weighted(rng)?;
        let v = if w == 0.0 { 0.0 } else { f(&z, rng)? };
        Ok((v, w))
    })?;
    let (x, w): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
    if s.is_unweighted() {
        MCEstimate::from_values(&x)
    } else {
        MCEstimate::from_weighted(&x, &w)
    }
}

fn require_points(window: &Window, pts: impl IntoIterator<Item = Point>) -> Result<()> {
    for p in pts {
        if !window.contains(&p) {
            return Err(Error::usage(format!(
                "point {p:?} is outside the sampler window; enlarge the window"
            )));
        }
    }
    Ok(())
}

fn sub(a: &[i64], b: &[i64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn neg(a: &[i64]) -> Point {
    a.iter().map(|x| -x).collect()
}

// ---------------------------------------------------------------------------
// synthetic fields

/// Law of the level `S` of a constant field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstantLaw {
    Unit,
    /// `lo` or `hi` with probability one half each.
    TwoPoint(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticKind {
    /// `u 1{t = 0}`.
    Singleton,
    /// `+-rho^{|t|_1} u` with independent random signs per point.
    Geometric { rho: f64 },
    /// `S u` at every point.
    Constant { law: ConstantLaw },
}

/// Closed-form fields built on the unit diagonal `u` of the norm, so that
/// `||u|| = 1` for every norm kind.
#[derive(Debug, Clone)]
pub struct SyntheticField {
    kind: SyntheticKind,
    window: Arc<Window>,
    alpha: f64,
    norm: HomogeneousNorm,
    unit: Vec<f64>,
}

impl SyntheticField {
    pub fn new(kind: SyntheticKind, window: Arc<Window>, alpha: f64, norm: HomogeneousNorm) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::usage("alpha must be positive"));
        }
        match kind {
            SyntheticKind::Geometric { rho } if !(rho > 0.0 && rho < 1.0) => {
                return Err(Error::usage(format!("rho must lie in (0, 1), got {rho}")))
            }
            SyntheticKind::Constant {
                law: ConstantLaw::TwoPoint(lo, hi),
            } if !(lo >= 0.0 && hi >= 0.0 && lo.is_finite() && hi.is_finite()) => {
                return Err(Error::usage("constant levels must be finite and nonnegative"))
            }
            _ => {}
        }
        if window.origin_index().is_none() {
            return Err(Error::usage("window must contain the origin"));
        }
        Ok(Self {
            kind,
            window,
            alpha,
            norm,
            unit: norm.unit_diagonal(),
        })
    }

    pub fn kind(&self) -> SyntheticKind {
        self.kind
    }
}

impl FieldSampler for SyntheticField {
    fn window(&self) -> &Arc<Window> {
        &self.window
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn norm(&self) -> HomogeneousNorm {
        self.norm
    }

    fn sample(&self, rng: &mut StreamRng) -> Result<FieldSample> {
        let d = self.unit.len();
        let n = self.window.len();
        let mut values = vec![0.0; n * d];
        match self.kind {
            SyntheticKind::Singleton => {
                let o = self.window.origin_index().expect("checked at construction");
                values[o * d..(o + 1) * d].copy_from_slice(&self.unit);
            }
            SyntheticKind::Geometric { rho } => {
                for i in 0..n {
                    let r: i64 = self.window.coord(i).iter().map(|c| c.abs()).sum();
                    let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    let m = s * rho.powi(r as i32);
                    for k in 0..d {
                        values[i * d + k] = m * self.unit[k];
                    }
                }
            }
            SyntheticKind::Constant { law } => {
                let s = match law {
                    ConstantLaw::Unit => 1.0,
                    ConstantLaw::TwoPoint(lo, hi) => {
                        if rng.gen::<bool>() {
                            hi
                        } else {
                            lo
                        }
                    }
                };
                for i in 0..n {
                    for k in 0..d {
                        values[i * d + k] = s * self.unit[k];
                    }
                }
            }
        }
        FieldSample::new(self.window.clone(), values, self.alpha, self.norm)
    }
}

// ---------------------------------------------------------------------------
// local and tail fields

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalMode {
    /// `Theta = Z / ||Z(0)||`; requires `||Z(0)|| = 1`.
    Direct,
    /// `Theta = Z / ||Z(0)||` with importance weight `||Z(0)||^alpha`.
    Weighted,
    /// Draws from a fixed bank of weighted candidates with probability
    /// proportional to their weights.
    Resampled { bank: usize },
}

/// Sampler of the local field `Theta`, the law of `Z / ||Z(0)||` under the
/// `||Z(0)||^alpha`-tilted measure.
pub struct LocalField {
    base: Arc<dyn FieldSampler>,
    mode: LocalMode,
    bank: Vec<FieldSample>,
    cumulative: Vec<f64>,
}

const ORIGIN_TOL: f64 = 1e-12;

impl LocalField {
    pub fn direct(base: Arc<dyn FieldSampler>) -> Self {
        Self {
            base,
            mode: LocalMode::Direct,
            bank: vec![],
            cumulative: vec![],
        }
    }

    pub fn weighted(base: Arc<dyn FieldSampler>) -> Self {
        Self {
            base,
            mode: LocalMode::Weighted,
            bank: vec![],
            cumulative: vec![],
        }
    }

    /// Builds a bank of `m` candidates from streams of `seed`.
    pub fn resampled(base: Arc<dyn FieldSampler>, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::usage("resampling bank must be nonempty"));
        }
        let alpha = base.alpha();
        let mut bank = Vec::with_capacity(m);
        let mut cumulative = Vec::with_capacity(m);
        let mut total = 0.0;
        for i in 0..m {
            let mut rng = stream_rng(seed, crate::mc::bank_tag("local-field-bank"), i as u64);
            let (z, w0) = base.sample_weighted(&mut rng)?;
            let n0 = z.norms()[z.origin_index()];
            let w = w0 * n0.powf(alpha);
            total += w;
            cumulative.push(total);
            bank.push(if n0 > 0.0 { z.scaled(1.0 / n0) } else { z });
        }
        if !(total > 0.0) {
            return Err(Error::DegenerateBase("every candidate has ||Z(0)|| = 0".into()));
        }
        Ok(Self {
            base,
            mode: LocalMode::Resampled { bank: m },
            bank,
            cumulative,
        })
    }

    pub fn mode(&self) -> LocalMode {
        self.mode
    }

    /// The candidate bank and its importance weights (resampled mode only).
    pub fn bank(&self) -> Vec<(&FieldSample, f64)> {
        let mut prev = 0.0;
        self.bank
            .iter()
            .zip(&self.cumulative)
            .map(|(z, &c)| {
                let w = c - prev;
                prev = c;
                (z, w)
            })
            .collect()
    }
}

impl FieldSampler for LocalField {
    fn window(&self) -> &Arc<Window> {
        self.base.window()
    }

    fn alpha(&self) -> f64 {
        self.base.alpha()
    }

    fn norm(&self) -> HomogeneousNorm {
        self.base.norm()
    }

    fn sample(&self, rng: &mut StreamRng) -> Result<FieldSample> {
        match self.mode {
            LocalMode::Weighted => Err(Error::usage(
                "a weighted local field has no unweighted draws; use sample_weighted",
            )),
            _ => Ok(self.sample_weighted(rng)?.0),
        }
    }

    fn sample_weighted(&self, rng: &mut StreamRng) -> Result<(FieldSample, f64)> {
        match self.mode {
            LocalMode::Direct => {
                let (z, w) = self.base.sample_weighted(rng)?;
                let n0 = z.norms()[z.origin_index()];
                if (n0 - 1.0).abs() > ORIGIN_TOL {
                    return Err(Error::Contract(format!(
                        "direct local field needs ||Z(0)|| = 1, got {n0}"
                    )));
                }
                Ok((if n0 == 1.0 { z } else { z.scaled(1.0 / n0) }, w))
            }
            LocalMode::Weighted => {
                let (z, w0) = self.base.sample_weighted(rng)?;
                let n0 = z.norms()[z.origin_index()];
                if n0 == 0.0 {
                    return Ok((z, 0.0));
                }
                Ok((z.scaled(1.0 / n0), w0 * n0.powf(self.alpha())))
            }
            LocalMode::Resampled { .. } => {
                let total = *self.cumulative.last().expect("nonempty bank");
                let u = rng.gen::<f64>() * total;
                let i = self.cumulative.partition_point(|&c| c <= u).min(self.bank.len() - 1);
                Ok((self.bank[i].clone(), 1.0))
            }
        }
    }

    fn is_unweighted(&self) -> bool {
        self.mode != LocalMode::Weighted && self.base.is_unweighted()
    }
}

/// Tail field `Y = R Theta` with `R` an independent alpha-Pareto variable.
pub struct TailField<S> {
    theta: S,
    pareto: ParetoAlpha,
}

impl<S: FieldSampler> TailField<S> {
    pub fn new(theta: S) -> Result<Self> {
        let pareto = ParetoAlpha::new(theta.alpha())?;
        Ok(Self { theta, pareto })
    }

    /// Draws `(Theta, R, weight)`.
    pub fn sample_parts(&self, rng: &mut StreamRng) -> Result<(FieldSample, f64, f64)> {
        let (t, w) = self.theta.sample_weighted(rng)?;
        let r = self.pareto.sample(rng);
        Ok((t, r, w))
    }
}

impl<S: FieldSampler> FieldSampler for TailField<S> {
    fn window(&self) -> &Arc<Window> {
        self.theta.window()
    }

    fn alpha(&self) -> f64 {
        self.theta.alpha()
    }

    fn norm(&self) -> HomogeneousNorm {
        self.theta.norm()
    }

    fn sample(&self, rng: &mut StreamRng) -> Result<FieldSample> {
        if !self.theta.is_unweighted() {
            return Err(Error::usage("tail field over a weighted local field; use sample_weighted"));
        }
        Ok(self.sample_weighted(rng)?.0)
    }

    fn sample_weighted(&self, rng: &mut StreamRng) -> Result<(FieldSample, f64)> {
        let (t, r, w) = self.sample_parts(rng)?;
        Ok((t.scaled(r), w))
    }

    fn is_unweighted(&self) -> bool {
        self.theta.is_unweighted()
    }
}

// ---------------------------------------------------------------------------
// random shifts

/// Discrete density `p_N` on finitely many lattice points.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftLaw {
    points: Vec<Point>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ShiftLaw {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::usage("shift law needs one positive weight per point"));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::usage("shift law weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            points,
            probs,
            cumulative,
        })
    }

    pub fn point_mass(l: usize) -> Self {
        Self::new(vec![vec![0; l]], vec![1.0]).expect("valid")
    }

    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::new(points, w)
    }

    /// Uniform on the lattice points of `[lo, hi]^l` (embedded coordinates).
    pub fn uniform_box(lattice: &Arc<Lattice>, lo: f64, hi: f64) -> Result<Self> {
        let c = 0.5 * (lo + hi);
        let r = 0.5 * (hi - lo);
        let tol = 1e-9 * r.abs().max(1.0);
        // enumerate the centered cube of the larger radius and filter
        let w = Window::centered(lattice.clone(), lo.abs().max(hi.abs()))?;
        let pts = (0..w.len())
            .filter(|&i| w.embedded(i).iter().all(|x| (x - c).abs() <= r + tol))
            .map(|i| w.coord(i).to_vec())
            .collect();
        Self::uniform(pts)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn draw(&self, rng: &mut StreamRng) -> usize {
        let u = rng.gen::<f64>();
        self.cumulative.partition_point(|&c| c <= u).min(self.points.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftVariant {
    /// Normalise by `(sum_h p(h) ||Z(h - N)||^alpha)^{1/alpha}`.
    Sum,
    /// The max/exceedance normaliser with an extra Pareto variable.
    MaxExceedance,
}

/// Random-shift representation `Z_N` of a base field, evaluated on an
/// output window. The base window must contain `t - N` and `h - N` for all
/// output points `t` and all support points `h`, `N`.
pub struct RandomShift<S> {
    base: S,
    law: ShiftLaw,
    variant: ShiftVariant,
    out: Arc<Window>,
    pareto: ParetoAlpha,
    /// For each support point `N`: base indices of `t - N` and `h - N`.
    out_idx: Vec<Vec<usize>>,
    supp_idx: Vec<Vec<usize>>,
}

impl<S: FieldSampler> RandomShift<S> {
    pub fn new(base: S, law: ShiftLaw, variant: ShiftVariant, out: Arc<Window>) -> Result<Self> {
        let bw = base.window().clone();
        let lookup = |p: Point| -> Result<usize> {
            bw.index_of(&p).ok_or_else(|| {
                Error::usage(format!(
                    "shifted point {p:?} leaves the base window; enlarge the base window"
                ))
            })
        };
        let mut out_idx = Vec::with_capacity(law.points.len());
        let mut supp_idx = Vec::with_capacity(law.points.len());
        for n in &law.points {
            out_idx.push(out.points().map(|t| lookup(sub(t, n))).collect::<Result<Vec<_>>>()?);
            supp_idx.push(law.points.iter().map(|h| lookup(sub(h, n))).collect::<Result<Vec<_>>>()?);
        }
        let pareto = ParetoAlpha::new(base.alpha())?;
        if out.origin_index().is_none() {
            return Err(Error::usage("output window must contain the origin"));
        }
        Ok(Self {
            base,
            law,
            variant,
            out,
            pareto,
            out_idx,
            supp_idx,
        })
    }

    pub fn law(&self) -> &ShiftLaw {
        &self.law
    }

    /// Base window needed for a given output window and shift law.
    pub fn required_base_radius(out: &Window, law: &ShiftLaw) -> f64 {
        let lat = out.lattice();
        let mut r = 0.0f64;
        for n in &law.points {
            for t in out.points().chain(law.points.iter().map(|p| p.as_slice())) {
                let e = lat.embed(&sub(t, n));
                r = r.max(e.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            }
        }
        r
    }
}

impl<S: FieldSampler> FieldSampler for RandomShift<S> {
    fn window(&self) -> &Arc<Window> {
        &self.out
    }

    fn alpha(&self) -> f64 {
        self.base.alpha()
    }

    fn norm(&self) -> HomogeneousNorm {
        self.base.norm()
    }

    fn sample(&self, rng: &mut StreamRng) -> Result<FieldSample> {
        if !self.base.is_unweighted() {
            return Err(Error::usage("random shift over a weighted sampler; use sample_weighted"));
        }
        Ok(self.sample_weighted(rng)?.0)
    }

    fn sample_weighted(&self, rng: &mut StreamRng) -> Result<(FieldSample, f64)> {
        let (z, w) = self.base.sample_weighted(rng)?;
        let k = self.law.draw(rng);
        let alpha = self.alpha();
        let norms = z.norms();
        let n0 = norms[z.origin_index()];
        let factor = match self.variant {
            ShiftVariant::Sum => {
                let s: f64 = self.supp_idx[k]
                    .iter()
                    .zip(&self.law.probs)
                    .map(|(&i, p)| p * norms[i].powf(alpha))
                    .sum();
                if s > 0.0 {
                    n0 / s.powf(1.0 / alpha)
                } else {
                    0.0
                }
            }
            ShiftVariant::MaxExceedance => {
                let r = self.pareto.sample(rng);
                if n0 == 0.0 {
                    0.0
                } else {
                    let mut mx = 0.0f64;
                    let mut exc = 0.0;
                    for (&i, p) in self.supp_idx[k].iter().zip(&self.law.probs) {
                        mx = mx.max(p * norms[i].powf(alpha));
                        if r * norms[i] / n0 > 1.0 {
                            exc += p;
                        }
                    }
                    let den = mx * exc;
                    if den > 0.0 {
                        (self.law.probs[k] / den).powf(1.0 / alpha)
                    } else {
                        0.0
                    }
                }
            }
        };
        let d = z.d();
        let mut values = Vec::with_capacity(self.out.len() * d);
        for &i in &self.out_idx[k] {
            values.extend(z.value(i).iter().map(|v| v * factor));
        }
        Ok((FieldSample::new(self.out.clone(), values, alpha, self.norm())?, w))
    }

    fn is_unweighted(&self) -> bool {
        self.base.is_unweighted()
    }
}

// ---------------------------------------------------------------------------
// identity checks

/// Both sides of the defining identity
/// `E ||Z~(h)||^alpha F(Z~ / ||Z~(h)||) = E ||Z(h)||^alpha F(Z / ||Z(h)||)`.
pub fn check_defining_identity<A, B>(
    s1: &A,
    s2: &B,
    f: &FunctionalSpec,
    h: &[i64],
    mc: &McConfig,
    z_crit: f64,
    bank: &str,
) -> Result<ComparisonReport>
where
    A: FieldSampler + ?Sized,
    B: FieldSampler + ?Sized,
{
    let side = |s: &dyn FieldSampler, tag: &str| -> Result<MCEstimate> {
        let g = f.bind(s.window().lattice())?;
        let mut need: Vec<Point> = g.referenced_points().cloned().collect();
        need.push(h.to_vec());
        require_points(s.window(), need)?;
        let alpha = s.alpha();
        estimate(s, mc, &format!("{bank}/{tag}"), |z, _| {
            let v = z.view();
            let nh = v.norm_at(h)?;
            if nh == 0.0 {
                return Ok(0.0);
            }
            Ok(nh.powf(alpha) * g.eval(&v.scaled(1.0 / nh))?)
        })
    };
    let lhs = side(&DynRef(s1), "lhs")?;
    let rhs = side(&DynRef(s2), "rhs")?;
    Ok(compare(lhs, rhs, z_crit))
}

/// Adapter so unsized samplers can be passed as `&dyn FieldSampler`.
struct DynRef<'a, S: ?Sized>(&'a S);

impl<S: FieldSampler + ?Sized> FieldSampler for DynRef<'_, S> {
    fn window(&self) -> &Arc<Window> {
        self.0.window()
    }
    fn alpha(&self) -> f64 {
        self.0.alpha()
    }
    fn norm(&self) -> HomogeneousNorm {
        self.0.norm()
    }
    fn sample(&self, rng: &mut StreamRng) -> Result<FieldSample> {
        self.0.sample(rng)
    }
    fn sample_weighted(&self, rng: &mut StreamRng) -> Result<(FieldSample, f64)> {
        self.0.sample_weighted(rng)
    }
    fn is_unweighted(&self) -> bool {
        self.0.is_unweighted()
    }
}

fn bind_checked(f: &FunctionalSpec, s: &(impl FieldSampler + ?Sized)) -> Result<BoundFunctional> {
    f.validate(s.alpha())?;
    f.bind(s.window().lattice())
}

/// Both sides of `E ||Theta(h)||^alpha G(Theta) = E 1{||Theta(-h)|| != 0} G(B^h Theta)`
/// for a 0-homogeneous `G`.
pub fn check_spectral_identity<S: FieldSampler + ?Sized>(
    theta: &S,
    g: &FunctionalSpec,
    h: &[i64],
    mc: &McConfig,
    z_crit: f64,
    bank: &str,
) -> Result<ComparisonReport> {
    if g.tag != Homogeneity::Deg0 {
        return Err(Error::usage("the spectral-tail identity needs a 0-homogeneous functional"));
    }
    let gb = bind_checked(g, theta)?;
    let mut need = vec![h.to_vec(), neg(h)];
    for p in gb.referenced_points() {
        need.push(p.clone());
        need.push(sub(p, h));
    }
    require_points(theta.window(), need)?;
    let alpha = theta.alpha();
    let mh = neg(h);
    let lhs = estimate(theta, mc, &format!("{bank}/lhs"), |t, _| {
        let v = t.view();
        let nh = v.norm_at(h)?;
        if nh == 0.0 {
            return Ok(0.0);
        }
        Ok(nh.powf(alpha) * gb.eval(&v)?)
    })?;
    let rhs = estimate(theta, mc, &format!("{bank}/rhs"), |t, _| {
        let v = t.view();
        if v.norm_at(&mh)? == 0.0 {
            return Ok(0.0);
        }
        gb.eval(&v.shifted(h))
    })?;
    Ok(compare(lhs, rhs, z_crit))
}

/// Both sides of `E G(x B^h Y) 1{x ||Y(-h)|| > 1} = x^alpha E G(Y) 1{||Y(h)|| > x}`.
pub fn check_tail_identity<S: FieldSampler + ?Sized>(
    y: &S,
    g: &FunctionalSpec,
    h: &[i64],
    x: f64,
    mc: &McConfig,
    z_crit: f64,
    bank: &str,
) -> Result<ComparisonReport> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::usage("x must be positive"));
    }
    let gb = bind_checked(g, y)?;
    let mut need = vec![h.to_vec(), neg(h)];
    for p in gb.referenced_points() {
        need.push(p.clone());
        need.push(sub(p, h));
    }
    require_points(y.window(), need)?;
    let alpha = y.alpha();
    let mh = neg(h);
    let lhs = estimate(y, mc, &format!("{bank}/lhs"), |s, _| {
        let v = s.view();
        if x * v.norm_at(&mh)? > 1.0 {
            gb.eval(&v.shifted(h).scaled(x))
        } else {
            Ok(0.0)
        }
    })?;
    let xa = x.powf(alpha);
    let rhs = estimate(y, mc, &format!("{bank}/rhs"), |s, _| {
        let v = s.view();
        if v.norm_at(h)? > x {
            Ok(xa * gb.eval(&v)?)
        } else {
            Ok(0.0)
        }
    })?;
    Ok(compare(lhs, rhs, z_crit))
}

/// `E[max(1, M) - M]` with `M = max_i ||theta(t_i)||^alpha / x_i^alpha`.
pub fn fdd_y_theta_side(theta_norms: &[f64], x: &[f64], alpha: f64) -> f64 {
    let m = theta_norms
        .iter()
        .zip(x)
        .map(|(t, xi)| (t / xi).powf(alpha))
        .fold(0.0f64, f64::max);
    m.max(1.0) - m
}

/// Closed form of `P(||Y(0)|| <= x) = max(0, 1 - x^-alpha)`.
pub fn fdd_y_single_point(x: f64, alpha: f64) -> f64 {
    (1.0 - x.powf(-alpha)).max(0.0)
}

/// Both sides of `P(||Y(t_i)|| <= x_i for all i) = E[max(1, M) - M]`. The
/// left side simulates `Y = R Theta`, the right uses `Theta` only.
pub fn fdd_y_check<S: FieldSampler + ?Sized>(
    theta: &S,
    points: &[Point],
    x: &[f64],
    mc: &McConfig,
    z_crit: f64,
    bank: &str,
) -> Result<ComparisonReport> {
    if points.len() != x.len() || points.is_empty() {
        return Err(Error::usage("fdd check needs one level per point"));
    }
    if x.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::usage("fdd levels must be positive"));
    }
    require_points(theta.window(), points.iter().cloned())?;
    let alpha = theta.alpha();
    let pareto = ParetoAlpha::new(alpha)?;
    let lhs = estimate(theta, mc, &format!("{bank}/lhs"), |t, rng| {
        let r = pareto.sample(rng);
        let v = t.view();
        for (p, xi) in points.iter().zip(x) {
            if r * v.norm_at(p)? > *xi {
                return Ok(0.0);
            }
        }
        Ok(1.0)
    })?;
    let rhs = estimate(theta, mc, &format!("{bank}/rhs"), |t, _| {
        let v = t.view();
        let n = points.iter().map(|p| v.norm_at(p)).collect::<Result<Vec<_>>>()?;
        Ok(fdd_y_theta_side(&n, x, alpha))
    })?;
    Ok(compare(lhs, rhs, z_crit))
}

// ---------------------------------------------------------------------------
// tail measure

/// A nonnegative functional `H` declared to vanish whenever
/// `sup_{K0} ||f|| < eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailFunctional {
    pub h: FunctionalSpec,
    pub eps: f64,
    pub k0: Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailMeasureVariant {
    /// Change of variables `z = eps u / sup_{K0} ||Z||` with `u` Pareto.
    Direct,
    /// Exceedance-count representation through the tail field over a window `K`.
    Bizha,
    /// Direct estimator applied to the randomly shifted, renormalised local field.
    ThetaShift,
}

struct BoundTail {
    h: BoundFunctional,
    k0: Vec<Point>,
    eps: f64,
}

impl BoundTail {
    fn new(t: &TailFunctional, lattice: &Arc<Lattice>) -> Result<Self> {
        if !(t.eps > 0.0 && t.eps.is_finite()) {
            return Err(Error::usage("eps must be positive"));
        }
        let k0 = t.k0.resolve(lattice)?;
        if k0.is_empty() {
            return Err(Error::usage("K0 must be nonempty"));
        }
        Ok(Self {
            h: t.h.bind(lattice)?,
            k0,
            eps: t.eps,
        })
    }

    fn sup_k0(&self, v: &FieldView<'_>) -> Result<f64> {
        let mut s = 0.0f64;
        for p in &self.k0 {
            s = s.max(v.norm_at(p)?);
        }
        Ok(s)
    }

    /// `S^alpha eps^-alpha H(eps u f / S)`, with the vanishing property
    /// spot-checked just below the threshold.
    fn direct_term(&self, v: &FieldView<'_>, u: f64, alpha: f64) -> Result<f64> {
        let s = self.sup_k0(v)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        let below = self.h.eval(&v.clone().scaled(0.999 * self.eps / s))?;
        if below != 0.0 {
            return Err(Error::Contract(format!(
                "H = {below} on a field with sup over K0 below eps = {}",
                self.eps
            )));
        }
        let val = self.h.eval(&v.clone().scaled(self.eps * u / s))?;
        Ok((s / self.eps).powf(alpha) * val)
    }

    fn points(&self) -> impl Iterator<Item = &Point> {
        self.h.referenced_points().chain(&self.k0)
    }
}

/// Monte Carlo estimate of `nu_Z[H] = int E H(z Z) nu_alpha(dz)`.
///
/// `Direct` samples `Z` from `z`; `Bizha` and `ThetaShift` use the local
/// field `theta`. `window_k` is the window `K` of the exceedance-count
/// representation and `shift` the density `p_N` of the shifted one.
pub struct TailMeasure<'a> {
    pub h: &'a TailFunctional,
    pub window_k: Region,
    pub shift: Option<ShiftLaw>,
}

pub fn tail_measure_estimate<S: FieldSampler + ?Sized>(
    sampler: &S,
    tm: &TailMeasure<'_>,
    variant: TailMeasureVariant,
    mc: &McConfig,
    bank: &str,
) -> Result<MCEstimate> {
    let lattice = sampler.window().lattice().clone();
    let bt = BoundTail::new(tm.h, &lattice)?;
    let alpha = sampler.alpha();
    let pareto = ParetoAlpha::new(alpha)?;
    match variant {
        TailMeasureVariant::Direct => {
            require_points(sampler.window(), bt.points().cloned())?;
            estimate(sampler, mc, bank, |z, rng| {
                let u = pareto.sample(rng);
                bt.direct_term(&z.view(), u, alpha)
            })
        }
        TailMeasureVariant::Bizha => {
            let k = tm.window_k.resolve(&lattice)?;
            for p in &bt.k0 {
                if !k.contains(p) {
                    return Err(Error::usage("the window K must contain K0"));
                }
            }
            let mut need = vec![];
            for t in &k {
                for s in &k {
                    need.push(sub(s, t));
                }
                for p in bt.points() {
                    need.push(sub(p, t));
                }
            }
            require_points(sampler.window(), need)?;
            let eps_a = bt.eps.powf(-alpha);
            estimate(sampler, mc, bank, |theta, rng| {
                let r = pareto.sample(rng);
                let v = theta.view().scaled(r);
                let mut acc = 0.0;
                for t in &k {
                    let vt = v.clone().shifted(t);
                    let hv = bt.h.eval(&vt.clone().scaled(bt.eps))?;
                    if hv == 0.0 {
                        continue;
                    }
                    let mut count = 0.0;
                    for s in &k {
                        if vt.norm_at(s)? > 1.0 {
                            count += 1.0;
                        }
                    }
                    if count == 0.0 {
                        return Err(Error::Contract("empty exceedance count in K".into()));
                    }
                    acc += hv / count;
                }
                Ok(eps_a * acc)
            })
        }
        TailMeasureVariant::ThetaShift => {
            let law = tm
                .shift
                .as_ref()
                .ok_or_else(|| Error::usage("the shifted estimator needs a shift law"))?;
            let mut need = vec![];
            for n in law.points() {
                for g in law.points() {
                    need.push(sub(g, n));
                }
                for p in bt.points() {
                    need.push(sub(p, n));
                }
            }
            require_points(sampler.window(), need)?;
            estimate(sampler, mc, bank, |theta, rng| {
                let k = law.draw(rng);
                let u = pareto.sample(rng);
                let vh = theta.view().shifted(&law.points()[k]);
                let mut i = 0.0;
                for (g, p) in law.points().iter().zip(law.probs()) {
                    i += p * vh.norm_at(g)?.powf(alpha);
                }
                if i == 0.0 {
                    return Ok(0.0);
                }
                bt.direct_term(&vh.scaled(i.powf(-1.0 / alpha)), u, alpha)
            })
        }
    }
}

/// Truncated integrability probe: for each radius `a`,
/// `sum_t p(t) E[ sup_{|s| <= a} ||Theta(s - t)||^alpha / sum_r ||Theta(r - t)||^alpha p(r) ]`,
/// all radii estimated on the same replications.
pub fn integrability_probe<S: FieldSampler + ?Sized>(
    theta: &S,
    law: &ShiftLaw,
    radii: &[f64],
    mc: &McConfig,
    bank: &str,
) -> Result<Vec<(f64, MCEstimate)>> {
    let lattice = theta.window().lattice().clone();
    let cubes: Vec<Vec<Point>> = radii
        .iter()
        .map(|&a| Region::Cube(a).resolve(&lattice))
        .collect::<Result<_>>()?;
    let mut need = vec![];
    for t in law.points() {
        for r in law.points() {
            need.push(sub(r, t));
        }
        for c in &cubes {
            for s in c {
                need.push(sub(s, t));
            }
        }
    }
    require_points(theta.window(), need)?;
    let alpha = theta.alpha();
    let draws = run_replications(mc, bank, |rng, _| {
        let (th, w) = theta.sample_weighted(rng)?;
        let k = law.draw(rng);
        let v = th.view().shifted(&law.points()[k]);
        let mut den = 0.0;
        for (r, p) in law.points().iter().zip(law.probs()) {
            den += p * v.norm_at(r)?.powf(alpha);
        }
        let mut row = Vec::with_capacity(cubes.len());
        for c in &cubes {
            let mut m = 0.0f64;
            for s in c {
                m = m.max(v.norm_at(s)?);
            }
            row.push(if den > 0.0 { m.powf(alpha) / den } else { 0.0 });
        }
        Ok((row, w))
    })?;
    let w: Vec<f64> = draws.iter().map(|d| d.1).collect();
    radii
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            let x: Vec<f64> = draws.iter().map(|d| d.0[j]).collect();
            let e = if theta.is_unweighted() {
                MCEstimate::from_values(&x)?
            } else {
                MCEstimate::from_weighted(&x, &w)?
            };
            Ok((a, e))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::Normalizer;
    use crate::gaussian::{BrownResnick, SpectralModel, VariogramSpec};

    fn z1() -> Arc<Lattice> {
        Arc::new(Lattice::integer(1))
    }

    fn win(a: f64) -> Arc<Window> {
        Arc::new(Window::centered(z1(), a).unwrap())
    }

    fn br(a: f64) -> Arc<BrownResnick> {
        let m = SpectralModel::new(VariogramSpec::power(1.0, 1.0).unwrap(), 1, 1.0).unwrap();
        Arc::new(BrownResnick::new(m, win(a)).unwrap())
    }

    fn synth(kind: SyntheticKind, a: f64) -> Arc<SyntheticField> {
        Arc::new(SyntheticField::new(kind, win(a), 1.0, HomogeneousNorm::AlphaSum { alpha: 1.0, d: 1 }).unwrap())
    }

    fn mc(reps: usize) -> McConfig {
        McConfig::new(17, reps)
    }

    #[test]
    fn synthetic_origin_norms() {
        for kind in [SyntheticKind::Singleton, SyntheticKind::Geometric { rho: 0.5 }] {
            let s = SyntheticField::new(kind, win(3.0), 1.0, HomogeneousNorm::Euclidean { d: 3 }).unwrap();
            let f = s.sample(&mut stream_rng(1, 2, 3)).unwrap();
            assert!((f.norms()[f.origin_index()] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn weighted_local_field_normalisation() {
        // ||Z(0)|| in {0, 2}: the weighted mean of F = 1 is one
        let base = synth(
            SyntheticKind::Constant {
                law: ConstantLaw::TwoPoint(0.0, 2.0),
            },
            2.0,
        );
        let lf = LocalField::weighted(base);
        let e = estimate(&lf, &mc(1000), "norm", |_, _| Ok(1.0)).unwrap();
        assert_eq!(e.mean, 1.0);
        let all_zero = synth(
            SyntheticKind::Constant {
                law: ConstantLaw::TwoPoint(0.0, 0.0),
            },
            2.0,
        );
        assert!(matches!(
            estimate(&LocalField::weighted(all_zero.clone()), &mc(100), "z", |_, _| Ok(1.0)),
            Err(Error::DegenerateBase(_))
        ));
        assert!(matches!(
            LocalField::resampled(all_zero, 10, 1),
            Err(Error::DegenerateBase(_))
        ));
    }

    #[test]
    fn direct_mode_rejects_unnormalised_base() {
        let base = synth(
            SyntheticKind::Constant {
                law: ConstantLaw::TwoPoint(0.5, 2.0),
            },
            1.0,
        );
        let lf = LocalField::direct(base);
        assert!(matches!(lf.sample(&mut stream_rng(0, 0, 0)), Err(Error::Contract(_))));
    }

    #[test]
    fn weighted_and_resampled_agree() {
        // a base with a non-degenerate ||Z(0)||: BR scaled by a two-point level
        struct Mixed(Arc<BrownResnick>);
        impl FieldSampler for Mixed {
            fn window(&self) -> &Arc<Window> {
                self.0.window()
            }
            fn alpha(&self) -> f64 {
                1.0
            }
            fn norm(&self) -> HomogeneousNorm {
                self.0.norm()
            }
            fn sample(&self, rng: &mut StreamRng) -> Result<FieldSample> {
                let z = self.0.sample(rng)?;
                let c = if rng.gen::<bool>() { 0.5 } else { 3.0 };
                let k = self.0.window().index_of(&[1]).unwrap();
                // make the level depend on the path so tilting matters
                Ok(z.scaled(c * (1.0 + z.norms()[k]).recip()))
            }
        }
        let base: Arc<dyn FieldSampler> = Arc::new(Mixed(br(2.0)));
        let weighted = LocalField::weighted(base.clone());
        let resampled = LocalField::resampled(base, 10_000, 99).unwrap();
        let f = |t: &FieldSample, _: &mut StreamRng| Ok(t.norm_at(&[1]).unwrap());
        let a = estimate(&weighted, &mc(100_000), "w", f).unwrap();
        let b = estimate(&resampled, &mc(10_000), "r", f).unwrap();
        // the bank is itself a weighted sample of size M; add its error
        let (x, w): (Vec<f64>, Vec<f64>) = resampled
            .bank()
            .into_iter()
            .map(|(t, w)| (t.norm_at(&[1]).unwrap(), w))
            .unzip();
        let bank_se = MCEstimate::from_weighted(&x, &w).unwrap().se;
        let b = MCEstimate::new(b.mean, (b.se * b.se + bank_se * bank_se).sqrt(), b.reps);
        let r = compare(a, b, 4.0);
        assert!(r.pass, "{r:?}");
        assert!((a.mean - 1.0).abs() > 10.0 * a.se, "tilting should move the mean");
    }

    #[test]
    fn tail_field_origin_and_law() {
        let y = TailField::new(LocalField::direct(br(2.0))).unwrap();
        let draws = run_replications(&mc(200_000), "y", |rng, _| {
            let s = y.sample(rng)?;
            Ok(s.norms()[s.origin_index()])
        })
        .unwrap();
        assert!(draws.iter().all(|&r| r > 1.0));
        let ind: Vec<f64> = draws.iter().map(|&r| (r > 2.0) as u8 as f64).collect();
        let e = MCEstimate::from_values(&ind).unwrap();
        assert!((e.mean - 0.5).abs() <= 4.0 * e.se);
    }

    #[test]
    fn tail_field_independence() {
        let y = TailField::new(LocalField::direct(br(2.0))).unwrap();
        let draws = run_replications(&mc(200_000), "indep", |rng, _| {
            let (t, r, _) = y.sample_parts(rng)?;
            Ok((r.ln(), t.norm_at(&[1]).unwrap()))
        })
        .unwrap();
        let n = draws.len() as f64;
        let (ma, mb) = (
            draws.iter().map(|d| d.0).sum::<f64>() / n,
            draws.iter().map(|d| d.1).sum::<f64>() / n,
        );
        let prod: Vec<f64> = draws.iter().map(|d| (d.0 - ma) * (d.1 - mb)).collect();
        let e = MCEstimate::from_values(&prod).unwrap();
        assert!(e.mean.abs() <= 4.0 * e.se, "{e:?}");
    }

    #[test]
    fn point_mass_shift_is_the_base() {
        let base = br(3.0);
        let zn = RandomShift::new(base.clone(), ShiftLaw::point_mass(1), ShiftVariant::Sum, win(3.0)).unwrap();
        let a = base.sample(&mut stream_rng(1, 2, 3)).unwrap();
        let b = zn.sample(&mut stream_rng(1, 2, 3)).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn singleton_moving_field() {
        let law = ShiftLaw::uniform(vec![vec![-1], vec![0], vec![1]]).unwrap();
        let zn = RandomShift::new(synth(SyntheticKind::Singleton, 2.0), law, ShiftVariant::Sum, win(1.0)).unwrap();
        for rep in 0..50 {
            let f = zn.sample(&mut stream_rng(3, 3, rep)).unwrap();
            let nz: Vec<f64> = f.norms().iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nz.len(), 1);
            assert!((nz[0] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_outside_window_is_rejected() {
        let law = ShiftLaw::uniform(vec![vec![-1], vec![0], vec![1]]).unwrap();
        assert!(RandomShift::new(br(1.0), law, ShiftVariant::Sum, win(1.0)).is_err());
    }

    #[test]
    fn spectral_identity_origin_and_singleton() {
        let g = FunctionalSpec::exceedance(vec![vec![1]], vec![0.5]).normalized(Normalizer::Point(vec![0]));
        let theta = LocalField::direct(synth(SyntheticKind::Singleton, 3.0));
        let r = check_spectral_identity(&theta, &g, &[1], &mc(1000), 4.0, "s").unwrap();
        assert_eq!((r.lhs.mean, r.rhs.mean, r.lhs.se, r.rhs.se), (0.0, 0.0, 0.0, 0.0));
        assert!(r.pass);
        let raw = FunctionalSpec::exceedance(vec![vec![1]], vec![0.5]);
        assert!(check_spectral_identity(&theta, &raw, &[1], &mc(10), 4.0, "s").is_err());
        // window too small
        assert!(check_spectral_identity(&theta, &g, &[3], &mc(10), 4.0, "s").is_ok());
        assert!(check_spectral_identity(&theta, &g, &[4], &mc(10), 4.0, "s").is_err());
    }

    #[test]
    fn tail_identity_trivial_cell() {
        let y = TailField::new(LocalField::direct(br(2.0))).unwrap();
        let r = check_tail_identity(&y, &FunctionalSpec::constant_one(), &[0], 1.0, &mc(1000), 4.0, "t").unwrap();
        assert_eq!((r.lhs.mean, r.rhs.mean, r.lhs.se, r.rhs.se), (1.0, 1.0, 0.0, 0.0));
        assert!(r.pass);
    }

    #[test]
    fn fdd_closed_forms() {
        for (x, alpha) in [(0.5, 1.0), (2.0, 1.0), (3.0, 2.5)] {
            assert_eq!(fdd_y_theta_side(&[1.0], &[x], alpha), fdd_y_single_point(x, alpha));
        }
        // singleton: points {0, 1}, x = (2, 3)
        let want = 1.0 - 2.0f64.powf(-1.0);
        assert_eq!(fdd_y_theta_side(&[1.0, 0.0], &[2.0, 3.0], 1.0), want);
        let theta = LocalField::direct(synth(SyntheticKind::Singleton, 2.0));
        let r = fdd_y_check(&theta, &[vec![0], vec![1]], &[2.0, 3.0], &mc(100_000), 4.0, "f").unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.rhs.mean, want);
    }

    #[test]
    fn tail_measure_scaling_is_exact_per_replication() {
        let h1 = TailFunctional {
            h: FunctionalSpec::exceedance(vec![vec![0], vec![1]], vec![1.0, 0.5]),
            eps: 1.0,
            k0: Region::Points(vec![vec![0]]),
        };
        let c = 2.0;
        let hc = TailFunctional {
            h: FunctionalSpec::exceedance(vec![vec![0], vec![1]], vec![c, 0.5 * c]),
            eps: c,
            k0: Region::Points(vec![vec![0]]),
        };
        let tm = |h| TailMeasure {
            h,
            window_k: Region::Cube(0.0),
            shift: None,
        };
        let z = br(2.0);
        let a = tail_measure_estimate(&*z, &tm(&h1), TailMeasureVariant::Direct, &mc(2000), "tm").unwrap();
        let b = tail_measure_estimate(&*z, &tm(&hc), TailMeasureVariant::Direct, &mc(2000), "tm").unwrap();
        assert!((b.mean * c - a.mean).abs() <= 1e-12 * a.mean);
    }

    #[test]
    fn vanishing_violation_is_a_contract_error() {
        // declared eps = 2 but H fires from level 1
        let bad = TailFunctional {
            h: FunctionalSpec::exceedance(vec![vec![0]], vec![1.0]),
            eps: 2.0,
            k0: Region::Points(vec![vec![0]]),
        };
        let tm = TailMeasure {
            h: &bad,
            window_k: Region::Cube(0.0),
            shift: None,
        };
        let r = tail_measure_estimate(&*br(1.0), &tm, TailMeasureVariant::Direct, &mc(10), "bad");
        assert!(matches!(r, Err(Error::Replications { .. })));
    }

    #[test]
    fn literal_max_exceedance_shift_on_constant_field() {
        // constant field, non-uniform p: E ||Z_N(0)||^alpha = sum p^2 / max p != 1
        let law = ShiftLaw::new(vec![vec![-1], vec![0], vec![1]], vec![1.0, 2.0, 1.0]).unwrap();
        let base = synth(SyntheticKind::Constant { law: ConstantLaw::Unit }, 2.0);
        let zn = RandomShift::new(base, law, ShiftVariant::MaxExceedance, win(1.0)).unwrap();
        let e = estimate(&zn, &mc(200_000), "iii", |f, _| Ok(f.norms()[f.origin_index()])).unwrap();
        let want = (0.25f64 * 0.25 + 0.5 * 0.5 + 0.25 * 0.25) / 0.5;
        assert!((e.mean - want).abs() <= 4.0 * e.se, "{e:?}");
        assert!((e.mean - 1.0).abs() > 10.0 * e.se);
    }
}
