//! Anchoring maps, the functionals `S_V` and `B_{V,tau}`, and exact checks
//! of the shift-involution axioms on a corpus of samples.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{FieldSample, FieldSampler};
use crate::functional::Region;
use crate::lattice::{Point, Window};
use crate::mc::{run_replications, McConfig};

/// Location returned by an anchoring map; `Infinite` when the defining set is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnchorResult {
    At(Point),
    Infinite,
}

impl AnchorResult {
    pub fn point(&self) -> Option<&[i64]> {
        match self {
            AnchorResult::At(p) => Some(p),
            AnchorResult::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorMap {
    InfArgSup,
    FirstExceedance,
}

impl AnchorMap {
    pub fn apply(&self, f: &FieldSample) -> Result<AnchorResult> {
        match self {
            AnchorMap::InfArgSup => infargsup(f),
            AnchorMap::FirstExceedance => Ok(first_exceedance(f)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AnchorMap::InfArgSup => "infargsup",
            AnchorMap::FirstExceedance => "first_exceedance",
        }
    }
}

/// Lexicographically smallest window point where `||f||` attains its maximum.
pub fn infargsup(f: &FieldSample) -> Result<AnchorResult> {
    let w = f.window();
    if w.is_empty() {
        return Err(Error::usage("infargsup of an empty window"));
    }
    // window points are stored in lexicographic order
    let mut best = 0;
    for (i, &v) in f.norms().iter().enumerate() {
        if v > f.norms()[best] {
            best = i;
        }
    }
    Ok(AnchorResult::At(w.coord(best).to_vec()))
}

/// Lexicographically smallest window point with `||f(j)|| > 1`.
pub fn first_exceedance(f: &FieldSample) -> AnchorResult {
    match f.norms().iter().position(|&v| v > 1.0) {
        Some(i) => AnchorResult::At(f.window().coord(i).to_vec()),
        None => AnchorResult::Infinite,
    }
}

/// `sum_{t in V} ||f(t)||^alpha * weight`.
pub fn s_v(f: &FieldSample, v: &[Point], alpha: f64, weight: f64) -> Result<f64> {
    let mut s = 0.0;
    for p in v {
        let n = f.norm_at(p).ok_or_else(|| Error::OutsideWindow { point: p.clone() })?;
        s += n.powf(alpha);
    }
    Ok(s * weight)
}

/// `sum_{t in V} ||f(t)||^tau 1{||f(t)|| >= 1} * weight`.
pub fn b_v_tau(f: &FieldSample, v: &[Point], tau: f64, weight: f64) -> Result<f64> {
    let mut s = 0.0;
    for p in v {
        let n = f.norm_at(p).ok_or_else(|| Error::OutsideWindow { point: p.clone() })?;
        if n >= 1.0 {
            s += n.powf(tau);
        }
    }
    Ok(s * weight)
}

/// `B^j f` on the window translated by `j`.
pub fn shift_sample(f: &FieldSample, j: &[i64]) -> Result<FieldSample> {
    let w = Arc::new(f.window().translated(j)?);
    if w.origin_index().is_none() {
        return Err(Error::usage("shifted window no longer contains the origin"));
    }
    // translation preserves the lexicographic order, so values carry over row by row
    FieldSample::new(w, f.values().to_vec(), f.alpha(), f.norm_kind())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AxiomCount {
    pub checked: usize,
    pub passed: usize,
}

impl AxiomCount {
    fn record(&mut self, ok: bool) {
        self.checked += 1;
        self.passed += ok as usize;
    }

    pub fn failed(&self) -> usize {
        self.checked - self.passed
    }

    pub fn all_pass(&self) -> bool {
        self.checked > 0 && self.failed() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AxiomReport {
    /// `J(B^j f) - j = J(f)`.
    pub a1: AxiomCount,
    /// `||f(J(f))|| > 0`.
    pub a3: AxiomCount,
    /// `||f(J(f))|| > min(1, ||f(0)||)`, except that a location tied with the
    /// origin at a level `<= 1` counts as a pass.
    pub a2: AxiomCount,
    /// The literal strict inequality, ties included.
    pub a2_strict: AxiomCount,
    /// `J(c f) = J(f)`.
    pub homogeneity: AxiomCount,
    /// `(f, j)` pairs whose shifted window lost the origin.
    pub skipped_shifts: usize,
    pub witnesses: Vec<String>,
}

const MAX_WITNESSES: usize = 5;

fn a2_holds(at: f64, origin: f64, strict: bool) -> bool {
    let m = origin.min(1.0);
    at > m || (!strict && origin <= 1.0 && at >= origin)
}

/// Checks A1, A3, A2 and 0-homogeneity of `map` on every sample, shift and scale.
pub fn axiom_check(map: AnchorMap, corpus: &[FieldSample], shifts: &[Point], scales: &[f64]) -> Result<AxiomReport> {
    let mut rep = AxiomReport::default();
    let witness = |rep: &mut AxiomReport, msg: String| {
        if rep.witnesses.len() < MAX_WITNESSES {
            rep.witnesses.push(msg);
        }
    };
    for (k, f) in corpus.iter().enumerate() {
        let jf = map.apply(f)?;
        for &c in scales {
            let cf = f.scaled(c);
            let jc = map.apply(&cf)?;
            let ok = jc == jf;
            rep.homogeneity.record(ok);
            if !ok {
                witness(&mut rep, format!("{} sample {k}: J(f) = {jf:?}, J({c} f) = {jc:?}", map.name()));
            }
            if let AnchorResult::At(p) = &jc {
                let at = cf.norm_at(p).expect("location lies in the window");
                let origin = cf.norms()[cf.origin_index()];
                rep.a3.record(at > 0.0);
                rep.a2.record(a2_holds(at, origin, false));
                rep.a2_strict.record(a2_holds(at, origin, true));
                if !a2_holds(at, origin, false) {
                    witness(&mut rep, format!("{} sample {k} scale {c}: A2 fails at {p:?}", map.name()));
                }
            }
            for j in shifts {
                let shifted = match shift_sample(&cf, j) {
                    Ok(s) => s,
                    Err(_) => {
                        rep.skipped_shifts += 1;
                        continue;
                    }
                };
                let js = map.apply(&shifted)?;
                let back = match js {
                    AnchorResult::At(p) => AnchorResult::At(p.iter().zip(j).map(|(a, b)| a - b).collect()),
                    AnchorResult::Infinite => AnchorResult::Infinite,
                };
                let ok = back == jc;
                rep.a1.record(ok);
                if !ok {
                    witness(&mut rep, format!("{} sample {k} shift {j:?}: A1 fails", map.name()));
                }
            }
        }
    }
    Ok(rep)
}

/// One row of the event probe: frequencies of the finite-window proxies of
/// `{S(Y) < inf}`, `{B(Y) < inf}` and `{||Y(t)|| -> 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRow {
    pub radius: f64,
    pub s_below: f64,
    pub b_below: f64,
    pub far_below_one: f64,
}

/// For each radius `a`: frequencies of `S_{[-a,a]}(Y) < m`,
/// `B_{[-a,a],tau}(Y) < m` and `sup_{|t|_1 >= a/2} ||Y(t)|| < 1`.
/// Weighted samplers give weighted frequencies.
pub fn event_probe<S: FieldSampler + ?Sized>(
    y: &S,
    radii: &[f64],
    m: f64,
    tau: f64,
    mc: &McConfig,
    bank: &str,
) -> Result<Vec<EventRow>> {
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::usage("radii must be increasing"));
    }
    let lattice = y.window().lattice().clone();
    let alpha = y.alpha();
    let cubes: Vec<(Vec<Point>, Vec<Point>)> = radii
        .iter()
        .map(|&a| {
            let w = Window::centered(lattice.clone(), a)?;
            let all: Vec<Point> = w.points().map(|p| p.to_vec()).collect();
            let far = (0..w.len())
                .filter(|&i| w.embedded(i).iter().map(|x| x.abs()).sum::<f64>() >= a / 2.0)
                .map(|i| w.coord(i).to_vec())
                .collect();
            Ok((all, far))
        })
        .collect::<Result<_>>()?;
    for (all, _) in &cubes {
        if let Some(p) = all.iter().find(|p| !y.window().contains(p)) {
            return Err(Error::usage(format!("probe point {p:?} is outside the sampler window")));
        }
    }
    let draws = run_replications(mc, bank, |rng, _| {
        let (s, w) = y.sample_weighted(rng)?;
        let mut row = Vec::with_capacity(cubes.len());
        for (all, far) in &cubes {
            let sv = s_v(&s, all, alpha, 1.0)?;
            let bv = b_v_tau(&s, all, tau, 1.0)?;
            let fmax = far.iter().map(|p| s.norm_at(p).unwrap_or(0.0)).fold(0.0f64, f64::max);
            row.push([(sv < m) as u8 as f64, (bv < m) as u8 as f64, (fmax < 1.0) as u8 as f64]);
        }
        Ok((row, w))
    })?;
    let total: f64 = draws.iter().map(|d| d.1).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateBase("all weights are zero".into()));
    }
    Ok(radii
        .iter()
        .enumerate()
        .map(|(j, &radius)| {
            let mut acc = [0.0; 3];
            for (row, w) in &draws {
                for k in 0..3 {
                    acc[k] += w * row[j][k];
                }
            }
            EventRow {
                radius,
                s_below: acc[0] / total,
                b_below: acc[1] / total,
                far_below_one: acc[2] / total,
            }
        })
        .collect())
}

/// Resolves a region for `s_v` / `b_v_tau` on the sample's lattice.
pub fn region_points(f: &FieldSample, r: &Region) -> Result<Vec<Point>> {
    r.resolve(f.window().lattice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use crate::mc::stream_rng;
    use crate::norm::HomogeneousNorm;
    use crate::tailfields::{ConstantLaw, LocalField, SyntheticField, SyntheticKind, TailField};
    use proptest::prelude::*;

    fn z1() -> Arc<Lattice> {
        Arc::new(Lattice::integer(1))
    }

    fn sample(norms: &[f64]) -> FieldSample {
        let a = (norms.len() / 2) as f64;
        let w = Arc::new(Window::centered(z1(), a).unwrap());
        FieldSample::new(w, norms.to_vec(), 1.0, HomogeneousNorm::Sup { d: 1 }).unwrap()
    }

    fn synth(kind: SyntheticKind, a: f64) -> Arc<SyntheticField> {
        let w = Arc::new(Window::centered(z1(), a).unwrap());
        Arc::new(SyntheticField::new(kind, w, 1.0, HomogeneousNorm::AlphaSum { alpha: 1.0, d: 1 }).unwrap())
    }

    #[test]
    fn infargsup_examples() {
        let f = sample(&[0.2, 0.9, 0.9]);
        assert_eq!(infargsup(&f).unwrap(), AnchorResult::At(vec![0]));
        let g = shift_sample(&f, &[1]).unwrap();
        assert_eq!(infargsup(&g).unwrap(), AnchorResult::At(vec![1]));
        assert_eq!(infargsup(&f.scaled(7.0)).unwrap(), AnchorResult::At(vec![0]));
        // constant tie: the lexicographic minimum of the window
        let c = sample(&[1.0; 5]);
        assert_eq!(infargsup(&c).unwrap(), AnchorResult::At(vec![-2]));
        assert_eq!(infargsup(&shift_sample(&c, &[1]).unwrap()).unwrap(), AnchorResult::At(vec![-1]));
    }

    #[test]
    fn first_exceedance_examples() {
        assert_eq!(first_exceedance(&sample(&[0.5, 1.2, 2.0])), AnchorResult::At(vec![0]));
        assert_eq!(first_exceedance(&sample(&[0.5, 1.0, 0.3])), AnchorResult::Infinite);
        let y = TailField::new(LocalField::direct(synth(SyntheticKind::Geometric { rho: 0.5 }, 4.0))).unwrap();
        for rep in 0..200 {
            let s = y.sample(&mut stream_rng(1, 1, rep)).unwrap();
            let p = first_exceedance(&s);
            let at = s.norm_at(p.point().unwrap()).unwrap();
            assert!(at > 1.0);
        }
    }

    #[test]
    fn first_exceedance_is_not_homogeneous() {
        let f = sample(&[0.0, 0.5, 2.0]);
        let rep = axiom_check(AnchorMap::FirstExceedance, &[f], &[vec![0]], &[0.4, 1.0]).unwrap();
        assert!(rep.homogeneity.failed() > 0);
        assert!(!rep.witnesses.is_empty());
        assert!(rep.a1.all_pass() && rep.a2.all_pass() && rep.a2_strict.all_pass());
    }

    #[test]
    fn s_and_b_examples() {
        let singleton = synth(SyntheticKind::Singleton, 3.0).sample(&mut stream_rng(0, 0, 0)).unwrap();
        let v: Vec<Point> = (-3..=3).map(|k| vec![k]).collect();
        assert_eq!(s_v(&singleton, &v, 1.0, 1.0).unwrap(), 1.0);
        let y = TailField::new(LocalField::direct(synth(SyntheticKind::Singleton, 3.0))).unwrap();
        for rep in 0..100 {
            let s = y.sample(&mut stream_rng(0, 1, rep)).unwrap();
            assert_eq!(b_v_tau(&s, &v, 0.0, 1.0).unwrap(), 1.0);
        }
        let geo = synth(SyntheticKind::Geometric { rho: 0.5 }, 8.0).sample(&mut stream_rng(0, 2, 0)).unwrap();
        for k in 1..=8i64 {
            let v: Vec<Point> = (-k..=k).map(|i| vec![i]).collect();
            let oracle = 1.0 + 2.0 * (1..=k).map(|i| 0.5f64.powi(i as i32)).sum::<f64>();
            assert!((s_v(&geo, &v, 1.0, 1.0).unwrap() - oracle).abs() < 1e-14);
            assert!((oracle - (3.0 - 2.0f64.powi(1 - k as i32))).abs() < 1e-14);
        }
    }

    #[test]
    fn event_probe_examples() {
        let mc = McConfig::new(3, 2000);
        let radii = [1.0, 2.0, 4.0];
        let single = TailField::new(LocalField::direct(synth(SyntheticKind::Singleton, 4.0))).unwrap();
        let rows = event_probe(&single, &radii, 1e6, 0.0, &mc, "ev").unwrap();
        for r in &rows {
            assert_eq!((r.b_below, r.far_below_one), (1.0, 1.0));
        }
        let constant = TailField::new(LocalField::direct(synth(SyntheticKind::Constant { law: ConstantLaw::Unit }, 4.0))).unwrap();
        let rows = event_probe(&constant, &radii, 3.0, 0.0, &mc, "ev").unwrap();
        assert_eq!(rows[2].far_below_one, 0.0);
        assert_eq!(rows[2].b_below, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn s_v_is_additive(norms in prop::collection::vec(0.0f64..5.0, 9), split in 0usize..9) {
            let f = sample(&norms);
            let all: Vec<Point> = (-4..=4).map(|k| vec![k]).collect();
            let (a, b) = all.split_at(split);
            // exact for integer-valued sums; use dyadic values to avoid rounding
            let g = FieldSample::new(f.window().clone(), norms.iter().map(|v| (v * 8.0).round() / 8.0).collect(), 1.0, HomogeneousNorm::Sup { d: 1 }).unwrap();
            prop_assert_eq!(s_v(&g, &all, 1.0, 1.0).unwrap(), s_v(&g, a, 1.0, 1.0).unwrap() + s_v(&g, b, 1.0, 1.0).unwrap());
        }

        #[test]
        fn b_v0_monotone_in_scale(norms in prop::collection::vec(0.0f64..5.0, 9), c1 in 0.01f64..10.0, c2 in 0.01f64..10.0) {
            let f = sample(&norms);
            let all: Vec<Point> = (-4..=4).map(|k| vec![k]).collect();
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            prop_assert!(b_v_tau(&f.scaled(lo), &all, 0.0, 1.0).unwrap() <= b_v_tau(&f.scaled(hi), &all, 0.0, 1.0).unwrap());
        }
    }
}
