//! Sectioned key-value experiment configs.
//!
//! ```text
//! [model]
//! family = power
//! sigma = 1
//! kappa = 1
//! d = 1
//! alpha = 1
//!
//! [lattice]
//! matrix = Z
//!
//! [window]
//! radius = 4
//!
//! [functional box]
//! kind = box
//! points = 0; 1
//! lower = 0.5, 0.5
//! upper = inf, inf
//! ```
//!
//! Points are `;`-separated, coordinates within a point are whitespace
//! separated. Lists of numbers and names are `,`-separated. `#` starts a
//! comment. Every section other than `model`, `lattice` and `window` is
//! optional and falls back to the defaults below.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functional::{FunctionalKind, FunctionalSpec, Homogeneity, Measure, Normalizer, Region};
use crate::gaussian::{SignMode, SpectralModel, VariogramSpec, DEFAULT_JITTER};
use crate::lattice::{Lattice, Point};
use crate::maxstable::DeHaanConfig;
use crate::mc::DEFAULT_Z_CRIT;
use crate::tailfields::{ConstantLaw, SyntheticKind};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    BrownResnick(SpectralModel),
    Synthetic { kind: SyntheticKind, alpha: f64, d: usize },
}

impl ModelConfig {
    pub fn alpha(&self) -> f64 {
        match self {
            ModelConfig::BrownResnick(m) => m.alpha,
            ModelConfig::Synthetic { alpha, .. } => *alpha,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            ModelConfig::BrownResnick(m) => m.d,
            ModelConfig::Synthetic { d, .. } => *d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSection {
    pub seed: u64,
    pub reps: usize,
    pub workers: usize,
    pub z_crit: f64,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            seed: 1,
            reps: 10_000,
            workers: 1,
            z_crit: DEFAULT_Z_CRIT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityPartner {
    /// The model against its sum-normalised random shift.
    RandomShift,
    /// The model against an independent copy of itself.
    SelfCopy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentitySection {
    pub h: Vec<Point>,
    pub functionals: Vec<String>,
    pub against: IdentityPartner,
    /// The shift density is uniform on the cube of this radius.
    pub shift_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailSection {
    pub spectral_h: Vec<Point>,
    pub spectral_functionals: Vec<String>,
    pub tail_h: Vec<Point>,
    pub x: Vec<f64>,
    pub tail_functionals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FddSection {
    pub points: Vec<Point>,
    pub levels: Vec<f64>,
    /// Levels of the single-site marginal checks at the origin.
    pub marginals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalSection {
    pub n: Vec<f64>,
    pub a: Vec<f64>,
    pub tau: f64,
    /// Random-shift margin as a multiple of the block side.
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineSection {
    pub levels: u32,
    pub n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomsSection {
    pub corpus: usize,
    /// Shifts are all nonzero points with coordinates in `[-shift_range, shift_range]`.
    pub shift_range: i64,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailMeasureSection {
    pub functionals: Vec<String>,
    pub eps: f64,
    pub k0: Region,
    pub k: Region,
    pub shift_radius: f64,
    /// Threshold `c` of the homogeneity check `nu[1{||f(0)|| > c}] = c^-alpha`.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub lattice: Vec<Vec<f64>>,
    pub window: f64,
    pub functionals: BTreeMap<String, FunctionalSpec>,
    pub mc: McSection,
    pub output: String,
    pub dehaan: DeHaanConfig,
    pub identity: IdentitySection,
    pub tail: TailSection,
    pub fdd: FddSection,
    pub extremal: ExtremalSection,
    pub refine: RefineSection,
    pub axioms: AxiomsSection,
    pub tail_measure: TailMeasureSection,
}

impl ExperimentConfig {
    pub fn lattice(&self) -> Result<Arc<Lattice>> {
        Ok(Arc::new(Lattice::new(&self.lattice)?))
    }

    pub fn functional(&self, name: &str) -> Result<&FunctionalSpec> {
        self.functionals
            .get(name)
            .ok_or_else(|| Error::usage(format!("unknown functional {name:?}")))
    }
}

// ---------------------------------------------------------------------------
// parsing

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    name: String,
    arg: Option<String>,
    line: usize,
    entries: Vec<Entry>,
}

/// Key lookup over one section; records errors and which keys were read.
struct Reader<'a> {
    sec: &'a Section,
    used: HashSet<&'a str>,
    errs: &'a mut Vec<(usize, String)>,
}

impl<'a> Reader<'a> {
    fn new(sec: &'a Section, errs: &'a mut Vec<(usize, String)>) -> Self {
        Self {
            sec,
            used: HashSet::new(),
            errs,
        }
    }

    fn err(&mut self, line: usize, msg: String) {
        self.errs.push((line, msg));
    }

    fn raw(&mut self, key: &'a str) -> Option<(&'a str, usize)> {
        self.used.insert(key);
        self.sec
            .entries
            .iter()
            .rev()
            .find(|e| e.key == key)
            .map(|e| (e.value.as_str(), e.line))
    }

    fn line_of(&self, key: &str) -> usize {
        self.sec
            .entries
            .iter()
            .rev()
            .find(|e| e.key == key)
            .map_or(self.sec.line, |e| e.line)
    }

    fn parsed<T>(&mut self, key: &'a str, default: Option<T>, f: impl Fn(&str) -> std::result::Result<T, String>) -> Option<T> {
        match self.raw(key) {
            Some((v, line)) => match f(v) {
                Ok(x) => Some(x),
                Err(m) => {
                    let name = self.sec.name.clone();
                    self.err(line, format!("[{name}] {key}: {m}"));
                    None
                }
            },
            None => {
                if default.is_none() {
                    let (line, name) = (self.sec.line, self.sec.name.clone());
                    self.err(line, format!("[{name}] missing key {key:?}"));
                }
                default
            }
        }
    }

    fn f64(&mut self, key: &'a str, default: Option<f64>) -> Option<f64> {
        self.parsed(key, default, parse_f64)
    }

    fn u64(&mut self, key: &'a str, default: Option<u64>) -> Option<u64> {
        self.parsed(key, default, |s| s.trim().parse::<u64>().map_err(|e| e.to_string()))
    }

    fn f64s(&mut self, key: &'a str, default: Option<Vec<f64>>) -> Option<Vec<f64>> {
        self.parsed(key, default, parse_f64s)
    }

    fn names(&mut self, key: &'a str, default: Option<Vec<String>>) -> Option<Vec<String>> {
        self.parsed(key, default, |s| Ok(parse_names(s)))
    }

    fn points(&mut self, key: &'a str, default: Option<Vec<Point>>) -> Option<Vec<Point>> {
        self.parsed(key, default, parse_points)
    }

    fn region(&mut self, key: &'a str, default: Option<Region>) -> Option<Region> {
        self.parsed(key, default, parse_region)
    }

    fn word(&mut self, key: &'a str, default: Option<&str>, allowed: &[&str]) -> Option<String> {
        let allowed = allowed.to_vec();
        self.parsed(key, default.map(str::to_string), move |s| {
            let s = s.trim();
            if allowed.contains(&s) {
                Ok(s.to_string())
            } else {
                Err(format!("expected one of {}, got {s:?}", allowed.join(", ")))
            }
        })
    }

    /// Reports keys that were never read.
    fn finish(self) {
        let name = self.sec.name.clone();
        for e in &self.sec.entries {
            if !self.used.contains(e.key.as_str()) {
                self.errs.push((e.line, format!("[{name}] unknown key {:?}", e.key)));
            }
        }
    }
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if v.is_nan() {
        return Err("NaN is not allowed".into());
    }
    Ok(v)
}

fn parse_f64s(s: &str) -> std::result::Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(',').map(parse_f64).collect()
}

fn parse_names(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let p: std::result::Result<Point, _> = s.split_whitespace().map(|c| c.parse::<i64>()).collect();
    match p {
        Ok(p) if !p.is_empty() => Ok(p),
        _ => Err(format!("bad point {:?}; use integer coordinates separated by spaces", s.trim())),
    }
}

fn parse_points(s: &str) -> std::result::Result<Vec<Point>, String> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(';').map(parse_point).collect()
}

fn parse_region(s: &str) -> std::result::Result<Region, String> {
    let s = s.trim();
    if let Some(r) = s.strip_prefix("cube") {
        let r = parse_f64(r)?;
        if !(r >= 0.0 && r.is_finite()) {
            return Err("cube radius must be nonnegative".into());
        }
        Ok(Region::Cube(r))
    } else if let Some(p) = s.strip_prefix("points") {
        Ok(Region::Points(parse_points(p)?))
    } else {
        Err(format!("expected `cube R` or `points P; Q`, got {s:?}"))
    }
}

fn parse_matrix(s: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    let s = s.trim();
    if s == "Z" {
        return Ok(vec![vec![1.0]]);
    }
    if let Some(l) = s.strip_prefix("Z^") {
        let l: usize = l.trim().parse().map_err(|_| format!("bad dimension in {s:?}"))?;
        if l == 0 {
            return Err("dimension must be positive".into());
        }
        return Ok(Lattice::integer(l).base_rows());
    }
    s.split(';').map(|r| r.split_whitespace().map(parse_f64).collect()).collect()
}

fn tokenize(text: &str) -> (Vec<Section>, Vec<(usize, String)>) {
    let mut secs: Vec<Section> = vec![];
    let mut errs = vec![];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(h) = s.strip_prefix('[') {
            let Some(h) = h.strip_suffix(']') else {
                errs.push((line, format!("malformed section header {s:?}")));
                continue;
            };
            let mut it = h.split_whitespace();
            let name = it.next().unwrap_or("").to_string();
            let arg = it.next().map(str::to_string);
            if it.next().is_some() || name.is_empty() {
                errs.push((line, format!("malformed section header {s:?}")));
                continue;
            }
            secs.push(Section {
                name,
                arg,
                line,
                entries: vec![],
            });
            continue;
        }
        let Some((k, v)) = s.split_once('=') else {
            errs.push((line, format!("expected `key = value`, got {s:?}")));
            continue;
        };
        match secs.last_mut() {
            Some(sec) => {
                let key = k.trim().to_string();
                if sec.entries.iter().any(|e| e.key == key) {
                    errs.push((line, format!("[{}] duplicate key {key:?}", sec.name)));
                }
                sec.entries.push(Entry {
                    key,
                    value: v.trim().to_string(),
                    line,
                })
            }
            None => errs.push((line, "key outside of any section".into())),
        }
    }
    (secs, errs)
}

fn parse_model(r: &mut Reader<'_>) -> Option<ModelConfig> {
    let family = r.word("family", None, &["power", "singleton", "geometric", "constant"])?;
    let alpha = r.f64("alpha", None);
    let d = r.u64("d", Some(1)).map(|d| d as usize);
    let line = r.line_of("alpha");
    if let Some(a) = alpha {
        if !(a > 0.0 && a.is_finite()) {
            r.err(line, format!("[model] alpha must be positive, got {a}"));
        }
    }
    if d == Some(0) {
        let line = r.line_of("d");
        r.err(line, "[model] d must be positive".into());
    }
    match family.as_str() {
        "power" => {
            let sigma = r.f64("sigma", None);
            let kappa = r.f64("kappa", None);
            let sign = r.word("sign_mode", Some("plus_one"), &["plus_one", "rademacher"]);
            let jitter = r.f64("jitter", Some(DEFAULT_JITTER));
            if let Some(k) = kappa {
                if !(k > 0.0 && k <= 2.0) {
                    let line = r.line_of("kappa");
                    r.err(line, format!("[model] kappa must lie in (0, 2], got {k}"));
                }
            }
            if let Some(s) = sigma {
                if !(s > 0.0 && s.is_finite()) {
                    let line = r.line_of("sigma");
                    r.err(line, format!("[model] sigma must be positive, got {s}"));
                }
            }
            let v = VariogramSpec::power(sigma?, kappa?).ok()?;
            let signs = if sign? == "plus_one" {
                SignMode::PlusOne
            } else {
                SignMode::Rademacher
            };
            let m = SpectralModel::new(v, d?, alpha?).ok()?.with_signs(signs).with_jitter(jitter?);
            if m.validate().is_err() {
                let line = r.line_of("jitter");
                r.err(line, "[model] jitter must be nonnegative".into());
                return None;
            }
            Some(ModelConfig::BrownResnick(m))
        }
        "singleton" => Some(ModelConfig::Synthetic {
            kind: SyntheticKind::Singleton,
            alpha: alpha?,
            d: d?,
        }),
        "geometric" => {
            let rho = r.f64("rho", None)?;
            if !(rho > 0.0 && rho < 1.0) {
                let line = r.line_of("rho");
                r.err(line, format!("[model] rho must lie in (0, 1), got {rho}"));
                return None;
            }
            Some(ModelConfig::Synthetic {
                kind: SyntheticKind::Geometric { rho },
                alpha: alpha?,
                d: d?,
            })
        }
        _ => {
            let levels = r.parsed("levels", Some(ConstantLaw::Unit), |s| {
                if s.trim() == "unit" {
                    return Ok(ConstantLaw::Unit);
                }
                match parse_f64s(s)?.as_slice() {
                    [lo, hi] if *lo >= 0.0 && *hi >= 0.0 && lo.is_finite() && hi.is_finite() => {
                        Ok(ConstantLaw::TwoPoint(*lo, *hi))
                    }
                    _ => Err("expected `unit` or two nonnegative levels `lo, hi`".into()),
                }
            })?;
            Some(ModelConfig::Synthetic {
                kind: SyntheticKind::Constant { law: levels },
                alpha: alpha?,
                d: d?,
            })
        }
    }
}

fn parse_functional(r: &mut Reader<'_>) -> Option<FunctionalSpec> {
    let kind = r.word("kind", None, &["box", "exceedance", "product", "sup", "integral", "one"])?;
    let mut f = match kind.as_str() {
        "box" => {
            let points = r.points("points", None);
            let lower = r.f64s("lower", None);
            let upper = r.f64s("upper", None);
            FunctionalSpec::indicator_box(points?, lower?, upper?)
        }
        "exceedance" => {
            let points = r.points("points", None);
            let lower = r.f64s("lower", None);
            FunctionalSpec::exceedance(points?, lower?)
        }
        "product" => {
            let points = r.points("points", None);
            let exps = r.f64s("exponents", None);
            FunctionalSpec::product_power(points?, exps?)
        }
        "sup" => FunctionalSpec::sup_window(r.region("region", None)?),
        "integral" => {
            let m = r.word("measure", Some("counting"), &["counting", "volume"])?;
            let m = if m == "counting" { Measure::Counting } else { Measure::Volume };
            FunctionalSpec::integral(r.region("region", None)?).with_measure(m)
        }
        _ => FunctionalSpec::constant_one(),
    };
    if let Some(t) = r.word("tag", Some(""), &["", "deg0", "alpha", "general"]) {
        match t.as_str() {
            "deg0" => f = f.tagged(Homogeneity::Deg0),
            "alpha" => f = f.tagged(Homogeneity::DegAlpha),
            "general" => f = f.tagged(Homogeneity::General),
            _ => {}
        }
    }
    let norm = r.parsed("normalize", Some(Normalizer::None), |s| {
        let s = s.trim();
        if s == "none" {
            Ok(Normalizer::None)
        } else if let Some(p) = s.strip_prefix("point") {
            Ok(Normalizer::Point(parse_point(p)?))
        } else if let Some(g) = s.strip_prefix("sup") {
            Ok(Normalizer::Sup(parse_region(g)?))
        } else {
            Err(format!("expected none, `point P` or `sup REGION`, got {s:?}"))
        }
    })?;
    if norm != Normalizer::None {
        let tag = f.tag;
        f = f.normalized(norm);
        // an explicit tag wins over the one implied by normalisation
        if r.sec.entries.iter().any(|e| e.key == "tag") {
            f.tag = tag;
        }
    }
    Some(f)
}

fn region_points(r: &Region, lattice: &Arc<Lattice>) -> Vec<Point> {
    match r {
        Region::Points(p) => p.clone(),
        Region::Cube(_) => r.resolve(lattice).unwrap_or_default(),
    }
}

fn functional_points(f: &FunctionalSpec, lattice: &Arc<Lattice>) -> Vec<Point> {
    let mut pts = match &f.kind {
        FunctionalKind::IndicatorBox { points, .. } | FunctionalKind::ProductPower { points, .. } => points.clone(),
        FunctionalKind::SupWindow { region } | FunctionalKind::IntegralFI { region } => region_points(region, lattice),
    };
    match &f.normalize {
        Normalizer::None => {}
        Normalizer::Point(p) => pts.push(p.clone()),
        Normalizer::Sup(r) => pts.extend(region_points(r, lattice)),
    }
    pts
}

fn in_window(lattice: &Lattice, radius: f64, p: &[i64]) -> bool {
    p.len() == lattice.dim() && lattice.embed(p).iter().all(|x| x.abs() <= radius + 1e-9 * radius.max(1.0))
}

/// Parses and validates a config, reporting every problem with its line.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let (secs, mut errs) = tokenize(text);
    let mut seen: HashSet<(String, Option<String>)> = HashSet::new();
    for s in &secs {
        if !seen.insert((s.name.clone(), s.arg.clone())) {
            errs.push((s.line, format!("duplicate section [{}]", s.name)));
        }
        let needs_arg = s.name == "functional";
        if needs_arg != s.arg.is_some() {
            errs.push((
                s.line,
                if needs_arg {
                    "functional sections need a name: [functional NAME]".into()
                } else {
                    format!("section [{}] takes no name", s.name)
                },
            ));
        }
    }
    let find = |name: &str| secs.iter().find(|s| s.name == name && s.arg.is_none());
    let empty = Section {
        name: String::new(),
        arg: None,
        line: 0,
        entries: vec![],
    };
    let section = |name: &str, errs: &mut Vec<(usize, String)>, required: bool| -> &Section {
        match find(name) {
            Some(s) => s,
            None => {
                if required {
                    errs.push((0, format!("missing section [{name}]")));
                }
                &empty
            }
        }
    };
    let known = [
        "model",
        "lattice",
        "window",
        "functional",
        "mc",
        "output",
        "simulate",
        "identity",
        "tail",
        "fdd",
        "extremal",
        "refine",
        "axioms",
        "tail_measure",
    ];
    for s in &secs {
        if !known.contains(&s.name.as_str()) {
            errs.push((s.line, format!("unknown section [{}]", s.name)));
        }
    }

    let model = {
        let sec = section("model", &mut errs, true);
        let mut r = Reader::new(sec, &mut errs);
        let m = if sec.line > 0 { parse_model(&mut r) } else { None };
        r.finish();
        m
    };
    let lattice_rows = {
        let sec = section("lattice", &mut errs, true);
        let mut r = Reader::new(sec, &mut errs);
        let m = if sec.line > 0 {
            r.parsed("matrix", None, |s| {
                let rows = parse_matrix(s)?;
                Lattice::new(&rows).map_err(|e| e.to_string())?;
                Ok(rows)
            })
        } else {
            None
        };
        r.finish();
        m
    };
    let lattice = lattice_rows.as_ref().and_then(|r| Lattice::new(r).ok()).map(Arc::new);
    let window = {
        let sec = section("window", &mut errs, true);
        let mut r = Reader::new(sec, &mut errs);
        let w = if sec.line > 0 { r.f64("radius", None) } else { None };
        if let Some(w) = w {
            if !(w >= 0.0 && w.is_finite()) {
                let line = r.line_of("radius");
                r.err(line, format!("[window] radius must be nonnegative, got {w}"));
            }
        }
        r.finish();
        w
    };

    let mut functionals = BTreeMap::new();
    let mut functional_lines = BTreeMap::new();
    for sec in secs.iter().filter(|s| s.name == "functional" && s.arg.is_some()) {
        let mut r = Reader::new(sec, &mut errs);
        let f = parse_functional(&mut r);
        r.finish();
        if let Some(f) = f {
            let name = sec.arg.clone().expect("filtered");
            functional_lines.insert(name.clone(), sec.line);
            functionals.insert(name, f);
        }
    }

    let d = McSection::default();
    let mc = {
        let mut r = Reader::new(section("mc", &mut errs, false), &mut errs);
        let m = McSection {
            seed: r.u64("seed", Some(d.seed)).unwrap_or(d.seed),
            reps: r.u64("reps", Some(d.reps as u64)).unwrap_or(d.reps as u64) as usize,
            workers: r.u64("workers", Some(d.workers as u64)).unwrap_or(1) as usize,
            z_crit: r.f64("z_crit", Some(d.z_crit)).unwrap_or(d.z_crit),
        };
        if m.reps < 2 {
            let line = r.line_of("reps");
            r.err(line, "[mc] reps must be at least 2".into());
        }
        if m.workers == 0 {
            let line = r.line_of("workers");
            r.err(line, "[mc] workers must be positive".into());
        }
        if !(m.z_crit > 0.0) {
            let line = r.line_of("z_crit");
            r.err(line, "[mc] z_crit must be positive".into());
        }
        r.finish();
        m
    };
    let output = {
        let mut r = Reader::new(section("output", &mut errs, false), &mut errs);
        let o = r.parsed("dir", Some("out".to_string()), |s| Ok(s.trim().to_string())).unwrap_or_default();
        r.finish();
        o
    };
    let dd = DeHaanConfig::default();
    let dehaan = {
        let mut r = Reader::new(section("simulate", &mut errs, false), &mut errs);
        let c = DeHaanConfig {
            epsilon: r.f64("epsilon", Some(dd.epsilon)).unwrap_or(dd.epsilon),
            max_terms: r.u64("max_terms", Some(dd.max_terms as u64)).unwrap_or(0) as usize,
            quantile_probes: r.u64("quantile_probes", Some(dd.quantile_probes as u64)).unwrap_or(0) as usize,
            min_terms: r.u64("min_terms", Some(dd.min_terms as u64)).unwrap_or(0) as usize,
        };
        if let Err(e) = c.validate() {
            let line = r.sec.line;
            r.err(line, format!("[simulate] {e}"));
        }
        r.finish();
        c
    };

    let l = lattice.as_ref().map_or(1, |x| x.dim());
    let origin_h = |hs: &[i64]| -> Vec<Point> { hs.iter().map(|&h| { let mut p = vec![0; l]; p[0] = h; p }).collect() };

    let identity = {
        let mut r = Reader::new(section("identity", &mut errs, false), &mut errs);
        let s = IdentitySection {
            h: r.points("h", Some(origin_h(&[0, 1, 2]))).unwrap_or_default(),
            functionals: r.names("functionals", Some(vec![])).unwrap_or_default(),
            against: match r.word("against", Some("random_shift"), &["random_shift", "self"]).as_deref() {
                Some("self") => IdentityPartner::SelfCopy,
                _ => IdentityPartner::RandomShift,
            },
            shift_radius: r.f64("shift_radius", Some(2.0)).unwrap_or(2.0),
        };
        r.finish();
        s
    };
    let tail = {
        let mut r = Reader::new(section("tail", &mut errs, false), &mut errs);
        let s = TailSection {
            spectral_h: r.points("spectral_h", Some(origin_h(&[1, 2]))).unwrap_or_default(),
            spectral_functionals: r.names("spectral_functionals", Some(vec![])).unwrap_or_default(),
            tail_h: r.points("tail_h", Some(origin_h(&[0, 1]))).unwrap_or_default(),
            x: r.f64s("x", Some(vec![0.5, 1.0, 2.0])).unwrap_or_default(),
            tail_functionals: r.names("tail_functionals", Some(vec![])).unwrap_or_default(),
        };
        if s.x.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            let line = r.line_of("x");
            r.err(line, "[tail] x levels must be positive".into());
        }
        r.finish();
        s
    };
    let fdd = {
        let mut r = Reader::new(section("fdd", &mut errs, false), &mut errs);
        let s = FddSection {
            points: r.points("points", Some(origin_h(&[0, 1, 2]))).unwrap_or_default(),
            levels: r.f64s("levels", Some(vec![1.0, 1.0, 1.0])).unwrap_or_default(),
            marginals: r.f64s("marginals", Some(vec![0.5, 1.0, 2.0])).unwrap_or_default(),
        };
        if s.points.len() != s.levels.len() {
            let line = r.line_of("levels");
            r.err(line, "[fdd] need one level per point".into());
        }
        if s.levels.iter().chain(&s.marginals).any(|x| !(*x > 0.0 && x.is_finite())) {
            let line = r.line_of("levels");
            r.err(line, "[fdd] levels must be positive".into());
        }
        r.finish();
        s
    };
    let extremal = {
        let mut r = Reader::new(section("extremal", &mut errs, false), &mut errs);
        let s = ExtremalSection {
            n: r.f64s("n", Some(vec![8.0, 16.0, 32.0])).unwrap_or_default(),
            a: r.f64s("a", Some(vec![4.0, 8.0, 16.0])).unwrap_or_default(),
            tau: r.f64("tau", Some(0.0)).unwrap_or(0.0),
            margin: r.f64("margin", Some(1.0)).unwrap_or(1.0),
        };
        if s.n.is_empty() || s.n.windows(2).any(|w| w[0] >= w[1]) || s.n[0] <= 0.0 {
            let line = r.line_of("n");
            r.err(line, "[extremal] n must be positive and increasing".into());
        }
        if s.a.is_empty() || s.a.windows(2).any(|w| w[0] >= w[1]) || s.a[0] < 0.0 {
            let line = r.line_of("a");
            r.err(line, "[extremal] a must be nonnegative and increasing".into());
        }
        if !(s.margin >= 0.0 && s.tau.is_finite()) {
            let line = r.sec.line;
            r.err(line, "[extremal] margin must be nonnegative and tau finite".into());
        }
        r.finish();
        s
    };
    let refine = {
        let mut r = Reader::new(section("refine", &mut errs, false), &mut errs);
        let s = RefineSection {
            levels: r.u64("levels", Some(4)).unwrap_or(4) as u32,
            n: r.f64("n", Some(4.0)).unwrap_or(4.0),
        };
        if s.levels > 12 || !(s.n > 0.0) {
            let line = r.sec.line;
            r.err(line, "[refine] levels must be at most 12 and n positive".into());
        }
        r.finish();
        s
    };
    let axioms = {
        let mut r = Reader::new(section("axioms", &mut errs, false), &mut errs);
        let s = AxiomsSection {
            corpus: r.u64("corpus", Some(500)).unwrap_or(500) as usize,
            shift_range: r.u64("shift_range", Some(2)).unwrap_or(2) as i64,
            scales: r.f64s("scales", Some(vec![0.5, 1.0, 2.0])).unwrap_or_default(),
        };
        if s.scales.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            let line = r.line_of("scales");
            r.err(line, "[axioms] scales must be positive".into());
        }
        r.finish();
        s
    };
    let tail_measure = {
        let mut r = Reader::new(section("tail_measure", &mut errs, false), &mut errs);
        let s = TailMeasureSection {
            functionals: r.names("functionals", Some(vec![])).unwrap_or_default(),
            eps: r.f64("eps", Some(1.0)).unwrap_or(1.0),
            k0: r.region("k0", Some(Region::Points(vec![vec![0; l]]))).unwrap_or(Region::Cube(0.0)),
            k: r.region("k", Some(Region::Cube(2.0))).unwrap_or(Region::Cube(2.0)),
            shift_radius: r.f64("shift_radius", Some(2.0)).unwrap_or(2.0),
            scale: r.f64("scale", Some(2.0)).unwrap_or(2.0),
        };
        if !(s.eps > 0.0 && s.scale > 0.0 && s.shift_radius >= 0.0) {
            let line = r.sec.line;
            r.err(line, "[tail_measure] eps and scale must be positive".into());
        }
        r.finish();
        s
    };

    // cross-section checks
    let check_names = |list: &[String], sec: &str, errs: &mut Vec<(usize, String)>| {
        for n in list {
            if !functionals.contains_key(n) {
                let line = find(sec).map_or(0, |s| s.line);
                errs.push((line, format!("[{sec}] unknown functional {n:?}")));
            }
        }
    };
    check_names(&identity.functionals, "identity", &mut errs);
    check_names(&tail.spectral_functionals, "tail", &mut errs);
    check_names(&tail.tail_functionals, "tail", &mut errs);
    check_names(&tail_measure.functionals, "tail_measure", &mut errs);

    if let (Some(lat), Some(radius)) = (&lattice, window) {
        let outside = |pts: Vec<Point>, line: usize, what: String, errs: &mut Vec<(usize, String)>| {
            for p in pts {
                if p.len() != lat.dim() {
                    errs.push((line, format!("{what}: point {p:?} has dimension {}, lattice has {}", p.len(), lat.dim())));
                } else if !in_window(lat, radius, &p) {
                    errs.push((line, format!("{what}: point {p:?} lies outside the window of radius {radius}")));
                }
            }
        };
        for (name, f) in &functionals {
            let line = functional_lines[name];
            outside(functional_points(f, lat), line, format!("[functional {name}]"), &mut errs);
        }
        let line = |s: &str| find(s).map_or(0, |x| x.line);
        outside(identity.h.clone(), line("identity"), "[identity] h".into(), &mut errs);
        outside(tail.spectral_h.clone(), line("tail"), "[tail] spectral_h".into(), &mut errs);
        outside(tail.tail_h.clone(), line("tail"), "[tail] tail_h".into(), &mut errs);
        outside(fdd.points.clone(), line("fdd"), "[fdd] points".into(), &mut errs);
        outside(region_points(&tail_measure.k0, lat), line("tail_measure"), "[tail_measure] k0".into(), &mut errs);
    }
    if let Some(m) = &model {
        let alpha = m.alpha();
        for (name, f) in &functionals {
            if let Err(e) = f.validate(alpha) {
                errs.push((functional_lines[name], format!("[functional {name}] {e}")));
            }
        }
    }

    if !errs.is_empty() {
        errs.sort_by_key(|e| e.0);
        return Err(Error::Config(
            errs.into_iter()
                .map(|(line, m)| if line == 0 { m } else { format!("line {line}: {m}") })
                .collect(),
        ));
    }
    Ok(ExperimentConfig {
        model: model.expect("no errors"),
        lattice: lattice_rows.expect("no errors"),
        window: window.expect("no errors"),
        functionals,
        mc,
        output,
        dehaan,
        identity,
        tail,
        fdd,
        extremal,
        refine,
        axioms,
        tail_measure,
    })
}

// ---------------------------------------------------------------------------
// serialisation

fn fmt_f64s(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn fmt_point(p: &[i64]) -> String {
    p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn fmt_points(v: &[Point]) -> String {
    v.iter().map(|p| fmt_point(p)).collect::<Vec<_>>().join("; ")
}

fn fmt_region(r: &Region) -> String {
    match r {
        Region::Cube(r) => format!("cube {r}"),
        Region::Points(p) => format!("points {}", fmt_points(p)),
    }
}

fn fmt_matrix(rows: &[Vec<f64>]) -> String {
    if rows == Lattice::integer(rows.len()).base_rows().as_slice() {
        return if rows.len() == 1 { "Z".into() } else { format!("Z^{}", rows.len()) };
    }
    rows.iter().map(|r| fmt_f64s(r).replace(", ", " ")).collect::<Vec<_>>().join("; ")
}

fn fmt_functional(out: &mut String, name: &str, f: &FunctionalSpec) {
    let _ = writeln!(out, "[functional {name}]");
    match &f.kind {
        FunctionalKind::IndicatorBox { points, lower, upper } => {
            let _ = writeln!(out, "kind = box\npoints = {}", fmt_points(points));
            let _ = writeln!(out, "lower = {}\nupper = {}", fmt_f64s(lower), fmt_f64s(upper));
        }
        FunctionalKind::ProductPower { points, exponents } => {
            if points.is_empty() && f.tag == Homogeneity::Deg0 {
                let _ = writeln!(out, "kind = one");
            } else {
                let _ = writeln!(out, "kind = product\npoints = {}", fmt_points(points));
                let _ = writeln!(out, "exponents = {}", fmt_f64s(exponents));
            }
        }
        FunctionalKind::SupWindow { region } => {
            let _ = writeln!(out, "kind = sup\nregion = {}", fmt_region(region));
        }
        FunctionalKind::IntegralFI { region } => {
            let m = if f.measure == Measure::Counting { "counting" } else { "volume" };
            let _ = writeln!(out, "kind = integral\nregion = {}\nmeasure = {m}", fmt_region(region));
        }
    }
    let tag = match f.tag {
        Homogeneity::Deg0 => "deg0",
        Homogeneity::DegAlpha => "alpha",
        Homogeneity::General => "general",
    };
    let _ = writeln!(out, "tag = {tag}");
    match &f.normalize {
        Normalizer::None => {}
        Normalizer::Point(p) => {
            let _ = writeln!(out, "normalize = point {}", fmt_point(p));
        }
        Normalizer::Sup(r) => {
            let _ = writeln!(out, "normalize = sup {}", fmt_region(r));
        }
    }
    out.push('\n');
}

/// Writes every field explicitly, so `parse_config(&serialize_config(c)) == c`.
pub fn serialize_config(c: &ExperimentConfig) -> String {
    let mut o = String::new();
    o.push_str("[model]\n");
    match &c.model {
        ModelConfig::BrownResnick(m) => {
            let sign = match m.sign_mode {
                SignMode::PlusOne => "plus_one",
                SignMode::Rademacher => "rademacher",
            };
            let _ = writeln!(
                o,
                "family = power\nsigma = {}\nkappa = {}\nd = {}\nalpha = {}\nsign_mode = {sign}\njitter = {}",
                m.variogram.sigma(),
                m.variogram.kappa(),
                m.d,
                m.alpha,
                m.jitter
            );
        }
        ModelConfig::Synthetic { kind, alpha, d } => {
            match kind {
                SyntheticKind::Singleton => o.push_str("family = singleton\n"),
                SyntheticKind::Geometric { rho } => {
                    let _ = writeln!(o, "family = geometric\nrho = {rho}");
                }
                SyntheticKind::Constant { law } => {
                    let levels = match law {
                        ConstantLaw::Unit => "unit".to_string(),
                        ConstantLaw::TwoPoint(lo, hi) => format!("{lo}, {hi}"),
                    };
                    let _ = writeln!(o, "family = constant\nlevels = {levels}");
                }
            }
            let _ = writeln!(o, "d = {d}\nalpha = {alpha}");
        }
    }
    let _ = writeln!(o, "\n[lattice]\nmatrix = {}\n", fmt_matrix(&c.lattice));
    let _ = writeln!(o, "[window]\nradius = {}\n", c.window);
    for (name, f) in &c.functionals {
        fmt_functional(&mut o, name, f);
    }
    let m = &c.mc;
    let _ = writeln!(o, "[mc]\nseed = {}\nreps = {}\nworkers = {}\nz_crit = {}\n", m.seed, m.reps, m.workers, m.z_crit);
    let _ = writeln!(o, "[output]\ndir = {}\n", c.output);
    let dh = &c.dehaan;
    let _ = writeln!(
        o,
        "[simulate]\nepsilon = {}\nmax_terms = {}\nquantile_probes = {}\nmin_terms = {}\n",
        dh.epsilon, dh.max_terms, dh.quantile_probes, dh.min_terms
    );
    let i = &c.identity;
    let against = match i.against {
        IdentityPartner::RandomShift => "random_shift",
        IdentityPartner::SelfCopy => "self",
    };
    let _ = writeln!(
        o,
        "[identity]\nh = {}\nfunctionals = {}\nagainst = {against}\nshift_radius = {}\n",
        fmt_points(&i.h),
        i.functionals.join(", "),
        i.shift_radius
    );
    let t = &c.tail;
    let _ = writeln!(
        o,
        "[tail]\nspectral_h = {}\nspectral_functionals = {}\ntail_h = {}\nx = {}\ntail_functionals = {}\n",
        fmt_points(&t.spectral_h),
        t.spectral_functionals.join(", "),
        fmt_points(&t.tail_h),
        fmt_f64s(&t.x),
        t.tail_functionals.join(", ")
    );
    let f = &c.fdd;
    let _ = writeln!(
        o,
        "[fdd]\npoints = {}\nlevels = {}\nmarginals = {}\n",
        fmt_points(&f.points),
        fmt_f64s(&f.levels),
        fmt_f64s(&f.marginals)
    );
    let e = &c.extremal;
    let _ = writeln!(
        o,
        "[extremal]\nn = {}\na = {}\ntau = {}\nmargin = {}\n",
        fmt_f64s(&e.n),
        fmt_f64s(&e.a),
        e.tau,
        e.margin
    );
    let _ = writeln!(o, "[refine]\nlevels = {}\nn = {}\n", c.refine.levels, c.refine.n);
    let a = &c.axioms;
    let _ = writeln!(
        o,
        "[axioms]\ncorpus = {}\nshift_range = {}\nscales = {}\n",
        a.corpus,
        a.shift_range,
        fmt_f64s(&a.scales)
    );
    let tm = &c.tail_measure;
    let _ = writeln!(
        o,
        "[tail_measure]\nfunctionals = {}\neps = {}\nk0 = {}\nk = {}\nshift_radius = {}\nscale = {}",
        tm.functionals.join(", "),
        tm.eps,
        fmt_region(&tm.k0),
        fmt_region(&tm.k),
        tm.shift_radius,
        tm.scale
    );
    o
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[model]
family = power
sigma = 1
kappa = 1
d = 1
alpha = 1

[lattice]
matrix = Z

[window]
radius = 4
";

    fn errors(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::Config(v)) => v,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_is_valid() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.window, 4.0);
        assert_eq!(c.lattice, vec![vec![1.0]]);
        match c.model {
            ModelConfig::BrownResnick(m) => {
                assert_eq!(m.variogram.kappa(), 1.0);
                assert_eq!(m.sign_mode, SignMode::PlusOne);
            }
            _ => panic!("wrong family"),
        }
    }

    #[test]
    fn kappa_out_of_range() {
        let e = errors(&MINIMAL.replace("kappa = 1", "kappa = 3"));
        assert_eq!(e.len(), 1, "{e:?}");
        assert!(e[0].starts_with("line 4:") && e[0].contains("kappa must lie in (0, 2]"), "{e:?}");
    }

    #[test]
    fn point_outside_window() {
        let text = format!("{MINIMAL}\n[functional far]\nkind = product\npoints = 9\nexponents = 1\n");
        let e = errors(&text);
        assert_eq!(e.len(), 1, "{e:?}");
        assert!(e[0].contains("[9]") && e[0].contains("outside the window"), "{e:?}");
    }

    #[test]
    fn all_errors_are_reported() {
        let text = MINIMAL.replace("kappa = 1", "kappa = 3").replace("radius = 4", "radius = 4\nbogus = 1")
            + "\n[mc]\nreps = 1\n[nonsense]\n";
        let e = errors(&text);
        assert_eq!(e.len(), 4, "{e:?}");
        assert!(e.iter().any(|m| m.contains("unknown key \"bogus\"")));
        assert!(e.iter().any(|m| m.contains("reps must be at least 2")));
        assert!(e.iter().any(|m| m.contains("unknown section [nonsense]")));
    }

    #[test]
    fn missing_sections() {
        let e = errors("[model]\nfamily = singleton\nalpha = 1\n");
        assert!(e.iter().any(|m| m == "missing section [lattice]"));
        assert!(e.iter().any(|m| m == "missing section [window]"));
    }

    #[test]
    fn full_round_trip() {
        let text = "\
[model]
family = power
sigma = 0.5
kappa = 1.5
d = 2
alpha = 2
sign_mode = rademacher

[lattice]
matrix = 2 0; 0.5 1

[window]
radius = 6

[functional box]
kind = box
points = 0 0; 1 0
lower = 0.5, 0.25
upper = inf, 3

[functional ratio]
kind = product
points = 1 0
exponents = 2
normalize = point 0 0

[functional peak]
kind = sup
region = cube 2
normalize = sup cube 4

[functional mass]
kind = integral
region = points 0 0; 1 1
measure = volume

[functional one]
kind = one

[mc]
seed = 99
reps = 500
workers = 3

[identity]
h = 0 0; 1 0
functionals = box, ratio

[tail]
spectral_functionals = ratio, peak
x = 0.75

[extremal]
n = 4, 8
tau = 0.5

[tail_measure]
functionals = mass
k0 = points 0 0; 1 0
k = cube 3
";
        let c = parse_config(text).unwrap();
        assert_eq!(c.functionals.len(), 5);
        assert_eq!(c.functionals["ratio"].tag, Homogeneity::Deg0);
        assert_eq!(c.functionals["box"].tag, Homogeneity::General);
        let s = serialize_config(&c);
        let back = parse_config(&s).unwrap();
        assert_eq!(back, c);
        assert_eq!(serialize_config(&back), s);
    }

    #[test]
    fn synthetic_round_trips() {
        for fam in ["family = singleton", "family = geometric\nrho = 0.5", "family = constant\nlevels = 0.5, 2"] {
            let text = format!("[model]\n{fam}\nalpha = 1.5\n[lattice]\nmatrix = Z^2\n[window]\nradius = 3\n");
            let c = parse_config(&text).unwrap();
            assert_eq!(c.lattice, Lattice::integer(2).base_rows());
            assert_eq!(parse_config(&serialize_config(&c)).unwrap(), c);
        }
    }

    #[test]
    fn unknown_functional_reference() {
        let e = errors(&format!("{MINIMAL}\n[identity]\nfunctionals = nope\n"));
        assert!(e[0].contains("unknown functional \"nope\""), "{e:?}");
    }
}
