//! Experiment runner: binds a parsed config to the checks and writes one
//! CSV per subcommand plus a summary line per test.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rand::distributions::Distribution;

use crate::anchoring::{axiom_check, AnchorMap, AxiomCount};
use crate::config::{parse_config, ExperimentConfig, IdentityPartner, ModelConfig};
use crate::error::{Error, Result};
use crate::extremal::{blocks_estimates, pil_estimates, refinement_study, shift_base_radius, stationary_shift, theta_moment_probe, ExtremalEstimate, Stationarity};
use crate::field::{FieldSample, FieldSampler};
use crate::functional::{FunctionalSpec, Normalizer, Region};
use crate::gaussian::BrownResnick;
use crate::lattice::{Lattice, Point, Window};
use crate::maxstable::{fdd_check, MaxStable};
use crate::mc::{compare, run_replications, ComparisonReport, MCEstimate, McConfig};
use crate::norm::HomogeneousNorm;
use crate::pareto::ParetoAlpha;
use crate::tailfields::{
    check_defining_identity, check_spectral_identity, check_tail_identity, fdd_y_check, fdd_y_single_point,
    tail_measure_estimate, ConstantLaw, LocalField, RandomShift, ShiftLaw, ShiftVariant, SyntheticField,
    SyntheticKind, TailField, TailFunctional, TailMeasure, TailMeasureVariant,
};

const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "homfield", version, about = "Simulate alpha-homogeneous random fields and check their identities by Monte Carlo")]
pub struct Cli {
    /// Experiment config (INI-like).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Blocks,
    Pil,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample the spectral field and check `E ||Z(t)||^alpha`.
    SimulateBr,
    /// de Haan simulation of the max-stable field.
    SimulateMaxstable,
    /// Defining identity of the class: the model against a random shift or a copy.
    CheckIdentity,
    /// Spectral-tail and tail-field identities.
    CheckTail,
    /// Finite-dimensional distributions of the max-stable and tail fields.
    FddCheck,
    /// Extremal index by block maxima and by the local field.
    ExtremalIndex {
        #[arg(long, value_enum, default_value = "both")]
        method: MethodArg,
    },
    /// Block estimates on successively refined lattices.
    RefineStudy,
    /// Anchoring-map axioms on a random corpus.
    FunctionalAxioms,
    /// Three estimators of the tail measure.
    TailMeasure,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SimulateBr => "simulate-br",
            Command::SimulateMaxstable => "simulate-maxstable",
            Command::CheckIdentity => "check-identity",
            Command::CheckTail => "check-tail",
            Command::FddCheck => "fdd-check",
            Command::ExtremalIndex { .. } => "extremal-index",
            Command::RefineStudy => "refine-study",
            Command::FunctionalAxioms => "functional-axioms",
            Command::TailMeasure => "tail-measure",
        }
    }

    /// Every subcommand, with `--method both` for the extremal index.
    pub fn all() -> [Command; 9] {
        [
            Command::SimulateBr,
            Command::SimulateMaxstable,
            Command::CheckIdentity,
            Command::CheckTail,
            Command::FddCheck,
            Command::ExtremalIndex { method: MethodArg::Both },
            Command::RefineStudy,
            Command::FunctionalAxioms,
            Command::TailMeasure,
        ]
    }
}

/// Result of one subcommand: the CSV body, human-readable summary lines and
/// the failed hard assertions.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: &'static str,
    pub csv: String,
    pub summary: Vec<String>,
    pub failures: Vec<String>,
}

impl RunReport {
    fn new(command: &'static str, columns: &str, cfg: &ExperimentConfig) -> Self {
        let mut csv = String::new();
        let _ = writeln!(csv, "# homfield {command} schema v{SCHEMA_VERSION}");
        let _ = writeln!(csv, "# seed={} reps={}", cfg.mc.seed, cfg.mc.reps);
        let _ = writeln!(csv, "{columns}");
        Self {
            command,
            csv,
            summary: vec![],
            failures: vec![],
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn assert(&mut self, ok: bool, what: String) {
        if !ok {
            self.failures.push(what);
        }
    }

    fn comparison(&mut self, id: &str, r: &ComparisonReport) {
        let _ = writeln!(
            self.csv,
            "{id},{},{},{},{},{},{}",
            r.lhs.mean, r.lhs.se, r.rhs.mean, r.rhs.se, r.z, r.pass
        );
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        self.summary.push(format!("{id} {verdict} z={:.2}", r.z));
        if !r.pass {
            self.failures.push(format!("{id}: z = {:.3} exceeds {}", r.z, r.z_crit));
        }
    }

    fn comment(&mut self, line: &str) {
        let _ = writeln!(self.csv, "# {line}");
    }
}

const IDENTITY_COLUMNS: &str = "test_id,lhs_mean,lhs_se,rhs_mean,rhs_se,z,pass";
const EXTREMAL_COLUMNS: &str = "method,lattice_delta,n_or_a,estimate,se,reps";

fn mc_of(cfg: &ExperimentConfig) -> McConfig {
    McConfig::new(cfg.mc.seed, cfg.mc.reps).with_workers(cfg.mc.workers)
}

fn norm_of(m: &ModelConfig) -> HomogeneousNorm {
    HomogeneousNorm::AlphaSum { alpha: m.alpha(), d: m.d() }
}

/// Spectral sampler of the configured model on `w`.
pub fn spectral_sampler(cfg: &ExperimentConfig, w: Arc<Window>) -> Result<Arc<dyn FieldSampler>> {
    Ok(match &cfg.model {
        ModelConfig::BrownResnick(m) => Arc::new(BrownResnick::new(*m, w)?),
        ModelConfig::Synthetic { kind, alpha, .. } => Arc::new(SyntheticField::new(*kind, w, *alpha, norm_of(&cfg.model))?),
    })
}

/// `E ||Z(0)||^alpha` in closed form.
fn origin_moment(m: &ModelConfig) -> f64 {
    match m {
        ModelConfig::Synthetic { kind: SyntheticKind::Constant { law: ConstantLaw::TwoPoint(lo, hi) }, alpha, .. } => {
            0.5 * (lo.powf(*alpha) + hi.powf(*alpha))
        }
        _ => 1.0,
    }
}

/// Local field of the model: direct when `||Z(0)|| = 1` surely, weighted otherwise.
pub fn local_field(cfg: &ExperimentConfig, w: Arc<Window>) -> Result<LocalField> {
    let z = spectral_sampler(cfg, w)?;
    Ok(match cfg.model {
        ModelConfig::Synthetic { kind: SyntheticKind::Constant { law: ConstantLaw::TwoPoint(..) }, .. } => {
            LocalField::weighted(z)
        }
        _ => LocalField::direct(z),
    })
}

fn window(lattice: &Arc<Lattice>, r: f64) -> Result<Arc<Window>> {
    Ok(Arc::new(Window::centered(lattice.clone(), r)?))
}

fn unit(l: usize, i: usize) -> Point {
    let mut p = vec![0; l];
    p[i] = 1;
    p
}

fn fmt_point(p: &[i64]) -> String {
    p.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

fn named(cfg: &ExperimentConfig, names: &[String], defaults: Vec<(String, FunctionalSpec)>) -> Result<Vec<(String, FunctionalSpec)>> {
    if names.is_empty() {
        return Ok(defaults);
    }
    names.iter().map(|n| Ok((n.clone(), cfg.functional(n)?.clone()))).collect()
}

fn default_identity_panel(l: usize) -> Vec<(String, FunctionalSpec)> {
    let (o, e) = (vec![0; l], unit(l, 0));
    vec![
        ("box".into(), FunctionalSpec::indicator_box(vec![o.clone(), e.clone()], vec![0.5, 0.5], vec![f64::INFINITY, 2.0])),
        ("power".into(), FunctionalSpec::product_power(vec![e], vec![0.5])),
        ("sup".into(), FunctionalSpec::sup_window(Region::Cube(1.0))),
    ]
}

fn default_spectral_panel(l: usize) -> Vec<(String, FunctionalSpec)> {
    let (o, e) = (vec![0; l], unit(l, 0));
    vec![
        ("ratio".into(), FunctionalSpec::product_power(vec![e.clone()], vec![1.0]).normalized(Normalizer::Point(o.clone()))),
        (
            "box".into(),
            FunctionalSpec::indicator_box(vec![o, e], vec![0.5, 0.5], vec![f64::INFINITY, f64::INFINITY])
                .normalized(Normalizer::Sup(Region::Cube(1.0))),
        ),
        ("one".into(), FunctionalSpec::constant_one()),
    ]
}

fn default_tail_panel(l: usize) -> Vec<(String, FunctionalSpec)> {
    vec![
        ("one".into(), FunctionalSpec::constant_one()),
        ("indicator".into(), FunctionalSpec::exceedance(vec![unit(l, 0)], vec![1.0])),
    ]
}

fn default_tail_measure_panel(l: usize) -> Vec<(String, FunctionalSpec)> {
    let (o, e) = (vec![0; l], unit(l, 0));
    vec![
        ("origin".into(), FunctionalSpec::exceedance(vec![o.clone()], vec![1.0])),
        ("pair".into(), FunctionalSpec::exceedance(vec![o.clone(), e.clone()], vec![1.0, 0.5])),
        ("band".into(), FunctionalSpec::indicator_box(vec![o], vec![1.0], vec![3.0])),
    ]
}

/// Runs one subcommand on a validated config.
pub fn run(cfg: &ExperimentConfig, cmd: Command) -> Result<RunReport> {
    match cmd {
        Command::SimulateBr => simulate_br(cfg),
        Command::SimulateMaxstable => simulate_maxstable(cfg),
        Command::CheckIdentity => check_identity(cfg),
        Command::CheckTail => check_tail(cfg),
        Command::FddCheck => fdd(cfg),
        Command::ExtremalIndex { method } => extremal_index(cfg, method),
        Command::RefineStudy => refine_study(cfg),
        Command::FunctionalAxioms => functional_axioms(cfg),
        Command::TailMeasure => tail_measure(cfg),
    }
}

fn simulate_br(cfg: &ExperimentConfig) -> Result<RunReport> {
    let lattice = cfg.lattice()?;
    let w = window(&lattice, cfg.window)?;
    let z = spectral_sampler(cfg, w.clone())?;
    let l = lattice.dim();
    let d = cfg.model.d();
    let coords: Vec<String> = (0..l).map(|i| format!("t{i}")).collect();
    let comps: Vec<String> = (0..d).map(|i| format!("z{i}")).collect();
    let mut rep = RunReport::new("simulate-br", &format!("rep_id,{},{},norm", coords.join(","), comps.join(",")), cfg);
    let mc = mc_of(cfg);
    let samples = run_replications(&mc, "simulate", |rng, _| z.sample(rng))?;
    let alpha = z.alpha();
    for (k, s) in samples.iter().enumerate() {
        for i in 0..w.len() {
            let vals: Vec<String> = s.value(i).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(rep.csv, "{k},{},{},{}", w.coord(i).iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","), vals.join(","), s.norms()[i]);
        }
    }
    let is_br = matches!(cfg.model, ModelConfig::BrownResnick(_));
    for i in 0..w.len() {
        let x: Vec<f64> = samples.iter().map(|s| s.norms()[i].powf(alpha)).collect();
        let e = MCEstimate::from_values(&x)?;
        let t = fmt_point(w.coord(i));
        if is_br {
            let r = compare(e, MCEstimate::new(1.0, 0.0, e.reps), cfg.mc.z_crit);
            let verdict = if r.pass { "PASS" } else { "FAIL" };
            rep.summary.push(format!("spectral-normalisation t={t} mean={:.4} se={:.4} {verdict} z={:.2}", e.mean, e.se, r.z));
            rep.assert(r.pass, format!("E ||Z({t})||^alpha = {} (se {}) differs from 1", e.mean, e.se));
        } else {
            rep.summary.push(format!("spectral-moment t={t} mean={:.4} se={:.4}", e.mean, e.se));
        }
    }
    Ok(rep)
}

fn simulate_maxstable(cfg: &ExperimentConfig) -> Result<RunReport> {
    let lattice = cfg.lattice()?;
    let w = window(&lattice, cfg.window)?;
    let z = spectral_sampler(cfg, w.clone())?;
    let l = lattice.dim();
    let coords: Vec<String> = (0..l).map(|i| format!("t{i}")).collect();
    let mut rep = RunReport::new("simulate-maxstable", &format!("rep_id,{},x,terms_used,truncated", coords.join(",")), cfg);
    let ms = MaxStable::new(z, cfg.dehaan, cfg.mc.seed)?;
    rep.comment(&format!("q_hat={}", ms.q_hat()));
    let mc = mc_of(cfg);
    let sims = run_replications(&mc, "maxstable", |rng, _| ms.simulate(rng))?;
    for (k, (x, diag)) in sims.iter().enumerate() {
        for i in 0..w.len() {
            let t = w.coord(i).iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
            let _ = writeln!(rep.csv, "{k},{t},{},{},{}", x.values()[i], diag.terms_used, diag.truncated);
        }
    }
    let truncated = sims.iter().filter(|s| s.1.truncated).count();
    rep.summary.push(format!("dehaan-truncation truncated={truncated} of {}", sims.len()));
    rep.assert(truncated == 0, format!("{truncated} replications hit max_terms"));
    let o = w.origin_index().expect("centered window");
    let alpha = cfg.model.alpha();
    let m0 = origin_moment(&cfg.model);
    for &x in &cfg.fdd.marginals {
        let hits: Vec<f64> = sims.iter().map(|s| (s.0.values()[o] <= x) as u8 as f64).collect();
        let e = MCEstimate::from_values(&hits)?;
        let exact = (-m0 * x.powf(-alpha)).exp();
        let r = compare(e, MCEstimate::new(exact, 0.0, e.reps), cfg.mc.z_crit);
        rep.summary.push(format!(
            "frechet-marginal x={x} p_hat={:.4} exact={exact:.4} {} z={:.2}",
            e.mean,
            if r.pass { "PASS" } else { "FAIL" },
            r.z
        ));
        rep.assert(r.pass, format!("P(X(0) <= {x}) = {} vs {exact}", e.mean));
    }
    Ok(rep)
}

fn check_identity(cfg: &ExperimentConfig) -> Result<RunReport> {
    let lattice = cfg.lattice()?;
    let l = lattice.dim();
    let out = window(&lattice, cfg.window)?;
    let z = spectral_sampler(cfg, out.clone())?;
    let mut rep = RunReport::new("check-identity", IDENTITY_COLUMNS, cfg);
    let mc = mc_of(cfg);
    let panel = named(cfg, &cfg.identity.functionals, default_identity_panel(l))?;
    let partner: Arc<dyn FieldSampler> = match cfg.identity.against {
        IdentityPartner::SelfCopy => z.clone(),
        IdentityPartner::RandomShift => {
            let r = cfg.identity.shift_radius;
            let law = ShiftLaw::uniform_box(&lattice, -r, r)?;
            let base_r = RandomShift::<Arc<dyn FieldSampler>>::required_base_radius(&out, &law);
            let base = spectral_sampler(cfg, window(&lattice, base_r)?)?;
            Arc::new(RandomShift::new(base, law, ShiftVariant::Sum, out.clone())?)
        }
    };
    let partner_name = match cfg.identity.against {
        IdentityPartner::SelfCopy => "copy",
        IdentityPartner::RandomShift => "shift",
    };
    for h in &cfg.identity.h {
        for (name, f) in &panel {
            let id = format!("defining-identity h={} F={name} vs={partner_name}", fmt_point(h));
            let r = check_defining_identity(&partner, &z, f, h, &mc, cfg.mc.z_crit, &id)?;
            rep.comparison(&id, &r);
        }
    }
    Ok(rep)
}

fn check_tail(cfg: &ExperimentConfig) -> Result<RunReport> {
    let lattice = cfg.lattice()?;
    let l = lattice.dim();
    let w = window(&lattice, cfg.window)?;
    let theta = local_field(cfg, w)?;
    let mut rep = RunReport::new("check-tail", IDENTITY_COLUMNS, cfg);
    let mc = mc_of(cfg);
    let spectral = named(cfg, &cfg.tail.spectral_functionals, default_spectral_panel(l))?;
    for h in &cfg.tail.spectral_h {
        for (name, g) in &spectral {
            let id = format!("spectral-tail h={} G={name}", fmt_point(h));
            let r = check_spectral_identity(&theta, g, h, &mc, cfg.mc.z_crit, &id)?;
            rep.comparison(&id, &r);
        }
    }
    let y = TailField::new(theta)?;
    let tail = named(cfg, &cfg.tail.tail_functionals, default_tail_panel(l))?;
    for h in &cfg.tail.tail_h {
        for &x in &cfg.tail.x {
            for (name, g) in &tail {
                let id = format!("tail-shift h={} x={x} G={name}", fmt_point(h));
                let r = check_tail_identity(&y, g, h, x, &mc, cfg.mc.z_crit, &id)?;
                rep.comparison(&id, &r);
            }
        }
    }
    Ok(rep)
}

fn fdd(cfg: &ExperimentConfig) -> Result<RunReport> {
    let lattice = cfg.lattice()?;
    let w = window(&lattice, cfg.window)?;
    let mut rep = RunReport::new("fdd-check", IDENTITY_COLUMNS, cfg);
    let mc = mc_of(cfg);
    let pts = &cfg.fdd.points;
    let levels = &cfg.fdd.levels;
    let label = pts.iter().map(|p| fmt_point(p)).collect::<Vec<_>>().join(";");
    let ms = MaxStable::new(spectral_sampler(cfg, w.clone())?, cfg.dehaan, cfg.mc.seed)?;
    let id = format!("maxstable-fdd points={label}");
    let r = fdd_check(&ms, pts, levels, &mc, &mc, cfg.mc.z_crit, &id)?;
    rep.comparison(&id, &r);
    let theta = local_field(cfg, w)?;
    let id = format!("tail-fdd points={label}");
    let r = fdd_y_check(&theta, pts, levels, &mc, cfg.mc.z_crit, &id)?;
    rep.comparison(&id, &r);
    let o = vec![0; lattice.dim()];
    let alpha = cfg.model.alpha();
    for &x in &cfg.fdd.marginals {
        let id = format!("tail-fdd-origin x={x}");
        let r = fdd_y_check(&theta, &[o.clone()], &[x], &mc, cfg.mc.z_crit, &id)?;
        // the theta side is exact at the origin; compare the simulated side with the closed form
        let exact = fdd_y_single_point(x, alpha);
        let exact_ok = (r.rhs.mean - exact).abs() <= 1e-12;
        rep.assert(exact_ok, format!("{id}: theta side {} differs from 1 - x^-alpha = {exact}", r.rhs.mean));
        let c = compare(r.lhs, MCEstimate::new(exact, 0.0, r.lhs.reps), cfg.mc.z_crit);
        rep.comparison(&id, &c);
    }
    Ok(rep)
}

fn write_extremal(rep: &mut RunReport, e: &ExtremalEstimate) {
    let _ = writeln!(
        rep.csv,
        "{},{},{},{},{},{}",
        e.method.name(),
        e.lattice_delta,
        e.method.size(),
        e.value.mean,
        e.value.se,
        e.value.reps
    );
    rep.summary.push(format!(
        "extremal-index method={} size={} estimate={:.4} se={:.4}",
        e.method.name(),
        e.method.size(),
        e.value.mean,
        e.value.se
    ));
}

fn stationary_maker(cfg: &ExperimentConfig, n: f64) -> impl Fn(Arc<Window>) -> Result<Arc<dyn FieldSampler>> + '_ {
    let m = cfg.extremal.margin * n;
    move |block: Arc<Window>| {
        let lattice = block.lattice().clone();
        let base = spectral_sampler(cfg, Arc::new(Window::centered(lattice, shift_base_radius(n, m))?))?;
        let s: Arc<dyn FieldSampler> = Arc::new(stationary_shift(base, n, m)?);
        Ok(s)
    }
}

/// Block estimates, each block with a shift margin proportional to its side.
fn blocks(cfg: &ExperimentConfig, lattice: &Arc<Lattice>) -> Result<Vec<ExtremalEstimate>> {
    let mc = mc_of(cfg);
    let mut out = vec![];
    for &n in &cfg.extremal.n {
        let st = Stationarity::RandomShift { margin: cfg.extremal.margin * n };
        out.extend(blocks_estimates(|w| spectral_sampler(cfg, w), lattice, &[n], st, &mc)?);
    }
    Ok(out)
}

fn extremal_index(cfg: &ExperimentConfig, method: MethodArg) -> Result<RunReport> {
    let lattice = cfg.lattice()?;
    let mut rep = RunReport::new("extremal-index", EXTREMAL_COLUMNS, cfg);
    let mc = mc_of(cfg);
    let mut b = vec![];
    let mut p = vec![];
    if method != MethodArg::Pil {
        b = blocks(cfg, &lattice)?;
        for e in &b {
            write_extremal(&mut rep, e);
            rep.assert(e.value.mean >= 0.0, format!("negative block estimate at n = {}", e.method.size()));
        }
    }
    if method != MethodArg::Blocks {
        let amax = *cfg.extremal.a.last().expect("validated");
        let theta = local_field(cfg, window(&lattice, amax.max(cfg.window))?)?;
        let tau = cfg.extremal.tau;
        if tau != 0.0 {
            let (pt, m) = theta_moment_probe(&theta, amax, tau, &mc, "pil-moment")?;
            rep.comment(&format!("moment probe tau={tau}: max E||Theta(s)||^tau = {} (se {}) at s = {pt:?}", m.mean, m.se));
            rep.summary.push(format!("theta-moment tau={tau} max={:.4} se={:.4}", m.mean, m.se));
        }
        p = pil_estimates(&theta, &cfg.extremal.a, tau, &mc, "pil")?;
        let delta = lattice.delta();
        for e in &p {
            write_extremal(&mut rep, e);
            if tau == 0.0 {
                rep.assert(
                    e.value.mean >= 0.0 && e.value.mean <= 1.0 / delta + 1e-12,
                    format!("pil estimate {} outside [0, 1/Delta]", e.value.mean),
                );
            }
        }
        if tau == 0.0 {
            let mono = p.windows(2).all(|w| w[1].value.mean <= w[0].value.mean);
            rep.summary.push(format!("pil-monotone-in-a {}", if mono { "PASS" } else { "FAIL" }));
            rep.assert(mono, "pil estimates increase with the cube radius".into());
        }
    }
    if let (Some(bl), Some(pl)) = (b.last(), p.last()) {
        // finite-n and finite-a biases are not corrected, so this is reported, not asserted
        let r = compare(bl.value, pl.value, cfg.mc.z_crit);
        rep.comment(&format!("blocks n={} vs pil a={}: z = {}", bl.method.size(), pl.method.size(), r.z));
        rep.summary.push(format!("blocks-vs-pil n={} a={} z={:.2}", bl.method.size(), pl.method.size(), r.z));
    }
    Ok(rep)
}

fn refine_study(cfg: &ExperimentConfig) -> Result<RunReport> {
    let lattice = cfg.lattice()?;
    let mut rep = RunReport::new("refine-study", EXTREMAL_COLUMNS, cfg);
    let n = cfg.refine.n;
    let make = stationary_maker(cfg, n);
    let st = refinement_study(make, &lattice, cfg.refine.levels, n, &mc_of(cfg))?;
    for r in &st.rows {
        let _ = writeln!(rep.csv, "per-site,{},{n},{},{},{}", r.delta, r.per_site.mean, r.per_site.se, r.per_site.reps);
        let _ = writeln!(rep.csv, "normalized,{},{n},{},{},{}", r.delta, r.normalized.mean, r.normalized.se, r.normalized.reps);
        rep.summary.push(format!(
            "refinement level={} delta={} normalized={:.4} se={:.4}",
            r.level, r.delta, r.normalized.mean, r.normalized.se
        ));
    }
    let change = st.last_change().unwrap_or(f64::NAN);
    let ok = st.converged(0.1) || st.rows.len() < 2;
    rep.comment(&format!("relative change between the last two levels: {change}"));
    rep.summary.push(format!("refinement-convergence change={change:.4} {}", if ok { "PASS" } else { "FAIL" }));
    rep.assert(ok, format!("normalized estimate changed by {change} between the last two levels"));
    Ok(rep)
}

/// `R Z` with `R` Pareto, one per corpus entry.
fn axiom_corpus(cfg: &ExperimentConfig) -> Result<Vec<FieldSample>> {
    let lattice = cfg.lattice()?;
    let z = spectral_sampler(cfg, window(&lattice, cfg.window)?)?;
    let pareto = ParetoAlpha::new(z.alpha())?;
    let mc = McConfig::new(cfg.mc.seed, cfg.axioms.corpus.max(2)).with_workers(cfg.mc.workers);
    let mut v = run_replications(&mc, "axiom-corpus", |rng, _| {
        let s = z.sample(rng)?;
        Ok(s.scaled(pareto.sample(rng)))
    })?;
    v.truncate(cfg.axioms.corpus);
    Ok(v)
}

fn axiom_shifts(l: usize, range: i64) -> Vec<Point> {
    let side = (2 * range + 1) as usize;
    let mut out = vec![];
    for k in 0..side.pow(l as u32) {
        let mut rest = k;
        let p: Point = (0..l)
            .map(|_| {
                let c = (rest % side) as i64 - range;
                rest /= side;
                c
            })
            .collect();
        if p.iter().any(|&c| c != 0) {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn functional_axioms(cfg: &ExperimentConfig) -> Result<RunReport> {
    let lattice = cfg.lattice()?;
    let mut rep = RunReport::new("functional-axioms", "map,axiom,checked,passed,failed", cfg);
    let corpus = axiom_corpus(cfg)?;
    let shifts = axiom_shifts(lattice.dim(), cfg.axioms.shift_range);
    for map in [AnchorMap::InfArgSup, AnchorMap::FirstExceedance] {
        let r = axiom_check(map, &corpus, &shifts, &cfg.axioms.scales)?;
        let rows: [(&str, AxiomCount); 5] = [
            ("A1", r.a1),
            ("A2", r.a2),
            ("A2-strict", r.a2_strict),
            ("A3", r.a3),
            ("0-homogeneity", r.homogeneity),
        ];
        for (name, c) in rows {
            let _ = writeln!(rep.csv, "{},{name},{},{},{}", map.name(), c.checked, c.passed, c.failed());
            rep.summary.push(format!("axiom map={} {name} checked={} failed={}", map.name(), c.checked, c.failed()));
        }
        for w in &r.witnesses {
            rep.comment(&format!("witness: {w}"));
        }
        if r.skipped_shifts > 0 {
            rep.comment(&format!("{}: {} shifted windows lost the origin and were skipped", map.name(), r.skipped_shifts));
        }
        let name = map.name();
        rep.assert(r.a1.all_pass(), format!("{name} fails A1 {} times", r.a1.failed()));
        rep.assert(r.a2.all_pass(), format!("{name} fails A2 {} times", r.a2.failed()));
        match map {
            AnchorMap::InfArgSup => {
                rep.assert(r.a3.all_pass(), format!("{name} fails A3 {} times", r.a3.failed()));
                rep.assert(r.homogeneity.all_pass(), format!("{name} fails 0-homogeneity {} times", r.homogeneity.failed()));
            }
            AnchorMap::FirstExceedance => {
                rep.assert(
                    r.homogeneity.failed() > 0,
                    format!("{name}: no 0-homogeneity counterexample in the corpus"),
                );
            }
        }
    }
    Ok(rep)
}

fn tail_measure(cfg: &ExperimentConfig) -> Result<RunReport> {
    let lattice = cfg.lattice()?;
    let l = lattice.dim();
    let w = window(&lattice, cfg.window)?;
    let z = spectral_sampler(cfg, w.clone())?;
    let theta = local_field(cfg, w)?;
    let mut rep = RunReport::new("tail-measure", IDENTITY_COLUMNS, cfg);
    let mc = mc_of(cfg);
    let tm = &cfg.tail_measure;
    let r = tm.shift_radius;
    let law = ShiftLaw::uniform_box(&lattice, -r, r)?;
    let alpha = cfg.model.alpha();
    let estimate = |h: &FunctionalSpec, v: TailMeasureVariant, bank: &str| -> Result<MCEstimate> {
        let tf = TailFunctional { h: h.clone(), eps: tm.eps, k0: tm.k0.clone() };
        let spec = TailMeasure { h: &tf, window_k: tm.k.clone(), shift: Some(law.clone()) };
        match v {
            TailMeasureVariant::Direct => tail_measure_estimate(z.as_ref(), &spec, v, &mc, bank),
            _ => tail_measure_estimate(&theta, &spec, v, &mc, bank),
        }
    };
    let variants = [
        ("direct", TailMeasureVariant::Direct),
        ("exceedance-count", TailMeasureVariant::Bizha),
        ("shifted-local", TailMeasureVariant::ThetaShift),
    ];
    let panel = named(cfg, &tm.functionals, default_tail_measure_panel(l))?;
    for (name, h) in &panel {
        let e: Vec<MCEstimate> = variants
            .iter()
            .map(|(vn, v)| estimate(h, *v, &format!("tail-measure/{name}/{vn}")))
            .collect::<Result<_>>()?;
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let id = format!("tail-measure H={name} {} vs {}", variants[i].0, variants[j].0);
            rep.comparison(&id, &compare(e[i], e[j], cfg.mc.z_crit));
        }
    }
    let o = vec![0; l];
    let m0 = origin_moment(&cfg.model);
    let unit_exc = FunctionalSpec::exceedance(vec![o.clone()], vec![tm.eps]);
    let e = estimate(&unit_exc, TailMeasureVariant::Direct, "tail-measure/normalisation")?;
    let exact = m0 * tm.eps.powf(-alpha);
    let id = format!("tail-measure-normalisation threshold={}", tm.eps);
    rep.comparison(&id, &compare(e, MCEstimate::new(exact, 0.0, e.reps), cfg.mc.z_crit));
    let c = tm.scale;
    let scaled_exc = FunctionalSpec::exceedance(vec![o], vec![c * tm.eps]);
    let e = estimate(&scaled_exc, TailMeasureVariant::Direct, "tail-measure/homogeneity")?;
    let id = format!("tail-measure-homogeneity threshold={}", c * tm.eps);
    rep.comparison(&id, &compare(e, MCEstimate::new(exact * c.powf(-alpha), 0.0, e.reps), cfg.mc.z_crit));
    Ok(rep)
}

/// Applies the command-line overrides to a parsed config.
pub fn apply_overrides(cfg: &mut ExperimentConfig, cli: &Cli) -> Result<()> {
    if let Some(s) = cli.seed {
        cfg.mc.seed = s;
    }
    if let Some(r) = cli.reps {
        if r < 2 {
            return Err(Error::usage("--reps must be at least 2"));
        }
        cfg.mc.reps = r;
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::usage("--workers must be positive"));
        }
        cfg.mc.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.display().to_string();
    }
    Ok(())
}

/// Writes `<dir>/<command>.csv` and returns its path.
pub fn write_report(rep: &RunReport, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.csv", rep.command));
    std::fs::write(&path, &rep.csv)?;
    Ok(path)
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let Some(path) = &cli.config else {
        eprintln!("error: --config PATH is required");
        return 2;
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return 2;
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    if let Err(e) = apply_overrides(&mut cfg, &cli) {
        eprintln!("{e}");
        return 2;
    }
    let rep = match run(&cfg, cli.command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("FAILED {}: {e}", cli.command.name());
            return 1;
        }
    };
    for s in &rep.summary {
        println!("{s}");
    }
    match write_report(&rep, Path::new(&cfg.output)) {
        Ok(p) => println!("wrote {}", p.display()),
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    }
    if rep.passed() {
        0
    } else {
        for f in &rep.failures {
            eprintln!("FAILED {}: {f}", rep.command);
        }
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(model: &str, extra: &str) -> ExperimentConfig {
        let text = format!("[model]\n{model}\n[lattice]\nmatrix = Z\n[window]\nradius = 4\n[mc]\nreps = 2000\n{extra}");
        parse_config(&text).unwrap()
    }

    const BR: &str = "family = power\nsigma = 1\nkappa = 1\nd = 1\nalpha = 1";

    #[test]
    fn shifts_exclude_the_origin() {
        let s = axiom_shifts(2, 1);
        assert_eq!(s.len(), 8);
        assert!(!s.contains(&vec![0, 0]));
    }

    #[test]
    fn identity_against_a_copy_passes() {
        let c = config(BR, "[identity]\nagainst = self\nh = 0; 1\n");
        let r = run(&c, Command::CheckIdentity).unwrap();
        assert!(r.passed(), "{:?}", r.failures);
        assert_eq!(r.summary.len(), 6);
        assert!(r.summary[0].starts_with("defining-identity h=0 F=box vs=copy PASS"));
        assert!(r.csv.lines().nth(2).unwrap() == IDENTITY_COLUMNS);
    }

    #[test]
    fn singleton_extremal_index_both_methods() {
        let c = config("family = singleton\nalpha = 1", "[extremal]\nn = 8, 16\na = 2, 4\n");
        let r = run(&c, Command::ExtremalIndex { method: MethodArg::Both }).unwrap();
        assert!(r.passed(), "{:?}", r.failures);
        let rows: Vec<Vec<String>> = r
            .csv
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            let v: f64 = row[3].parse().unwrap();
            assert!((v - 1.0).abs() < 0.2, "{row:?}");
        }
        assert_eq!(rows[2][3], "1");
    }

    #[test]
    fn runs_are_deterministic_across_workers() {
        let mut c = config(BR, "[axioms]\ncorpus = 50\n[refine]\nlevels = 2\nn = 2\n[extremal]\nn = 4\na = 2\n[simulate]\nquantile_probes = 1000\n");
        c.mc.reps = 200;
        for cmd in Command::all() {
            let a = run(&c, cmd).unwrap();
            c.mc.workers = 4;
            let b = run(&c, cmd).unwrap();
            c.mc.workers = 1;
            assert_eq!(a.csv, b.csv, "{}", cmd.name());
        }
    }

    #[test]
    fn cli_parses_flags() {
        let cli = Cli::try_parse_from(["homfield", "extremal-index", "--method", "pil", "--config", "x.ini", "--seed", "3", "--workers", "8"]).unwrap();
        assert_eq!(cli.command, Command::ExtremalIndex { method: MethodArg::Pil });
        assert_eq!(cli.seed, Some(3));
        assert_eq!(cli.workers, Some(8));
        assert!(Cli::try_parse_from(["homfield", "extremal-index", "--method", "nope"]).is_err());
    }
}
