//! de Haan simulation of max-stable fields and checks of their
//! finite-dimensional and supremum distributions.

use std::sync::Arc;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::field::{FieldSample, FieldSampler};
use crate::lattice::{Lattice, Point, Window};
use crate::mc::{compare, run_replications, stream_rng, bank_tag, ComparisonReport, MCEstimate, McConfig, StreamRng};
use crate::norm::HomogeneousNorm;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeHaanConfig {
    /// Relative truncation tolerance in `(0, 1)`.
    pub epsilon: f64,
    pub max_terms: usize,
    /// Draws used to pre-estimate the 0.9999 quantile of `sup ||Z||`.
    pub quantile_probes: usize,
    /// Terms always generated before the stopping rule is consulted.
    pub min_terms: usize,
}

impl Default for DeHaanConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            max_terms: 100_000,
            quantile_probes: 100_000,
            min_terms: 10,
        }
    }
}

impl DeHaanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::usage(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.max_terms == 0 {
            return Err(Error::usage("max_terms must be at least 1"));
        }
        if self.quantile_probes == 0 {
            return Err(Error::usage("quantile_probes must be at least 1"));
        }
        Ok(())
    }
}

/// Per-run record of the truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeHaanDiagnostics {
    pub terms_used: usize,
    /// `Gamma_n^{-1/alpha} Q / min_t X(t)` at the stop.
    pub stopping_margin: f64,
    pub truncated: bool,
}

/// Empirical `p`-quantile of `sup_window ||Z||` over `probes` draws.
pub fn sup_quantile<S: FieldSampler + ?Sized>(spectral: &S, probes: usize, p: f64, seed: u64) -> Result<f64> {
    if !spectral.is_unweighted() {
        return Err(Error::usage("de Haan simulation needs an unweighted spectral sampler"));
    }
    let tag = bank_tag("dehaan-quantile");
    let mut sups = Vec::with_capacity(probes);
    for i in 0..probes {
        let z = spectral.sample(&mut stream_rng(seed, tag, i as u64))?;
        sups.push(z.norms().iter().fold(0.0f64, |m, v| m.max(*v)));
    }
    sups.sort_by(f64::total_cmp);
    let k = ((p * probes as f64).ceil() as usize).clamp(1, probes) - 1;
    Ok(sups[k])
}

/// Simulates `X(t) = max_i Gamma_i^{-1/alpha} ||Z^(i)(t)||` with the
/// relative stopping rule `Gamma_n^{-1/alpha} q_hat < epsilon min_t X(t)`.
/// The maximum is kept on the log scale; `trace` sees `ln X` after every term.
pub fn dehaan_simulate<S, T>(
    spectral: &S,
    cfg: &DeHaanConfig,
    q_hat: f64,
    rng: &mut StreamRng,
    mut trace: T,
) -> Result<(FieldSample, DeHaanDiagnostics)>
where
    S: FieldSampler + ?Sized,
    T: FnMut(usize, &[f64]),
{
    let alpha = spectral.alpha();
    let window = spectral.window().clone();
    let n = window.len();
    let mut lx = vec![f64::NEG_INFINITY; n];
    let mut lz = vec![0.0f64; n];
    let mut min_lx = f64::NEG_INFINITY;
    let ln_q = q_hat.ln();
    let ln_eps = cfg.epsilon.ln();
    let mut gamma = 0.0f64;
    let mut terms = 0usize;
    let (truncated, ln_margin) = loop {
        gamma += rng.sample::<f64, _>(Exp1);
        let ln_scale = -gamma.ln() / alpha;
        let ln_margin = ln_scale + ln_q - min_lx;
        if terms >= cfg.min_terms && ln_margin < ln_eps {
            break (false, ln_margin);
        }
        if terms >= cfg.max_terms {
            break (true, ln_margin);
        }
        spectral.sample_log_norms(rng, &mut lz)?;
        min_lx = f64::INFINITY;
        for (xi, zi) in lx.iter_mut().zip(&lz) {
            *xi = xi.max(ln_scale + zi);
            min_lx = min_lx.min(*xi);
        }
        terms += 1;
        trace(terms, &lx);
    };
    let x = lx.iter().map(|v| v.exp()).collect();
    let sample = FieldSample::new(window, x, alpha, HomogeneousNorm::Sup { d: 1 })?;
    Ok((
        sample,
        DeHaanDiagnostics {
            terms_used: terms,
            stopping_margin: ln_margin.exp(),
            truncated,
        },
    ))
}

/// A de Haan simulator bound to a spectral sampler and its quantile estimate.
pub struct MaxStable<S> {
    spectral: S,
    cfg: DeHaanConfig,
    q_hat: f64,
}

impl<S: FieldSampler> MaxStable<S> {
    /// Pre-estimates the sup quantile from a dedicated stream of `seed`.
    pub fn new(spectral: S, cfg: DeHaanConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let q_hat = sup_quantile(&spectral, cfg.quantile_probes, 0.9999, seed)?;
        Ok(Self { spectral, cfg, q_hat })
    }

    pub fn q_hat(&self) -> f64 {
        self.q_hat
    }

    pub fn config(&self) -> &DeHaanConfig {
        &self.cfg
    }

    pub fn spectral(&self) -> &S {
        &self.spectral
    }

    pub fn simulate(&self, rng: &mut StreamRng) -> Result<(FieldSample, DeHaanDiagnostics)> {
        dehaan_simulate(&self.spectral, &self.cfg, self.q_hat, rng, |_, _| {})
    }

    pub fn simulate_with_epsilon(&self, epsilon: f64, rng: &mut StreamRng) -> Result<(FieldSample, DeHaanDiagnostics)> {
        let cfg = DeHaanConfig { epsilon, ..self.cfg };
        cfg.validate()?;
        dehaan_simulate(&self.spectral, &cfg, self.q_hat, rng, |_, _| {})
    }
}

fn require_points(w: &Window, pts: &[Point]) -> Result<Vec<usize>> {
    pts.iter()
        .map(|p| {
            w.index_of(p)
                .ok_or_else(|| Error::usage(format!("point {p:?} is outside the window")))
        })
        .collect()
}

/// Monte Carlo estimate of `E max_i ||Z(t_i)||^alpha / x_i^alpha`, which
/// equals `-ln P(X(t_i) <= x_i for all i)`.
pub fn fdd_neglog<S: FieldSampler + ?Sized>(
    spectral: &S,
    points: &[Point],
    x: &[f64],
    mc: &McConfig,
    bank: &str,
) -> Result<MCEstimate> {
    if points.len() != x.len() || points.is_empty() {
        return Err(Error::usage("one level per point is required"));
    }
    if x.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::usage("levels must be positive"));
    }
    if !spectral.is_unweighted() {
        return Err(Error::usage("fdd_neglog needs an unweighted spectral sampler"));
    }
    let idx = require_points(spectral.window(), points)?;
    let alpha = spectral.alpha();
    let v = run_replications(mc, bank, |rng, _| {
        let z = spectral.sample(rng)?;
        Ok(idx
            .iter()
            .zip(x)
            .map(|(&i, xi)| (z.norms()[i] / xi).powf(alpha))
            .fold(0.0f64, f64::max))
    })?;
    MCEstimate::from_values(&v)
}

/// `-ln p_hat` with the delta-method standard error; `None` if `p_hat = 0`.
pub fn neglog_frequency(hits: &[bool]) -> Result<Option<MCEstimate>> {
    let n = hits.len();
    if n < 2 {
        return Err(Error::usage("at least two replications are required"));
    }
    let k = hits.iter().filter(|h| **h).count();
    if k == 0 {
        return Ok(None);
    }
    let p = k as f64 / n as f64;
    let se = ((p * (1.0 - p) / n as f64).sqrt()) / p;
    Ok(Some(MCEstimate::new(-p.ln(), se, n)))
}

/// Compares the empirical `-ln P(X(t_i) <= x_i)` from de Haan simulation
/// with the spectral expectation, on independent banks.
pub fn fdd_check<S: FieldSampler>(
    ms: &MaxStable<S>,
    points: &[Point],
    x: &[f64],
    mc_sim: &McConfig,
    mc_exp: &McConfig,
    z_crit: f64,
    bank: &str,
) -> Result<ComparisonReport> {
    let idx = require_points(ms.spectral().window(), points)?;
    let hits = run_replications(mc_sim, &format!("{bank}/sim"), |rng, _| {
        let (xs, _) = ms.simulate(rng)?;
        Ok(idx.iter().zip(x).all(|(&i, xi)| xs.values()[i] <= *xi))
    })?;
    let lhs = neglog_frequency(&hits)?
        .ok_or_else(|| Error::Numerical("no replication fell below the levels".into()))?;
    let rhs = fdd_neglog(ms.spectral(), points, x, mc_exp, &format!("{bank}/exp"))?;
    Ok(compare(lhs, rhs, z_crit))
}

/// Lattice points of the block `[0, n]^l`.
pub fn block_points(lattice: &Arc<Lattice>, n: f64) -> Result<Vec<Point>> {
    Ok(Window::block(lattice.clone(), n)?.points().map(|p| p.to_vec()).collect())
}

/// One row of the supremum-distribution probe.
#[derive(Debug, Clone, Copy)]
pub struct SupProbeRow {
    pub n: f64,
    /// `-ln P(sup_{[0,n]^l} X <= r n^{l/alpha})`; `None` when no replication qualified.
    pub neglog: Option<MCEstimate>,
    /// `E sup_{[0,n]^l} ||Z||^alpha / (r^alpha n^l)`.
    pub spectral: MCEstimate,
    pub report: Option<ComparisonReport>,
}

/// For each block side `n`, compares the two sides of
/// `-ln P(sup X <= r n^{l/alpha}) = E sup ||Z||^alpha / (r^alpha n^l)`.
/// `make(n)` returns a spectral sampler whose window covers `[0, n]^l`.
pub fn sup_distribution_probe<S, F>(
    make: F,
    lattice: &Arc<Lattice>,
    cfg: &DeHaanConfig,
    n_list: &[f64],
    r: f64,
    mc: &McConfig,
    z_crit: f64,
) -> Result<Vec<SupProbeRow>>
where
    S: FieldSampler,
    F: Fn(f64) -> Result<S>,
{
    if !(r > 0.0) {
        return Err(Error::usage("r must be positive"));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::usage("n_list must be increasing"));
    }
    let l = lattice.dim() as i32;
    let mut rows = vec![];
    for &n in n_list {
        let spectral = make(n)?;
        let alpha = spectral.alpha();
        let idx = require_points(spectral.window(), &block_points(lattice, n)?)?;
        let level = r * n.powf(l as f64 / alpha);
        let ms = MaxStable::new(spectral, *cfg, mc.seed)?;
        let hits = run_replications(mc, &format!("sup-probe/{n}/sim"), |rng, _| {
            let (xs, _) = ms.simulate(rng)?;
            Ok(idx.iter().all(|&i| xs.values()[i] <= level))
        })?;
        let neglog = neglog_frequency(&hits)?;
        let norm = r.powf(alpha) * n.powi(l);
        let v = run_replications(mc, &format!("sup-probe/{n}/exp"), |rng, _| {
            let z = ms.spectral().sample(rng)?;
            Ok(idx.iter().map(|&i| z.norms()[i]).fold(0.0f64, f64::max).powf(alpha) / norm)
        })?;
        let spectral = MCEstimate::from_values(&v)?;
        rows.push(SupProbeRow {
            n,
            neglog,
            spectral,
            report: neglog.map(|e| compare(e, spectral, z_crit)),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{BrownResnick, SpectralModel, VariogramSpec};
    use crate::tailfields::{ConstantLaw, SyntheticField, SyntheticKind};

    fn line(a: f64) -> Arc<Window> {
        Arc::new(Window::centered(Arc::new(Lattice::integer(1)), a).unwrap())
    }

    fn br(a: f64, alpha: f64) -> BrownResnick {
        let m = SpectralModel::new(VariogramSpec::power(1.0, 1.0).unwrap(), 1, alpha).unwrap();
        BrownResnick::new(m, line(a)).unwrap()
    }

    fn constant(a: f64) -> SyntheticField {
        SyntheticField::new(
            SyntheticKind::Constant { law: ConstantLaw::Unit },
            line(a),
            1.0,
            HomogeneousNorm::AlphaSum { alpha: 1.0, d: 1 },
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(DeHaanConfig { epsilon: 1.0, ..Default::default() }.validate().is_err());
        assert!(DeHaanConfig { max_terms: 0, ..Default::default() }.validate().is_err());
        assert!(DeHaanConfig::default().validate().is_ok());
    }

    #[test]
    fn constant_spectral_gives_frechet() {
        let ms = MaxStable::new(constant(1.0), DeHaanConfig { quantile_probes: 100, ..Default::default() }, 1).unwrap();
        let draws = run_replications(&McConfig::new(2, 100_000), "frechet", |rng, _| {
            let (x, _) = ms.simulate(rng)?;
            assert!(x.values().iter().all(|v| *v == x.values()[0]));
            Ok((x.values()[0] <= 1.0) as u8 as f64)
        })
        .unwrap();
        let e = MCEstimate::from_values(&draws).unwrap();
        let want = (-1.0f64).exp();
        assert!((e.mean - want).abs() <= 4.0 * e.se, "{e:?}");
    }

    #[test]
    fn monotone_partial_maxima() {
        let z = br(3.0, 1.0);
        let cfg = DeHaanConfig { quantile_probes: 2000, ..Default::default() };
        let q = sup_quantile(&z, cfg.quantile_probes, 0.9999, 3).unwrap();
        for rep in 0..100 {
            let mut prev: Vec<f64> = vec![f64::NEG_INFINITY; z.window().len()];
            let mut ok = true;
            dehaan_simulate(&z, &cfg, q, &mut stream_rng(4, 0, rep), |_, x| {
                ok &= x.iter().zip(&prev).all(|(a, b)| a >= b);
                prev = x.to_vec();
            })
            .unwrap();
            assert!(ok);
        }
    }

    #[test]
    fn truncation_soundness() {
        let ms = MaxStable::new(br(2.0, 1.0), DeHaanConfig { epsilon: 0.2, quantile_probes: 20_000, ..Default::default() }, 5).unwrap();
        let eps = ms.config().epsilon;
        let reps = 1000;
        let mut good = 0;
        let mut clean = 0;
        for rep in 0..reps {
            let (a, da) = ms.simulate(&mut stream_rng(6, 0, rep)).unwrap();
            if da.truncated {
                continue;
            }
            clean += 1;
            let (b, _) = ms.simulate_with_epsilon(eps / 10.0, &mut stream_rng(6, 0, rep)).unwrap();
            if a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() <= eps * x) {
                good += 1;
            }
        }
        assert!(clean > 0);
        assert!(good as f64 >= 0.99 * clean as f64, "{good}/{clean}");
    }

    #[test]
    fn fdd_neglog_examples() {
        let z = br(2.0, 1.0);
        let mc = McConfig::new(8, 100_000);
        let e = fdd_neglog(&z, &[vec![1]], &[1.0], &mc, "n1").unwrap();
        assert!((e.mean - 1.0).abs() <= 4.0 * e.se);
        let a = fdd_neglog(&z, &[vec![0], vec![1]], &[1.0, 2.0], &mc, "sc").unwrap();
        let b = fdd_neglog(&z, &[vec![0], vec![1]], &[3.0, 6.0], &mc, "sc").unwrap();
        assert!((a.mean / 3.0 - b.mean).abs() <= 1e-12 * a.mean);
        let c = fdd_neglog(&constant(1.0), &[vec![0], vec![1]], &[1.0, 2.0], &McConfig::new(1, 10), "c").unwrap();
        assert_eq!((c.mean, c.se), (1.0, 0.0));
    }

    #[test]
    fn neglog_frequency_rules() {
        assert!(neglog_frequency(&[false, false]).unwrap().is_none());
        let e = neglog_frequency(&[true, false, true, false]).unwrap().unwrap();
        assert!((e.mean - 2f64.ln()).abs() < 1e-15);
    }
}
