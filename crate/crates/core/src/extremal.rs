//! Extremal indices of stationary max-stable fields: the block estimator,
//! the local-field estimator and the lattice refinement study.

use std::sync::Arc;

use rand::distributions::Distribution;

use crate::error::{Error, Result};
use crate::field::FieldSampler;
use crate::lattice::{Lattice, Point, Window};
use crate::mc::{run_replications, MCEstimate, McConfig};
use crate::pareto::ParetoAlpha;
use crate::tailfields::{estimate, RandomShift, ShiftLaw, ShiftVariant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtremalMethod {
    Blocks { n: f64 },
    Pil { a: f64, tau: f64 },
}

impl ExtremalMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ExtremalMethod::Blocks { .. } => "blocks",
            ExtremalMethod::Pil { .. } => "pil",
        }
    }

    /// Block side or cube radius.
    pub fn size(&self) -> f64 {
        match *self {
            ExtremalMethod::Blocks { n } => n,
            ExtremalMethod::Pil { a, .. } => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalEstimate {
    pub method: ExtremalMethod,
    pub value: MCEstimate,
    pub lattice_delta: f64,
}

/// How the block estimator turns the spectral field into a stationary one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stationarity {
    /// The field already generates a shift-invariant class (Brown-Resnick,
    /// constant fields); it is sampled on the block itself.
    AsIs,
    /// Sum-normalised random shift, uniform on `[-margin, n + margin]^l`.
    RandomShift { margin: f64 },
}

/// Radius of the centered base window needed by [`Stationarity::RandomShift`].
pub fn shift_base_radius(n: f64, margin: f64) -> f64 {
    n + 2.0 * margin
}

/// Random shift of `base` whose output window is the block `[0, n]^l`.
pub fn stationary_shift<S: FieldSampler>(base: S, n: f64, margin: f64) -> Result<RandomShift<S>> {
    if !(margin >= 0.0) {
        return Err(Error::usage("shift margin must be nonnegative"));
    }
    let lattice = base.window().lattice().clone();
    let law = ShiftLaw::uniform_box(&lattice, -margin, n + margin)?;
    let out = Arc::new(Window::block(lattice, n)?);
    RandomShift::new(base, law, ShiftVariant::Sum, out)
}

/// `n^{-l} E max_{[0,n]^l} ||Z||^alpha` for each block side, in embedded
/// coordinates. `make(w)` builds the spectral sampler on window `w`.
pub fn blocks_estimates<S, F>(
    make: F,
    lattice: &Arc<Lattice>,
    n_list: &[f64],
    stationarity: Stationarity,
    mc: &McConfig,
) -> Result<Vec<ExtremalEstimate>>
where
    S: FieldSampler,
    F: Fn(Arc<Window>) -> Result<S>,
{
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] <= 0.0 {
        return Err(Error::usage("block sides must be positive and increasing"));
    }
    let l = lattice.dim() as i32;
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let block = Arc::new(Window::block(lattice.clone(), n)?);
        let bank = format!("blocks/{n}");
        let norm = n.powi(l);
        let value = match stationarity {
            Stationarity::AsIs => {
                let z = make(block)?;
                block_mean(&z, norm, mc, &bank)?
            }
            Stationarity::RandomShift { margin } => {
                let r = shift_base_radius(n, margin);
                let base = make(Arc::new(Window::centered(lattice.clone(), r)?))?;
                let z = stationary_shift(base, n, margin)?;
                block_mean(&z, norm, mc, &bank)?
            }
        };
        out.push(ExtremalEstimate {
            method: ExtremalMethod::Blocks { n },
            value,
            lattice_delta: lattice.delta(),
        });
    }
    Ok(out)
}

fn block_mean<S: FieldSampler>(z: &S, norm: f64, mc: &McConfig, bank: &str) -> Result<MCEstimate> {
    let alpha = z.alpha();
    estimate(z, mc, bank, |s, _| {
        Ok(s.norms().iter().fold(0.0f64, |m, &v| m.max(v)).powf(alpha) / norm)
    })
}

/// Indices of the sampler window inside each centered cube `[-a, a]^l`.
fn cube_indices(w: &Window, radii: &[f64]) -> Result<Vec<Vec<usize>>> {
    let lattice = w.lattice().clone();
    radii
        .iter()
        .map(|&a| {
            let c = Window::centered(lattice.clone(), a)?;
            c.points()
                .map(|p| {
                    w.index_of(p).ok_or_else(|| {
                        Error::usage(format!("cube point {p:?} is outside the local-field window"))
                    })
                })
                .collect()
        })
        .collect()
}

/// `Delta^{-1} E[1 / sum_{s in [-a,a]^l} ||Theta(s)||^tau 1{||Y(s)|| > 1}]`
/// with `Y = R Theta`, for every radius, from one shared set of
/// replications. With `tau = 0` the estimates are nonincreasing in `a`
/// replication by replication.
pub fn pil_estimates<S: FieldSampler + ?Sized>(
    theta: &S,
    radii: &[f64],
    tau: f64,
    mc: &McConfig,
    bank: &str,
) -> Result<Vec<ExtremalEstimate>> {
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) || radii[0] < 0.0 {
        return Err(Error::usage("cube radii must be nonnegative and increasing"));
    }
    if !tau.is_finite() {
        return Err(Error::usage("tau must be finite"));
    }
    let w = theta.window().clone();
    let cubes = cube_indices(&w, radii)?;
    let pareto = ParetoAlpha::new(theta.alpha())?;
    let draws = run_replications(mc, bank, |rng, _| {
        let (t, wt) = theta.sample_weighted(rng)?;
        let r = pareto.sample(rng);
        let norms = t.norms();
        let o = norms[t.origin_index()];
        if wt > 0.0 && (o - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("local field has ||Theta(0)|| = {o}, expected 1")));
        }
        let mut row = Vec::with_capacity(cubes.len());
        for idx in &cubes {
            // zero-norm points never exceed, so 0^tau is never formed
            let den: f64 = idx
                .iter()
                .filter(|&&i| r * norms[i] > 1.0)
                .map(|&i| norms[i].powf(tau))
                .sum();
            if wt > 0.0 && !(den > 0.0 && den.is_finite()) {
                return Err(Error::Contract(format!("pil denominator {den} is not positive and finite")));
            }
            row.push(if wt > 0.0 { 1.0 / den } else { 0.0 });
        }
        Ok((row, wt))
    })?;
    let delta = w.lattice().delta();
    let weights: Vec<f64> = draws.iter().map(|d| d.1).collect();
    radii
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            let x: Vec<f64> = draws.iter().map(|d| d.0[j]).collect();
            let est = if theta.is_unweighted() {
                MCEstimate::from_values(&x)?
            } else {
                MCEstimate::from_weighted(&x, &weights)?
            };
            Ok(ExtremalEstimate {
                method: ExtremalMethod::Pil { a, tau },
                value: est.scaled(1.0 / delta),
                lattice_delta: delta,
            })
        })
        .collect()
}

/// Empirical moments `E ||Theta(s)||^tau` over the cube `[-a, a]^l`; returns
/// the point with the largest estimate. A large or unstable value flags a
/// `tau` for which the local-field estimator may not be integrable.
pub fn theta_moment_probe<S: FieldSampler + ?Sized>(
    theta: &S,
    a: f64,
    tau: f64,
    mc: &McConfig,
    bank: &str,
) -> Result<(Point, MCEstimate)> {
    let w = theta.window().clone();
    let idx = cube_indices(&w, &[a])?.remove(0);
    let draws = run_replications(mc, bank, |rng, _| {
        let (t, wt) = theta.sample_weighted(rng)?;
        let row: Vec<f64> = idx
            .iter()
            .map(|&i| {
                let v = t.norms()[i];
                if v == 0.0 && tau <= 0.0 {
                    if tau == 0.0 {
                        1.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    v.powf(tau)
                }
            })
            .collect();
        Ok((row, wt))
    })?;
    let weights: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let mut best: Option<(Point, MCEstimate)> = None;
    for (j, &i) in idx.iter().enumerate() {
        let x: Vec<f64> = draws.iter().map(|d| d.0[j]).collect();
        let est = if theta.is_unweighted() {
            MCEstimate::from_values(&x)?
        } else {
            MCEstimate::from_weighted(&x, &weights)?
        };
        if best.as_ref().map_or(true, |b| est.mean > b.1.mean) {
            best = Some((w.coord(i).to_vec(), est));
        }
    }
    Ok(best.expect("cube contains the origin"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementRow {
    pub level: u32,
    pub delta: f64,
    /// Block estimate with the block measured in sites of the refined lattice.
    pub per_site: MCEstimate,
    /// `per_site / delta`, the physical-coordinate estimate.
    pub normalized: MCEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementStudy {
    pub rows: Vec<RefinementRow>,
}

impl RefinementStudy {
    /// Relative change of the normalized estimate between the last two levels.
    pub fn last_change(&self) -> Option<f64> {
        let k = self.rows.len();
        if k < 2 {
            return None;
        }
        let (a, b) = (self.rows[k - 2].normalized.mean, self.rows[k - 1].normalized.mean);
        Some(if b == a { 0.0 } else { (b - a).abs() / b.abs().max(a.abs()) })
    }

    pub fn converged(&self, tol: f64) -> bool {
        self.last_change().is_some_and(|c| c < tol)
    }
}

/// Block estimates of a stationary field on `2^{-k} L`, `k = 0..=levels`,
/// for the block `[0, n]^l`. Each replication samples the finest level once
/// and every coarser level reads its subgrid, so the levels share
/// randomness and the per-replication maxima are nondecreasing in `k`.
/// `make(w)` builds the sampler on a window of the finest lattice.
pub fn refinement_study<S, F>(make: F, base: &Arc<Lattice>, levels: u32, n: f64, mc: &McConfig) -> Result<RefinementStudy>
where
    S: FieldSampler,
    F: Fn(Arc<Window>) -> Result<S>,
{
    if !(n > 0.0) {
        return Err(Error::usage("block side must be positive"));
    }
    if levels > 20 {
        return Err(Error::usage("at most 20 refinement levels"));
    }
    let fine = Arc::new(base.refine(levels));
    let block = Arc::new(Window::block(fine, n)?);
    let z = make(block.clone())?;
    if z.window().as_ref() != block.as_ref() {
        return Err(Error::usage("sampler window must be the finest block"));
    }
    let subgrids: Vec<Vec<usize>> = (0..=levels)
        .map(|k| {
            let step = 1i64 << (levels - k);
            (0..block.len())
                .filter(|&i| block.coord(i).iter().all(|c| c.rem_euclid(step) == 0))
                .collect()
        })
        .collect();
    let alpha = z.alpha();
    let draws = run_replications(mc, "refine", |rng, _| {
        let (s, w) = z.sample_weighted(rng)?;
        let row: Vec<f64> = subgrids
            .iter()
            .map(|g| g.iter().map(|&i| s.norms()[i]).fold(0.0f64, f64::max).powf(alpha))
            .collect();
        Ok((row, w))
    })?;
    let weights: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let l = base.dim() as i32;
    let mut rows = Vec::with_capacity(subgrids.len());
    for k in 0..=levels {
        let x: Vec<f64> = draws.iter().map(|d| d.0[k as usize]).collect();
        let emax = if z.is_unweighted() {
            MCEstimate::from_values(&x)?
        } else {
            MCEstimate::from_weighted(&x, &weights)?
        };
        let delta = base.refine(k).delta();
        let normalized = emax.scaled(1.0 / n.powi(l));
        rows.push(RefinementRow {
            level: k,
            delta,
            per_site: normalized.scaled(delta),
            normalized,
        });
    }
    Ok(RefinementStudy { rows })
}
