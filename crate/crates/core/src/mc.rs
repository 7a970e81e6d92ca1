//! Deterministic replication engine and two-sample comparisons.
//!
//! Replication `i` of bank `b` under master seed `s` draws from a ChaCha8
//! stream keyed by `(s, b)` with stream id `i`. The mapping is injective, so
//! no two replications share a stream, and the result never depends on how
//! replications are scheduled across workers.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type StreamRng = ChaCha8Rng;

/// Stream for replication `rep` of bank `bank` under `seed`.
pub fn stream_rng(seed: u64, bank: u64, rep: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&bank.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(rep);
    rng
}

/// Stable 64-bit tag for a named replication bank (FNV-1a).
pub fn bank_tag(name: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub seed: u64,
    pub reps: usize,
    pub workers: usize,
}

impl McConfig {
    pub fn new(seed: u64, reps: usize) -> Self {
        Self {
            seed,
            reps,
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "replication panicked".to_string()
    }
}

/// Runs `cfg.reps` replications of `f` on bank `bank` and returns their
/// outputs in replication order. Errors and panics are counted; any failure
/// fails the whole run.
pub fn run_replications<T, F>(cfg: &McConfig, bank: &str, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut StreamRng, u64) -> Result<T> + Sync,
{
    let tag = bank_tag(bank);
    let one = |i: u64| -> Result<T> {
        let mut rng = stream_rng(cfg.seed, tag, i);
        match catch_unwind(AssertUnwindSafe(|| f(&mut rng, i))) {
            Ok(r) => r,
            Err(p) => Err(Error::Numerical(panic_message(p))),
        }
    };
    let results: Vec<Result<T>> = if cfg.workers <= 1 {
        (0..cfg.reps as u64).map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
        pool.install(|| (0..cfg.reps as u64).into_par_iter().map(one).collect())
    };
    let mut out = Vec::with_capacity(results.len());
    let mut failed = 0;
    let mut first = None;
    for r in results {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                failed += 1;
                first.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if failed > 0 {
        return Err(Error::Replications {
            failed,
            reps: cfg.reps,
            first: first.unwrap_or_default(),
        });
    }
    Ok(out)
}

/// Scalar Monte Carlo estimate of `E f`.
pub fn run_mc<F>(cfg: &McConfig, bank: &str, f: F) -> Result<MCEstimate>
where
    F: Fn(&mut StreamRng, u64) -> Result<f64> + Sync,
{
    if cfg.reps < 2 {
        return Err(Error::usage("at least two replications are required"));
    }
    let v = run_replications(cfg, bank, f)?;
    MCEstimate::from_values(&v)
}

/// Weighted (self-normalised) Monte Carlo estimate; `f` returns `(value, weight)`.
pub fn run_weighted_mc<F>(cfg: &McConfig, bank: &str, f: F) -> Result<MCEstimate>
where
    F: Fn(&mut StreamRng, u64) -> Result<(f64, f64)> + Sync,
{
    if cfg.reps < 2 {
        return Err(Error::usage("at least two replications are required"));
    }
    let v = run_replications(cfg, bank, f)?;
    let (x, w): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
    MCEstimate::from_weighted(&x, &w)
}

/// Neumaier compensated sum.
pub fn compensated_sum(it: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub se: f64,
    pub reps: usize,
    pub ci95: (f64, f64),
}

impl MCEstimate {
    pub fn new(mean: f64, se: f64, reps: usize) -> Self {
        Self {
            mean,
            se,
            reps,
            ci95: (mean - 1.96 * se, mean + 1.96 * se),
        }
    }

    /// Mean and standard error `sd / sqrt(n)` by a compensated two-pass scheme.
    pub fn from_values(v: &[f64]) -> Result<Self> {
        let n = v.len();
        if n < 2 {
            return Err(Error::usage("at least two replications are required"));
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite replication value {x}")));
        }
        let mean = compensated_sum(v.iter().copied()) / n as f64;
        let ss = compensated_sum(v.iter().map(|x| (x - mean) * (x - mean)));
        let var = ss / (n - 1) as f64;
        Ok(Self::new(mean, (var / n as f64).sqrt(), n))
    }

    /// Ratio estimator `sum w x / sum w` with a delta-method standard error.
    pub fn from_weighted(x: &[f64], w: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != w.len() {
            return Err(Error::Dimension {
                expected: n,
                got: w.len(),
            });
        }
        if n < 2 {
            return Err(Error::usage("at least two replications are required"));
        }
        if x.iter().chain(w).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite weighted replication".into()));
        }
        if w.iter().any(|&v| v < 0.0) {
            return Err(Error::usage("negative importance weight"));
        }
        let sw = compensated_sum(w.iter().copied());
        if sw <= 0.0 {
            return Err(Error::DegenerateBase("all importance weights are zero".into()));
        }
        let mean = compensated_sum(x.iter().zip(w).map(|(a, b)| a * b)) / sw;
        let ss = compensated_sum(x.iter().zip(w).map(|(a, b)| {
            let r = b * (a - mean);
            r * r
        }));
        let var = ss * n as f64 / (n - 1) as f64 / (sw * sw);
        Ok(Self::new(mean, var.sqrt(), n))
    }

    /// Estimate of `c * E X` from an estimate of `E X`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.mean * c, self.se * c.abs(), self.reps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    pub lhs: MCEstimate,
    pub rhs: MCEstimate,
    pub z: f64,
    pub z_crit: f64,
    pub pass: bool,
}

pub const DEFAULT_Z_CRIT: f64 = 4.0;

/// Two-sample z-test for estimates from independent banks.
pub fn compare(lhs: MCEstimate, rhs: MCEstimate, z_crit: f64) -> ComparisonReport {
    let diff = lhs.mean - rhs.mean;
    let se = (lhs.se * lhs.se + rhs.se * rhs.se).sqrt();
    let z = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    ComparisonReport {
        lhs,
        rhs,
        z,
        z_crit,
        pass: z.abs() <= z_crit,
    }
}
