//! de Haan simulation of a Brown-Resnick max-stable field and its unit
//! Frechet margin at the origin.

use std::sync::Arc;

use homfield::gaussian::{BrownResnick, SpectralModel, VariogramSpec};
use homfield::maxstable::{DeHaanConfig, MaxStable};
use homfield::mc::run_replications;
use homfield::{Lattice, MCEstimate, McConfig, Window};

fn main() -> homfield::Result<()> {
    let w = Arc::new(Window::centered(Arc::new(Lattice::integer(1)), 3.0)?);
    let z = BrownResnick::new(SpectralModel::new(VariogramSpec::power(1.0, 1.0)?, 1, 1.0)?, w.clone())?;
    let ms = MaxStable::new(z, DeHaanConfig::default(), 3)?;
    println!("0.9999 quantile of sup ||Z||: {:.1}", ms.q_hat());

    let sims = run_replications(&McConfig::new(3, 5_000), "maxstable-example", |rng, _| ms.simulate(rng))?;
    let (x, diag) = &sims[0];
    println!("first draw: {:?}", x.values().iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("  {} terms, stopping margin {:.3}", diag.terms_used, diag.stopping_margin);

    let o = w.origin_index().unwrap();
    let hits: Vec<f64> = sims.iter().map(|s| (s.0.values()[o] <= 1.0) as u8 as f64).collect();
    let p = MCEstimate::from_values(&hits)?;
    println!("P(X(0) <= 1) = {:.4} +- {:.4}, exact {:.4}", p.mean, p.se, (-1.0f64).exp());
    Ok(())
}
