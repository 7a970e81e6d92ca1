//! Brown-Resnick spectral field `Z = exp(Y - alpha Var Y / 2)` on a window of
//! the integers, with a check of `E ||Z(t)||^alpha = 1`.

use std::sync::Arc;

use homfield::gaussian::{BrownResnick, SignMode, SpectralModel, VariogramSpec};
use homfield::mc::run_replications;
use homfield::{FieldSampler, Lattice, MCEstimate, McConfig, Window};

fn main() -> homfield::Result<()> {
    let w = Arc::new(Window::centered(Arc::new(Lattice::integer(1)), 3.0)?);
    let model = SpectralModel::new(VariogramSpec::power(1.0, 1.0)?, 2, 1.5)?.with_signs(SignMode::Rademacher);
    let z = BrownResnick::new(model, w.clone())?;

    let draws = run_replications(&McConfig::new(1, 50_000), "br-example", |rng, _| {
        Ok(z.sample(rng)?.norms().to_vec())
    })?;
    for i in 0..w.len() {
        let x: Vec<f64> = draws.iter().map(|d| d[i].powf(z.alpha())).collect();
        let e = MCEstimate::from_values(&x)?;
        println!("t = {:>2}: E ||Z(t)||^alpha = {:.4} +- {:.4}", w.coord(i)[0], e.mean, e.se);
    }
    Ok(())
}
