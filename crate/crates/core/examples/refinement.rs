//! Block estimates of the extremal index on the refined lattices `2^-k Z`,
//! normalised by the covolume, approaching the continuous-domain index.

use std::sync::Arc;

use homfield::extremal::{refinement_study, shift_base_radius, stationary_shift};
use homfield::gaussian::{BrownResnick, SpectralModel, VariogramSpec};
use homfield::{Lattice, McConfig, Window};

fn main() -> homfield::Result<()> {
    let model = SpectralModel::new(VariogramSpec::power(1.0, 1.0)?, 1, 1.0)?;
    let n = 4.0;
    let margin = n;
    let make = |block: Arc<Window>| {
        let base = Window::centered(block.lattice().clone(), shift_base_radius(n, margin))?;
        stationary_shift(BrownResnick::new(model, Arc::new(base))?, n, margin)
    };
    let study = refinement_study(make, &Arc::new(Lattice::integer(1)), 3, n, &McConfig::new(6, 4_000))?;
    for r in &study.rows {
        println!(
            "level {} (delta {}): per site {:.4}, normalised {:.4} +- {:.4}",
            r.level, r.delta, r.per_site.mean, r.normalized.mean, r.normalized.se
        );
    }
    println!("relative change over the last level: {:.3}", study.last_change().unwrap());
    Ok(())
}
