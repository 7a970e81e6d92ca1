//! Extremal index of a Brown-Resnick field on the integers by block maxima
//! and through the local field.

use std::sync::Arc;

use homfield::extremal::{blocks_estimates, pil_estimates, Stationarity};
use homfield::gaussian::{BrownResnick, SpectralModel, VariogramSpec};
use homfield::tailfields::LocalField;
use homfield::{Lattice, McConfig, Window};

fn main() -> homfield::Result<()> {
    let lattice = Arc::new(Lattice::integer(1));
    let model = SpectralModel::new(VariogramSpec::power(1.0, 1.0)?, 1, 1.0)?;
    let mc = McConfig::new(8, 4_000);

    let blocks = blocks_estimates(
        |w| BrownResnick::new(model, w),
        &lattice,
        &[8.0, 16.0, 32.0],
        Stationarity::RandomShift { margin: 0.0 },
        &mc,
    )?;
    for e in &blocks {
        println!("blocks n = {:>2}: {:.4} +- {:.4}", e.method.size(), e.value.mean, e.value.se);
    }

    let theta = LocalField::direct(Arc::new(BrownResnick::new(model, Arc::new(Window::centered(lattice, 16.0)?))?));
    for e in pil_estimates(&theta, &[4.0, 8.0, 16.0], 0.0, &mc, "pil")? {
        println!("pil a = {:>2}: {:.4} +- {:.4}", e.method.size(), e.value.mean, e.value.se);
    }
    Ok(())
}
