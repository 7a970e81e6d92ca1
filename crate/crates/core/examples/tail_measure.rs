//! Three estimators of the tail measure `nu_Z[H]` for an exceedance
//! functional, and its `-alpha` homogeneity.

use std::sync::Arc;

use homfield::gaussian::{BrownResnick, SpectralModel, VariogramSpec};
use homfield::tailfields::{
    tail_measure_estimate, LocalField, ShiftLaw, TailFunctional, TailMeasure, TailMeasureVariant,
};
use homfield::{FieldSampler, FunctionalSpec, Lattice, McConfig, Region, Window};

fn main() -> homfield::Result<()> {
    let lattice = Arc::new(Lattice::integer(1));
    let w = Arc::new(Window::centered(lattice.clone(), 4.0)?);
    let z: Arc<dyn FieldSampler> =
        Arc::new(BrownResnick::new(SpectralModel::new(VariogramSpec::power(1.0, 1.0)?, 1, 1.0)?, w)?);
    let theta = LocalField::direct(z.clone());
    let mc = McConfig::new(12, 20_000);

    for level in [1.0, 2.0] {
        let h = TailFunctional {
            h: FunctionalSpec::exceedance(vec![vec![0], vec![1]], vec![level, level]),
            eps: level,
            k0: Region::Points(vec![vec![0]]),
        };
        let spec = TailMeasure { h: &h, window_k: Region::Cube(2.0), shift: Some(ShiftLaw::uniform_box(&lattice, -2.0, 2.0)?) };
        let direct = tail_measure_estimate(z.as_ref(), &spec, TailMeasureVariant::Direct, &mc, "direct")?;
        let count = tail_measure_estimate(&theta, &spec, TailMeasureVariant::Bizha, &mc, "count")?;
        let shifted = tail_measure_estimate(&theta, &spec, TailMeasureVariant::ThetaShift, &mc, "shifted")?;
        println!(
            "both sites above {level}: direct {:.4}, exceedance count {:.4}, shifted local field {:.4}",
            direct.mean, count.mean, shifted.mean
        );
    }
    Ok(())
}
