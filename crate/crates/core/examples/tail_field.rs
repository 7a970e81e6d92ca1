//! Local field `Theta` and tail field `Y = R Theta` of a Brown-Resnick class:
//! the spectral-tail identity, the tail identity and the law of `Y`.

use std::sync::Arc;

use homfield::gaussian::{BrownResnick, SpectralModel, VariogramSpec};
use homfield::tailfields::{
    check_spectral_identity, check_tail_identity, fdd_y_check, LocalField, TailField,
};
use homfield::{FieldSampler, FunctionalSpec, Lattice, McConfig, Normalizer, Window};

fn main() -> homfield::Result<()> {
    let w = Arc::new(Window::centered(Arc::new(Lattice::integer(1)), 3.0)?);
    let z: Arc<dyn FieldSampler> =
        Arc::new(BrownResnick::new(SpectralModel::new(VariogramSpec::power(1.0, 1.0)?, 1, 1.0)?, w)?);
    // ||Z(0)|| = 1 surely, so Theta = Z
    let theta = LocalField::direct(z.clone());
    let mc = McConfig::new(9, 20_000);

    let ratio = FunctionalSpec::product_power(vec![vec![1]], vec![1.0]).normalized(Normalizer::Point(vec![0]));
    let r = check_spectral_identity(&theta, &ratio, &[1], &mc, 4.0, "spectral")?;
    println!("spectral-tail identity, h = 1: {:.4} vs {:.4} (z = {:.2})", r.lhs.mean, r.rhs.mean, r.z);

    let y = TailField::new(LocalField::direct(z))?;
    let g = FunctionalSpec::exceedance(vec![vec![1]], vec![1.0]);
    for x in [0.5, 2.0] {
        let r = check_tail_identity(&y, &g, &[1], x, &mc, 4.0, "tail")?;
        println!("tail identity, h = 1, x = {x}: {:.4} vs {:.4} (z = {:.2})", r.lhs.mean, r.rhs.mean, r.z);
    }

    let r = fdd_y_check(&theta, &[vec![0], vec![1]], &[2.0, 3.0], &mc, 4.0, "fdd")?;
    println!("P(Y(0) <= 2, Y(1) <= 3): simulated {:.4}, from Theta {:.4}", r.lhs.mean, r.rhs.mean);
    Ok(())
}
