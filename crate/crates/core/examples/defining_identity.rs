//! The defining identity of the class, checked between a Brown-Resnick field
//! and its sum-normalised random shift, which must generate the same class.

use std::sync::Arc;

use homfield::gaussian::{BrownResnick, SpectralModel, VariogramSpec};
use homfield::tailfields::{check_defining_identity, RandomShift, ShiftLaw, ShiftVariant};
use homfield::{FunctionalSpec, Lattice, McConfig, Region, Window};

fn main() -> homfield::Result<()> {
    let lattice = Arc::new(Lattice::integer(1));
    let out = Arc::new(Window::centered(lattice.clone(), 3.0)?);
    let model = SpectralModel::new(VariogramSpec::power(1.0, 1.0)?, 1, 1.0)?;
    let z = BrownResnick::new(model, out.clone())?;

    let law = ShiftLaw::uniform_box(&lattice, -2.0, 2.0)?;
    let r = RandomShift::<BrownResnick>::required_base_radius(&out, &law);
    let base = BrownResnick::new(model, Arc::new(Window::centered(lattice, r)?))?;
    let shifted = RandomShift::new(base, law, ShiftVariant::Sum, out)?;

    let f = FunctionalSpec::sup_window(Region::Cube(1.0));
    let mc = McConfig::new(5, 20_000);
    for h in 0..3 {
        let rep = check_defining_identity(&shifted, &z, &f, &[h], &mc, 4.0, &format!("example/{h}"))?;
        println!(
            "h = {h}: {:.4} ({:.4}) vs {:.4} ({:.4}), z = {:.2}, {}",
            rep.lhs.mean,
            rep.lhs.se,
            rep.rhs.mean,
            rep.rhs.se,
            rep.z,
            if rep.pass { "pass" } else { "FAIL" }
        );
    }
    Ok(())
}
