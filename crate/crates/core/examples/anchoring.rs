//! Anchoring maps on a random corpus: axiom counts for the infargsup and the
//! first-exceedance maps, plus the cluster functionals `S_V` and `B_{V,tau}`.

use std::sync::Arc;

use homfield::anchoring::{axiom_check, b_v_tau, s_v, AnchorMap};
use homfield::gaussian::{BrownResnick, SpectralModel, VariogramSpec};
use homfield::mc::run_replications;
use homfield::{FieldSampler, Lattice, McConfig, ParetoAlpha, Window};
use rand::distributions::Distribution;

fn main() -> homfield::Result<()> {
    let w = Arc::new(Window::centered(Arc::new(Lattice::integer(1)), 4.0)?);
    let z = BrownResnick::new(SpectralModel::new(VariogramSpec::power(1.0, 1.0)?, 1, 1.0)?, w)?;
    let r = ParetoAlpha::new(1.0)?;
    let corpus = run_replications(&McConfig::new(4, 200), "corpus", |rng, _| {
        Ok(z.sample(rng)?.scaled(r.sample(rng)))
    })?;

    let shifts = [vec![-1], vec![1], vec![2]];
    for map in [AnchorMap::InfArgSup, AnchorMap::FirstExceedance] {
        let rep = axiom_check(map, &corpus, &shifts, &[0.5, 2.0])?;
        println!(
            "{}: A1 {}/{}, A2 {}/{}, A3 {}/{}, 0-homogeneity {}/{}",
            map.name(),
            rep.a1.passed,
            rep.a1.checked,
            rep.a2.passed,
            rep.a2.checked,
            rep.a3.passed,
            rep.a3.checked,
            rep.homogeneity.passed,
            rep.homogeneity.checked
        );
        if let Some(wit) = rep.witnesses.first() {
            println!("  {wit}");
        }
    }

    let v: Vec<_> = (-2..=2).map(|t| vec![t]).collect();
    let f = &corpus[0];
    println!("S_V = {:.4}, B_V,0 = {}", s_v(f, &v, 1.0, 1.0)?, b_v_tau(f, &v, 0.0, 1.0)?);
    Ok(())
}
