//! Deterministic Monte Carlo: named banks of counter-based streams give the
//! same estimate for any worker count.

use homfield::mc::{compare, run_mc, run_weighted_mc};
use homfield::McConfig;
use rand::Rng;

fn main() -> homfield::Result<()> {
    let f = |rng: &mut homfield::mc::StreamRng, _rep: u64| -> homfield::Result<f64> {
        let u: f64 = rng.gen();
        Ok(u * u)
    };
    let one = run_mc(&McConfig::new(42, 100_000), "square", f)?;
    let many = run_mc(&McConfig::new(42, 100_000).with_workers(4), "square", f)?;
    println!("E U^2 = {:.5} +- {:.5} (1 worker), {:.5} (4 workers)", one.mean, one.se, many.mean);
    assert_eq!(one, many);

    // ratio estimate: E[w X] / E[w] with w = 2U, X = U is E U^2 / E U = 2/3
    let r = run_weighted_mc(&McConfig::new(42, 100_000), "ratio", |rng, _| {
        let u: f64 = rng.gen();
        Ok((u, 2.0 * u))
    })?;
    let c = compare(r, homfield::MCEstimate::new(2.0 / 3.0, 0.0, r.reps), 4.0);
    println!("ratio estimate {:.5} +- {:.5}, z = {:.2} against 2/3", r.mean, r.se, c.z);
    Ok(())
}
