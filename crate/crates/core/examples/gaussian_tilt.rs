//! Exponential tilting of a Gaussian vector: under `e^{Y - Var Y / 2} dP`
//! the vector `X` is shifted by `Cov(X, Y)`.

use homfield::gaussian::{covariance_matrix, tilt_moment_check, VariogramSpec, DEFAULT_JITTER};
use homfield::McConfig;

fn main() -> homfield::Result<()> {
    let pts: Vec<Vec<f64>> = [0.5, 1.0, 2.0, 3.5].iter().map(|&t| vec![t]).collect();
    let c = covariance_matrix(&VariogramSpec::power(1.0, 1.0)?, &pts)?;
    let w = [0.3, -0.2, 0.1, 0.25];
    let rows = tilt_moment_check(&c, &w, 0.5, DEFAULT_JITTER, &McConfig::new(2, 200_000), "tilt")?;
    for r in rows {
        println!(
            "X({}): mean {:.4} +- {:.4} (exact {:.4}), second moment {:.4} +- {:.4} (exact {:.4})",
            pts[r.point][0], r.mean.mean, r.mean.se, r.mean_exact, r.second.mean, r.second.se, r.second_exact
        );
    }
    Ok(())
}
