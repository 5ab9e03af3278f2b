use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::problem::FccoProblem;

/// Central differences of `exact_objective` with step `h`.
pub fn finite_diff_grad<P: FccoProblem + ?Sized>(problem: &P, w: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(alloc::format!("finite-difference step must be positive, got {h}")));
    }
    let mut x = w.to_vec();
    let mut out = Vec::with_capacity(w.len());
    for k in 0..w.len() {
        let x0 = x[k];
        x[k] = x0 + h;
        let up = problem.exact_objective(&x)?;
        x[k] = x0 - h;
        let down = problem.exact_objective(&x)?;
        x[k] = x0;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// `|a - b| / max(|b|, floor)` in the Euclidean norm.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = crate::linalg::dist_sq(a, b);
    libm::sqrt(diff) / crate::linalg::norm(b).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{QuadraticConfig, QuadraticOuter, QuadraticProblem};
    use crate::rng::RngStream;

    #[test]
    fn linear_objective_is_exact() {
        let cfg = QuadraticConfig {
            m: 3,
            d: 4,
            p: 1,
            outer: QuadraticOuter::Identity,
            ..QuadraticConfig::default()
        };
        let p = QuadraticProblem::generate(&cfg, &mut RngStream::new(1, 5).rng()).unwrap();
        let w = [0.3, -0.2, 0.9, 1.1];
        for h in [1e-3, 0.5, 2.0] {
            let fd = finite_diff_grad(&p, &w, h).unwrap();
            let ex = p.exact_gradient(&w).unwrap();
            for (a, b) in fd.iter().zip(&ex) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn quadratic_matches() {
        let p = QuadraticProblem::generate(&QuadraticConfig::default(), &mut RngStream::new(2, 5).rng()).unwrap();
        let w: Vec<f64> = (0..10).map(|k| 0.1 * k as f64 - 0.4).collect();
        let fd = finite_diff_grad(&p, &w, 1e-5).unwrap();
        let ex = p.exact_gradient(&w).unwrap();
        assert!(max_rel_err(&fd, &ex, 1e-12) <= 1e-6);
    }

    #[test]
    fn rejects_bad_step() {
        let p = QuadraticProblem::generate(&QuadraticConfig::default(), &mut RngStream::new(2, 5).rng()).unwrap();
        assert!(finite_diff_grad(&p, &[0.0; 10], 0.0).is_err());
        assert!(finite_diff_grad(&p, &[0.0; 10], -1.0).is_err());
    }
}
