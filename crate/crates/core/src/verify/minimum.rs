use crate::error::{Error, Result};
use alloc::vec::Vec;

use crate::linalg::{dot, norm, norm_sq, ParamVector};
use crate::problem::FccoProblem;

/// Minimizer and minimum value. Uses the problem's closed form when it has
/// one, otherwise gradient descent with backtracking from the initial point.
pub fn brute_force_minimum<P: FccoProblem + ?Sized>(problem: &P) -> Result<(ParamVector, f64)> {
    if let Some(w) = problem.minimizer() {
        let f = problem.exact_objective(&w)?;
        return Ok((w, f));
    }
    descend_from(problem, problem.initial_point(), 1e-10, 200_000)
}

/// Gradient descent with Barzilai-Borwein trial steps and Armijo
/// backtracking until `|grad F| <= tol`. Returns a state error if
/// `max_iter` runs out first.
pub fn descend_from<P: FccoProblem + ?Sized>(
    problem: &P,
    start: ParamVector,
    tol: f64,
    max_iter: usize,
) -> Result<(ParamVector, f64)> {
    let mut w = start;
    let mut f = problem.exact_objective(&w)?;
    let mut g = problem.exact_gradient(&w)?;
    let mut step = 1.0;
    for _ in 0..max_iter {
        if norm(&g) <= tol {
            return Ok((w, f));
        }
        let gg = norm_sq(&g);
        // Differences below rounding of f cannot be resolved.
        let fuzz = 4.0 * f64::EPSILON * f.abs();
        loop {
            let trial = ParamVector::from_vec(w.iter().zip(&g).map(|(x, d)| x - step * d).collect());
            let ft = problem.exact_objective(&trial)?;
            if ft <= f - 0.5 * step * gg + fuzz {
                let gt = problem.exact_gradient(&trial)?;
                let s: Vec<f64> = trial.iter().zip(w.iter()).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                step = if sy > 0.0 { norm_sq(&s) / sy } else { 2.0 * step };
                w = trial;
                f = ft;
                g = gt;
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(Error::State("line search failed".into()));
            }
        }
    }
    Err(Error::State(alloc::format!("descent did not reach |grad| <= {tol} in {max_iter} steps")))
}
