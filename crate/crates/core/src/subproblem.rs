//! Closed-form box best responses and the linearly-convergent proximal
//! subproblem solver built on relative smoothness.
//!
//! The subproblem is `min F(x, y) = <v, (x, y)> + r_A^(2)(x, y)` over
//! box x simplex. Minimizing over the box first leaves a function of `y`
//! that is 2-relatively smooth and 1-relatively strongly convex with respect
//! to negative entropy, so a fixed-weight entropic mirror step halves the
//! objective error per iteration.

use crate::error::{Error, Result};
use crate::problem::PrimalDualPoint;
use crate::reg;
use crate::simplex;
use crate::sparse::SparseMatrix;

/// Per-coordinate quadratic weights `q >= 0` of `<v, x> + <q, x^2>`.
#[derive(Debug, Clone)]
pub struct QuadraticWeights(pub Vec<f64>);

impl QuadraticWeights {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if let Some(bad) = q.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "quadratic weight {bad} is negative or non-finite"
            )));
        }
        Ok(Self(q))
    }
}

/// Coordinatewise minimizer of `<v, x> + <q, x^2>` over the box:
/// `med(-v_i / (2 q_i), -1, 1)`, with the zero-curvature rule
/// `x_i = -sign(v_i)` when `q_i = 0`.
pub fn best_response_x(v: &[f64], q: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), q.len(), "best_response_x: length mismatch");
    v.iter()
        .zip(q)
        .map(|(&vi, &qi)| {
            if qi == 0.0 {
                -vi.signum() * if vi == 0.0 { 0.0 } else { 1.0 }
            } else {
                (-vi / (2.0 * qi)).clamp(-1.0, 1.0)
            }
        })
        .collect()
}

/// `min_x <v, x> + <q, x^2>` over the box, in closed form:
/// `-v_i^2 / (4 q_i)` on the interior branch (`|v_i| <= 2 q_i`), else
/// `q_i - |v_i|`. Consistency with evaluating at [`best_response_x`] is the
/// normative definition.
pub fn ell_v(v: &[f64], q: &[f64]) -> f64 {
    assert_eq!(v.len(), q.len(), "ell_v: length mismatch");
    v.iter()
        .zip(q)
        .map(|(&vi, &qi)| {
            if qi == 0.0 {
                -vi.abs()
            } else if vi.abs() <= 2.0 * qi {
                -vi * vi / (4.0 * qi)
            } else {
                qi - vi.abs()
            }
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub point: PrimalDualPoint,
    /// `F` evaluated after each mirror step, starting with the initial point.
    pub objectives: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Objective `F(x, y) = <v, (x, y)> + r_A^(2)(x, y)` with `x = x_br(y)`.
fn objective(a: &SparseMatrix, vx: &[f64], vy: &[f64], alpha: f64, z: &PrimalDualPoint) -> f64 {
    let y = z.y();
    let lin_x: f64 = vx.iter().zip(&z.x).map(|(a, b)| a * b).sum();
    let lin_y: f64 = vy.iter().zip(&y).map(|(a, b)| a * b).sum();
    lin_x + lin_y + reg::regularizer(a, alpha, z)
}

/// Minimizes `F(x, y) = <v, (x, y)> + r_A^(2)(x, y)` over box x simplex.
///
/// Each step computes the box best response `x_br(y_k)`, takes the partial
/// subgradient at it, and applies an entropic mirror step with weight 2 (the
/// relative-smoothness constant). Terminates when the objective decrease
/// drops to `tol`; non-convergence within 200 iterations is reported through
/// the `converged` flag, with the objective trace attached.
pub fn minimize_subproblem(
    a: &SparseMatrix,
    vx: &[f64],
    vy: &[f64],
    alpha: f64,
    tol: f64,
) -> Result<SubproblemSolution> {
    if (alpha - 2.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "the relative-smoothness constants are derived for alpha = 2, got {alpha}"
        )));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    if vx.len() != a.rows() || vy.len() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "v is ({}, {}), matrix is {}x{}",
            vx.len(),
            vy.len(),
            a.rows(),
            a.cols()
        )));
    }
    const MAX_ITERS: usize = 200;
    let d = a.cols();
    let mut logy = simplex::uniform_logs(d);
    let mut x = best_response_x(vx, &a.abs_mul_vec(&simplex::exp_normalized(&logy)));
    let mut z = PrimalDualPoint::new(x, logy.clone());
    let mut objectives = vec![objective(a, vx, vy, alpha, &z)];
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..MAX_ITERS {
        // Subgradient of f(y) = min_x F(x, y) at y_k, via the best response.
        let x2: Vec<f64> = z.x.iter().map(|v| v * v).collect();
        let mut subgrad = a.abs_tr_mul_vec(&x2);
        for ((g, vyj), ly) in subgrad.iter_mut().zip(vy).zip(z.logy()) {
            *g += vyj + alpha * (ly + 1.0);
        }
        // Mirror step with weight 2: y ~ y_k o exp(-subgrad / 2).
        logy = z
            .logy()
            .iter()
            .zip(&subgrad)
            .map(|(ly, g)| ly - g / 2.0)
            .collect();
        simplex::log_normalize(&mut logy);
        x = best_response_x(vx, &a.abs_mul_vec(&simplex::exp_normalized(&logy)));
        z = PrimalDualPoint::new(x, logy.clone());
        let obj = objective(a, vx, vy, alpha, &z);
        let decrease = objectives.last().unwrap() - obj;
        objectives.push(obj);
        iterations = k + 1;
        if decrease.abs() <= tol {
            converged = true;
            break;
        }
    }
    Ok(SubproblemSolution {
        point: z,
        objectives,
        converged,
        iterations,
    })
}
