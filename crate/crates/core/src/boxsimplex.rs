//! The box-simplex solver: closed-form gradient and extragradient oracle
//! steps around the weighted-quadratic-plus-entropy regularizer, and the
//! outer extragradient loop with exact gap certificates.
//!
//! One outer iteration alternates a (2, 2)-gradient step with step `eta g`
//! and a (4, 4)-extragradient step with step `(eta/2) g'`, and averages the
//! gradient-step iterates. `T = ceil(6 (8 ln d + 1) L / eps)` iterations
//! certify an `eps` gap; the certificate is evaluated exactly along the run
//! and the loop may stop early on it.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{BoxSimplexInstance, PrimalDualPoint, SolverParams};
use crate::simplex;
use crate::sparse::SparseMatrix;
use crate::subproblem::best_response_x;

/// A dual vector `(v_x, v_y)` fed to an oracle step.
#[derive(Debug, Clone)]
pub struct DualVec {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Quantities depending only on `z` that both oracle steps of an iteration
/// reuse: `|A| y` and `|A|' x^2`.
#[derive(Debug, Clone)]
pub struct OraclePrecomp {
    pub abs_y: Vec<f64>,
    pub abs_x2: Vec<f64>,
}

impl OraclePrecomp {
    pub fn at(a: &SparseMatrix, z: &PrimalDualPoint) -> Self {
        let x2: Vec<f64> = z.x.iter().map(|v| v * v).collect();
        Self {
            abs_y: a.abs_mul_vec(&z.y()),
            abs_x2: a.abs_tr_mul_vec(&x2),
        }
    }
}

/// The effective linear term of the box subproblems:
/// `v_x - 2 x o (|A| y)`.
fn effective_vx(vx: &[f64], x: &[f64], abs_y: &[f64]) -> Vec<f64> {
    vx.iter()
        .zip(x.iter().zip(abs_y))
        .map(|(v, (xi, q))| v - 2.0 * xi * q)
        .collect()
}

fn grad_step_with(
    a: &SparseMatrix,
    z: &PrimalDualPoint,
    v: &DualVec,
    beta: f64,
    pre: &OraclePrecomp,
) -> PrimalDualPoint {
    let veff = effective_vx(&v.x, &z.x, &pre.abs_y);
    let x_star = best_response_x(&veff, &pre.abs_y);
    let x_star2: Vec<f64> = x_star.iter().map(|v| v * v).collect();
    let abs_xstar2 = a.abs_tr_mul_vec(&x_star2);
    // The alpha log-terms of the regularizer gradients cancel here: both are
    // taken at the same y.
    let logy_new: Vec<f64> = z
        .logy()
        .iter()
        .enumerate()
        .map(|(j, ly)| ly - (v.y[j] + abs_xstar2[j] - pre.abs_x2[j]) / beta)
        .collect();
    let z_new = PrimalDualPoint::new(vec![], logy_new);
    let q_new = a.abs_mul_vec(&z_new.y());
    let x_new = best_response_x(&veff, &q_new);
    z_new.with_x(x_new)
}

/// The (alpha, beta)-gradient step oracle: on `(z, v)` returns `z'` with
/// `<v, z' - u> <= V^(alpha+beta)_z(u) - V^(alpha)_{z'}(u) - V^(alpha)_z(z')`
/// for all `u`. Requires `beta >= alpha >= 1/2`. Coordinates with
/// `(|A| y)_i = 0` fall back to the sign rule of the box best response.
pub fn grad_step_oracle(
    a: &SparseMatrix,
    z: &PrimalDualPoint,
    v: &DualVec,
    alpha: f64,
    beta: f64,
) -> PrimalDualPoint {
    assert!(beta >= alpha && alpha >= 0.5, "need beta >= alpha >= 1/2");
    let pre = OraclePrecomp::at(a, z);
    grad_step_with(a, z, v, beta, &pre)
}

struct XgradOut {
    z_plus: PrimalDualPoint,
    ybar_plus_log: Vec<f64>,
    /// `|A| y+` and `|A|' (x+)^2`, carried into the next iteration.
    abs_y_plus: Vec<f64>,
    abs_xplus2: Vec<f64>,
}

fn xgrad_step_with(
    a: &SparseMatrix,
    z: &PrimalDualPoint,
    v: &DualVec,
    ybar_log: &[f64],
    alpha: f64,
    beta: f64,
    pre: &OraclePrecomp,
) -> XgradOut {
    let veff = effective_vx(&v.x, &z.x, &pre.abs_y);
    let ybar = simplex::exp_normalized(ybar_log);
    let q_bar = a.abs_mul_vec(&ybar);
    let x_bar = best_response_x(&veff, &q_bar);
    let x_bar2: Vec<f64> = x_bar.iter().map(|v| v * v).collect();
    let abs_xbar2 = a.abs_tr_mul_vec(&x_bar2);

    // y+ prox from ybar; the regularizer gradient difference carries the
    // alpha (log ybar - log y) term.
    let logy_plus: Vec<f64> = ybar_log
        .iter()
        .enumerate()
        .map(|(j, ly)| {
            ly - (v.y[j] + abs_xbar2[j] - pre.abs_x2[j] + alpha * (ybar_log[j] - z.logy()[j]))
                / beta
        })
        .collect();
    let z_plus = PrimalDualPoint::new(vec![], logy_plus);
    let abs_y_plus = a.abs_mul_vec(&z_plus.y());
    let x_plus = best_response_x(&veff, &abs_y_plus);
    let x_plus2: Vec<f64> = x_plus.iter().map(|v| v * v).collect();
    let abs_xplus2 = a.abs_tr_mul_vec(&x_plus2);
    let z_plus = z_plus.with_x(x_plus);

    // ybar+ prox from ybar, with the gradient difference taken at z+.
    let mut ybar_plus_log: Vec<f64> = ybar_log
        .iter()
        .enumerate()
        .map(|(j, ly)| {
            ly - (v.y[j] + abs_xplus2[j] - pre.abs_x2[j]
                + alpha * (z_plus.logy()[j] - z.logy()[j]))
                / beta
        })
        .collect();
    simplex::log_normalize(&mut ybar_plus_log);

    XgradOut {
        z_plus,
        ybar_plus_log,
        abs_y_plus,
        abs_xplus2,
    }
}

/// The (alpha, beta)-extragradient step oracle: on `(z, v, ybar)` returns
/// `(z+, ybar+)` with
/// `<v, z+ - u> <= V^(alpha)_z(u) - V^(alpha)_{z+}(u) - V^(alpha)_z(z+)
///               + V^(beta h)_{ybar}(u_y) - V^(beta h)_{ybar+}(u_y)`
/// for all `u`. Requires `beta >= alpha >= 1/2`. `ybar` is given and
/// returned as normalized log-weights.
pub fn xgrad_step_oracle(
    a: &SparseMatrix,
    z: &PrimalDualPoint,
    v: &DualVec,
    ybar_log: &[f64],
    alpha: f64,
    beta: f64,
) -> (PrimalDualPoint, Vec<f64>) {
    assert!(beta >= alpha && alpha >= 0.5, "need beta >= alpha >= 1/2");
    let pre = OraclePrecomp::at(a, z);
    let out = xgrad_step_with(a, z, v, ybar_log, alpha, beta, &pre);
    (out.z_plus, out.ybar_plus_log)
}

/// Compensated (Kahan) vector accumulator for the running averages.
#[derive(Debug, Clone)]
struct Kahan {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl Kahan {
    fn zeros(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            comp: vec![0.0; n],
        }
    }

    fn add(&mut self, v: &[f64]) {
        for i in 0..self.sum.len() {
            let y = v[i] - self.comp[i];
            let t = self.sum[i] + y;
            self.comp[i] = (t - self.sum[i]) - y;
            self.sum[i] = t;
        }
    }

    fn scaled(&self, factor: f64) -> Vec<f64> {
        self.sum.iter().map(|v| factor * v).collect()
    }
}

/// Mutable state of the outer loop: the current iterate, the auxiliary dual
/// sequence, and the compensated running average of the gradient-step
/// iterates.
pub struct OracleState<'a> {
    inst: &'a BoxSimplexInstance,
    params: SolverParams,
    z: PrimalDualPoint,
    ybar_log: Vec<f64>,
    sum_x: Kahan,
    sum_y: Kahan,
    iteration: usize,
    t_total: usize,
    pre: OraclePrecomp,
}

impl<'a> OracleState<'a> {
    /// `inst` is expected to be the rescaled instance (`L <= 1`); the state
    /// itself does not rescale.
    pub fn new(inst: &'a BoxSimplexInstance, params: SolverParams, t_total: usize) -> Self {
        let n = inst.box_dim();
        let d = inst.simplex_dim();
        let z = PrimalDualPoint::origin(n, d);
        let pre = OraclePrecomp::at(inst.matrix(), &z);
        Self {
            inst,
            params,
            z,
            ybar_log: simplex::uniform_logs(d),
            sum_x: Kahan::zeros(n),
            sum_y: Kahan::zeros(d),
            iteration: 0,
            t_total,
        pre,
        }
    }

    pub fn z(&self) -> &PrimalDualPoint {
        &self.z
    }

    pub fn ybar_log(&self) -> &[f64] {
        &self.ybar_log
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// `(1/t) sum` of the first `t` gradient-step iterates: the certified
    /// candidate point.
    pub fn average_so_far(&self) -> (Vec<f64>, Vec<f64>) {
        let t = self.iteration.max(1) as f64;
        (self.sum_x.scaled(1.0 / t), self.sum_y.scaled(1.0 / t))
    }

    /// `(1/T) sum` of the first `t` gradient-step iterates, `T` the planned
    /// total.
    pub fn running_average(&self) -> (Vec<f64>, Vec<f64>) {
        let t = self.t_total.max(1) as f64;
        (self.sum_x.scaled(1.0 / t), self.sum_y.scaled(1.0 / t))
    }

    /// One outer iteration. Returns the gradient-step iterate `z'_t` that
    /// entered the running average.
    pub fn step(&mut self) -> PrimalDualPoint {
        let eta = self.params.eta;
        let a = self.inst.matrix();
        let (alpha, beta) = (self.params.alpha, self.params.beta);
        let gamma = self.params.gamma;

        let (gx, gy) = self.inst.gradient(&self.z).expect("state dims are consistent");
        let v1 = DualVec {
            x: gx.iter().map(|v| eta * v).collect(),
            y: gy.iter().map(|v| eta * v).collect(),
        };
        let z_prime = grad_step_with(a, &self.z, &v1, beta, &self.pre);
        self.sum_x.add(&z_prime.x);
        self.sum_y.add(&z_prime.y());

        let (gx2, gy2) = self.inst.gradient(&z_prime).expect("state dims are consistent");
        let half = eta / 2.0;
        let v2 = DualVec {
            x: gx2.iter().map(|v| half * v).collect(),
            y: gy2.iter().map(|v| half * v).collect(),
        };
        let out = xgrad_step_with(
            a,
            &self.z,
            &v2,
            &self.ybar_log,
            alpha + beta,
            gamma,
            &self.pre,
        );
        self.z = out.z_plus;
        self.ybar_log = out.ybar_plus_log;
        self.pre = OraclePrecomp {
            abs_y: out.abs_y_plus,
            abs_x2: out.abs_xplus2,
        };
        self.iteration += 1;
        z_prime
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GapSample {
    pub iteration: usize,
    pub gap: f64,
    pub seconds: f64,
}

/// Per-run record of exact duality-gap certificates.
#[derive(Debug, Clone, Serialize, Default, PartialEq)]
pub struct GapTrace {
    pub samples: Vec<GapSample>,
}

impl GapTrace {
    pub fn push(&mut self, iteration: usize, gap: f64, seconds: f64) {
        self.samples.push(GapSample {
            iteration,
            gap,
            seconds,
        });
    }

    pub fn validate(&self) -> Result<()> {
        let mut last = None;
        for s in &self.samples {
            if s.gap < -1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "negative gap {} at iteration {}",
                    s.gap, s.iteration
                )));
            }
            if let Some(prev) = last {
                if s.iteration <= prev {
                    return Err(Error::InvalidParameter(
                        "trace iterations not strictly increasing".into(),
                    ));
                }
            }
            last = Some(s.iteration);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub trace: GapTrace,
    pub final_gap: f64,
    pub value: f64,
    pub iterations_run: usize,
    pub iteration_bound: usize,
    pub early_exit: bool,
}

/// `T = ceil(6 (8 ln d + 1) L / eps)`.
pub fn iteration_bound(lipschitz: f64, simplex_dim: usize, epsilon: f64) -> usize {
    let d = simplex_dim.max(1) as f64;
    (6.0 * (8.0 * d.ln() + 1.0) * lipschitz / epsilon).ceil() as usize
}

/// Solves the box-simplex game to duality gap at most `params.epsilon`,
/// measured exactly on the original scale.
pub fn solve(inst: &BoxSimplexInstance, params: &SolverParams) -> Result<Solution> {
    params.validate()?;
    let start = Instant::now();
    let l = inst.lipschitz();

    if l == 0.0 {
        return Ok(solve_zero_matrix(inst, start));
    }

    // Identically-zero rows of A have no curvature; fix them at the sign
    // minimizer and solve the reduced game. Their gap contribution is
    // exactly zero.
    let zero_rows: Vec<usize> = (0..inst.box_dim())
        .filter(|&i| inst.matrix().row_is_empty(i))
        .collect();
    if !zero_rows.is_empty() {
        return solve_with_zero_rows(inst, params, &zero_rows);
    }

    let t_bound = iteration_bound(l, inst.simplex_dim(), params.epsilon);
    let t_total = params.max_iters.unwrap_or(t_bound).max(1);
    let trace_every = params
        .trace_every
        .unwrap_or_else(|| t_total.div_ceil(100))
        .max(1);

    let scaled = inst.scaled(1.0 / l);
    let mut state = OracleState::new(&scaled, params.clone(), t_total);
    let mut trace = GapTrace::default();
    let mut early_exit = false;
    while state.iteration() < t_total {
        state.step();
        let t = state.iteration();
        if t % trace_every == 0 || t == t_total {
            let (x, y) = state.average_so_far();
            let gap = inst.duality_gap(&x, &y);
            trace.push(t, gap, start.elapsed().as_secs_f64());
            if gap <= params.epsilon {
                early_exit = t < t_total;
                break;
            }
        }
    }
    let (x, y) = state.average_so_far();
    let final_gap = inst.duality_gap(&x, &y);
    let value = inst.value(&x, &y);
    Ok(Solution {
        x,
        y,
        trace,
        final_gap,
        value,
        iterations_run: state.iteration(),
        iteration_bound: t_bound,
        early_exit,
    })
}

/// `A = 0`: the game is separable. `x = -sign(c)` and `y` the indicator of
/// `argmin_j b_j` form an exact saddle point.
fn solve_zero_matrix(inst: &BoxSimplexInstance, start: Instant) -> Solution {
    let x: Vec<f64> = inst
        .c()
        .iter()
        .map(|&ci| if ci == 0.0 { 0.0 } else { -ci.signum() })
        .collect();
    let jmin = inst
        .b()
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("b is finite"))
        .map(|(j, _)| j)
        .unwrap_or(0);
    let mut logy = vec![simplex::LOG_FLOOR; inst.simplex_dim()];
    logy[jmin] = 0.0;
    let point = PrimalDualPoint::new(x, logy);
    let y = point.y();
    let gap = inst.duality_gap(&point.x, &y);
    let value = inst.value(&point.x, &y);
    let mut trace = GapTrace::default();
    trace.push(1, gap, start.elapsed().as_secs_f64());
    Solution {
        x: point.x,
        y,
        trace,
        final_gap: gap,
        value,
        iterations_run: 0,
        iteration_bound: 0,
        early_exit: false,
    }
}

fn solve_with_zero_rows(
    inst: &BoxSimplexInstance,
    params: &SolverParams,
    zero_rows: &[usize],
) -> Result<Solution> {
    let keep: Vec<usize> = (0..inst.box_dim())
        .filter(|i| !zero_rows.contains(i))
        .collect();
    let mut new_index = vec![usize::MAX; inst.box_dim()];
    for (new_i, &old_i) in keep.iter().enumerate() {
        new_index[old_i] = new_i;
    }
    let triplets: Vec<_> = inst
        .matrix()
        .entries()
        .map(|(i, j, v)| (new_index[i], j, v))
        .collect();
    let reduced = BoxSimplexInstance::new(
        SparseMatrix::from_triplets(keep.len(), inst.simplex_dim(), &triplets)?,
        inst.b().to_vec(),
        keep.iter().map(|&i| inst.c()[i]).collect(),
    )?;
    let sub = solve(&reduced, params)?;

    let mut x = vec![0.0; inst.box_dim()];
    for (&old_i, xi) in keep.iter().zip(&sub.x) {
        x[old_i] = *xi;
    }
    for &i in zero_rows {
        let ci = inst.c()[i];
        x[i] = if ci == 0.0 { 0.0 } else { -ci.signum() };
    }
    let final_gap = inst.duality_gap(&x, &sub.y);
    let value = inst.value(&x, &sub.y);
    Ok(Solution {
        x,
        y: sub.y,
        trace: sub.trace,
        final_gap,
        value,
        iterations_run: sub.iterations_run,
        iteration_bound: sub.iteration_bound,
        early_exit: sub.early_exit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reg;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eye2_inst() -> BoxSimplexInstance {
        BoxSimplexInstance::new(
            SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            vec![0.0; 2],
            vec![0.0; 2],
        )
        .unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PrimalDualPoint {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let logy: Vec<f64> = (0..d).map(|_| rng.gen_range(-4.0..0.0)).collect();
        PrimalDualPoint::new(x, logy)
    }

    fn random_dual(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> DualVec {
        DualVec {
            x: (0..n).map(|_| rng.gen_range(-scale..scale)).collect(),
            y: (0..d).map(|_| rng.gen_range(-scale..scale)).collect(),
        }
    }

    #[test]
    fn grad_step_zero_forcing_is_fixed_point() {
        let inst = eye2_inst();
        let z0 = PrimalDualPoint::origin(2, 2);
        let v = DualVec {
            x: vec![0.0; 2],
            y: vec![0.0; 2],
        };
        let z = grad_step_oracle(inst.matrix(), &z0, &v, 2.0, 2.0);
        assert_eq!(z.x, vec![0.0, 0.0]);
        assert_relative_eq!(z.y()[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn grad_step_hand_example() {
        // A = I2, z0, v = ((1,-1), (0,0)): x* = (-1, 1), y' uniform, x' = (-1, 1).
        let inst = eye2_inst();
        let z0 = PrimalDualPoint::origin(2, 2);
        let v = DualVec {
            x: vec![1.0, -1.0],
            y: vec![0.0, 0.0],
        };
        let z = grad_step_oracle(inst.matrix(), &z0, &v, 2.0, 2.0);
        assert_eq!(z.x, vec![-1.0, 1.0]);
        assert_relative_eq!(z.y()[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(z.y()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn xgrad_zero_forcing_is_fixed_point() {
        let inst = eye2_inst();
        let z0 = PrimalDualPoint::origin(2, 2);
        let v = DualVec {
            x: vec![0.0; 2],
            y: vec![0.0; 2],
        };
        let (z_plus, ybar_plus) = xgrad_step_oracle(
            inst.matrix(),
            &z0,
            &v,
            &simplex::uniform_logs(2),
            4.0,
            4.0,
        );
        assert_eq!(z_plus.x, vec![0.0, 0.0]);
        assert_relative_eq!(z_plus.y()[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(simplex::exp_normalized(&ybar_plus)[0], 0.5, epsilon = 1e-15);
    }

    /// Definition of the gradient step oracle, sampled: for random (z, v, u),
    /// `<v, z' - u> <= V^(a+b)_z(u) - V^(a)_{z'}(u) - V^(a)_z(z')`.
    #[test]
    fn grad_step_satisfies_oracle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dense: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let a = SparseMatrix::from_dense(&dense).unwrap();
        let (alpha, beta) = (2.0, 2.0);
        for _ in 0..300 {
            let z = random_point(&mut rng, 4, 5);
            let v = random_dual(&mut rng, 4, 5, 1.0);
            let u = random_point(&mut rng, 4, 5);
            let z2 = grad_step_oracle(&a, &z, &v, alpha, beta);
            let uy = u.y();
            let z2y = z2.y();
            let mut lhs = 0.0;
            for i in 0..4 {
                lhs += v.x[i] * (z2.x[i] - u.x[i]);
            }
            for j in 0..5 {
                lhs += v.y[j] * (z2y[j] - uy[j]);
            }
            let rhs = reg::bregman(&a, alpha + beta, &z, &u)
                - reg::bregman(&a, alpha, &z2, &u)
                - reg::bregman(&a, alpha, &z, &z2);
            assert!(lhs <= rhs + 1e-8, "oracle inequality violated: {lhs} > {rhs}");
        }
    }

    /// Definition of the extragradient step oracle, sampled with alpha = beta = 4.
    #[test]
    fn xgrad_step_satisfies_oracle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let dense: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let a = SparseMatrix::from_dense(&dense).unwrap();
        let (alpha, beta) = (4.0, 4.0);
        for _ in 0..300 {
            let z = random_point(&mut rng, 4, 5);
            let ybar = random_point(&mut rng, 4, 5);
            let v = random_dual(&mut rng, 4, 5, 1.0);
            let u = random_point(&mut rng, 4, 5);
            let (z_plus, ybar_plus) = xgrad_step_oracle(&a, &z, &v, ybar.logy(), alpha, beta);
            let uy = u.y();
            let zy = z_plus.y();
            let mut lhs = 0.0;
            for i in 0..4 {
                lhs += v.x[i] * (z_plus.x[i] - u.x[i]);
            }
            for j in 0..5 {
                lhs += v.y[j] * (zy[j] - uy[j]);
            }
            let rhs = reg::bregman(&a, alpha, &z, &u)
                - reg::bregman(&a, alpha, &z_plus, &u)
                - reg::bregman(&a, alpha, &z, &z_plus)
                + reg::entropy_bregman_logs(beta, ybar.logy(), u.logy())
                - reg::entropy_bregman_logs(beta, &ybar_plus, u.logy());
            assert!(lhs <= rhs + 1e-8, "oracle inequality violated: {lhs} > {rhs}");
        }
    }

    /// The ybar+ update equals the y+ update after substituting (x+)^2 for
    /// (xbar*)^2 and log y+ for log ybar in the exponent.
    #[test]
    fn ybar_plus_is_yplus_update_with_substitution() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dense: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let a = SparseMatrix::from_dense(&dense).unwrap();
        let (alpha, beta) = (4.0, 4.0);
        for _ in 0..50 {
            let z = random_point(&mut rng, 3, 4);
            let ybar = random_point(&mut rng, 3, 4);
            let v = random_dual(&mut rng, 3, 4, 1.0);
            let pre = OraclePrecomp::at(&a, &z);
            let (z_plus, ybar_plus) = xgrad_step_oracle(&a, &z, &v, ybar.logy(), alpha, beta);

            // Recompute ybar+ from the y+ formula with the two substitutions.
            let veff = effective_vx(&v.x, &z.x, &pre.abs_y);
            let q_bar = a.abs_mul_vec(&ybar.y());
            let x_bar = best_response_x(&veff, &q_bar);
            let _ = x_bar; // the substituted exponent uses x+ instead
            let x_plus2: Vec<f64> = z_plus.x.iter().map(|v| v * v).collect();
            let abs_xplus2 = a.abs_tr_mul_vec(&x_plus2);
            let mut expected: Vec<f64> = ybar
                .logy()
                .iter()
                .enumerate()
                .map(|(j, ly)| {
                    ly - (v.y[j] + abs_xplus2[j] - pre.abs_x2[j]
                        + alpha * (z_plus.logy()[j] - z.logy()[j]))
                        / beta
                })
                .collect();
            simplex::log_normalize(&mut expected);
            for j in 0..4 {
                assert_relative_eq!(ybar_plus[j], expected[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn iteration_bound_formula() {
        // d = 2, L = 1, eps = 0.1: ceil(60 (8 ln 2 + 1)) = 393.
        assert_eq!(iteration_bound(1.0, 2, 0.1), 393);
    }

    #[test]
    fn solve_identity_game() {
        let inst = eye2_inst();
        let sol = solve(&inst, &SolverParams::new(0.1)).unwrap();
        assert!(sol.final_gap <= 0.1, "gap {}", sol.final_gap);
        assert!((sol.value - (-1.0)).abs() <= 0.1, "value {}", sol.value);
        sol.trace.validate().unwrap();
    }

    #[test]
    fn solve_zero_matrix_is_direct() {
        let inst = BoxSimplexInstance::new(
            SparseMatrix::from_triplets(3, 4, &[]).unwrap(),
            vec![0.4, -0.2, 0.9, -0.2],
            vec![1.0, -2.0, 0.0],
        )
        .unwrap();
        let sol = solve(&inst, &SolverParams::new(0.01)).unwrap();
        assert_eq!(sol.x, vec![-1.0, 1.0, 0.0]);
        assert_eq!(sol.iterations_run, 0);
        assert!(sol.final_gap.abs() <= 1e-12);
        // y concentrates on the first argmin of b.
        assert!(sol.y[1] > 1.0 - 1e-12);
    }

    #[test]
    fn solve_with_zero_rows_matches_contract() {
        let inst = BoxSimplexInstance::new(
            SparseMatrix::from_dense(&[
                vec![0.0, 0.0],
                vec![1.0, -0.5],
                vec![0.0, 0.0],
            ])
            .unwrap(),
            vec![0.1, -0.3],
            vec![2.0, 0.2, -1.5],
        )
        .unwrap();
        let sol = solve(&inst, &SolverParams::new(0.05)).unwrap();
        assert_eq!(sol.x[0], -1.0);
        assert_eq!(sol.x[2], 1.0);
        assert!(sol.final_gap <= 0.05);
    }

    #[test]
    fn solve_rejects_nonpositive_epsilon() {
        let inst = eye2_inst();
        assert!(solve(&inst, &SolverParams::new(0.0)).is_err());
        assert!(solve(&inst, &SolverParams::new(-1.0)).is_err());
    }

    #[test]
    fn deterministic_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let dense: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let inst =
            BoxSimplexInstance::new(SparseMatrix::from_dense(&dense).unwrap(), b, c).unwrap();
        let params = SolverParams::new(0.05 * inst.lipschitz());
        let s1 = solve(&inst, &params).unwrap();
        let s2 = solve(&inst, &params).unwrap();
        assert_eq!(s1.x, s2.x);
        assert_eq!(s1.y, s2.y);
        assert_eq!(
            s1.trace.samples.iter().map(|s| s.gap.to_bits()).collect::<Vec<_>>(),
            s2.trace.samples.iter().map(|s| s.gap.to_bits()).collect::<Vec<_>>()
        );
    }

    /// Per-iteration combination inequality (the telescoping engine):
    /// `<eta g(z'), z' - u> <= 2 V^(4)_z(u) - 2 V^(4)_{z+}(u)
    ///                        + 2 V^(4h)_{ybar}(u_y) - 2 V^(4h)_{ybar+}(u_y)`.
    /// Also checks iterate feasibility and the running-average invariant.
    #[test]
    fn stepwise_combination_inequality_and_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 5;
        let d = 6;
        let dense: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let inst =
            BoxSimplexInstance::new(SparseMatrix::from_dense(&dense).unwrap(), b, c).unwrap();
        let scaled = inst.scaled(1.0 / inst.lipschitz());
        let a = scaled.matrix();
        let t_total = 30;
        let mut state = OracleState::new(&scaled, SolverParams::new(0.1), t_total);
        let mut sum_x = vec![0.0; n];
        let mut sum_y = vec![0.0; d];
        let eta = 1.0 / 3.0;
        for t in 0..t_total {
            let z_before = state.z().clone();
            let ybar_before = state.ybar_log().to_vec();
            let z_prime = state.step();
            let z_after = state.z().clone();
            let ybar_after = state.ybar_log().to_vec();

            z_after.validate().unwrap();
            assert!(z_prime.x.iter().all(|v| v.abs() <= 1.0));

            let (gx, gy) = scaled.gradient(&z_prime).unwrap();
            let zy = z_prime.y();
            for (sx, v) in sum_x.iter_mut().zip(&z_prime.x) {
                *sx += v;
            }
            for (sy, v) in sum_y.iter_mut().zip(&zy) {
                *sy += v;
            }
            for _ in 0..10 {
                let u = random_point(&mut rng, n, d);
                let uy = u.y();
                let mut lhs = 0.0;
                for i in 0..n {
                    lhs += eta * gx[i] * (z_prime.x[i] - u.x[i]);
                }
                for j in 0..d {
                    lhs += eta * gy[j] * (zy[j] - uy[j]);
                }
                let rhs = 2.0 * reg::bregman(a, 4.0, &z_before, &u)
                    - 2.0 * reg::bregman(a, 4.0, &z_after, &u)
                    + 2.0 * reg::entropy_bregman_logs(4.0, &ybar_before, u.logy())
                    - 2.0 * reg::entropy_bregman_logs(4.0, &ybar_after, u.logy());
                assert!(lhs <= rhs + 1e-8, "iteration {t}: {lhs} > {rhs}");
            }

            // Running average after t steps is (1/T) of the prefix sum.
            let (ax, ay) = state.running_average();
            for i in 0..n {
                assert_relative_eq!(ax[i], sum_x[i] / t_total as f64, epsilon = 1e-12);
            }
            for j in 0..d {
                assert_relative_eq!(ay[j], sum_y[j] / t_total as f64, epsilon = 1e-12);
            }
        }
    }

    /// Steady-state sparse-product budget: at most 10 per iteration.
    #[test]
    fn per_iteration_product_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let dense: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let inst = BoxSimplexInstance::new(
            SparseMatrix::from_dense(&dense).unwrap(),
            vec![0.0; 8],
            vec![0.0; 8],
        )
        .unwrap();
        let scaled = inst.scaled(1.0 / inst.lipschitz());
        let mut state = OracleState::new(&scaled, SolverParams::new(0.1), 10);
        state.step(); // warm-up carries the caches forward
        scaled.matrix().reset_product_count();
        for _ in 0..5 {
            state.step();
        }
        let per_iter = scaled.matrix().product_count() as f64 / 5.0;
        assert!(per_iter <= 10.0, "products per iteration: {per_iter}");
    }
}
