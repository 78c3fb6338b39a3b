//! Matrix-exponential query (MEQ) oracles.
//!
//! An `(eps, delta, gamma)`-MEQ oracle returns, for symmetric `{A_i}` and
//! `M`, values `V_i` with
//! `|V_i - <A_i, Y>| <= eps <|A_i|, Y> + gamma Tr|A_i|` for all `i`
//! simultaneously with probability `>= 1 - delta`, where
//! `Y = exp(M) / Tr exp(M)`.
//!
//! Two backends: an exact eigendecomposition path, and a randomized path
//! assembled from a Lanczos top-eigenvalue estimate (for the stabilizing
//! shift), a Chebyshev polynomial approximation of `exp(-x)`, and
//! Johnson-Lindenstrauss quadratic forms; the trace and the inner products
//! are estimated separately and composed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::spectral::{self, SymOp};

/// Row count of the JL sketch: `ceil(c_jl * eps^-2 * ln(d / delta))`.
pub fn sketch_rows(c_jl: f64, eps: f64, delta: f64, d: usize) -> usize {
    let ln_term = ((d as f64) / delta).ln().max(1.0);
    (c_jl * eps.powi(-2) * ln_term).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchKind {
    /// Rows are independent random unit vectors scaled by `k^{-1/2}`.
    RandomUnit,
    /// The identity sketch; makes the estimator exact in the JL stage.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpBackend {
    /// Chebyshev polynomial applied through matrix-vector products.
    Chebyshev,
    /// Dense eigendecomposition of the shifted matrix; makes the estimator
    /// exact in the polynomial stage.
    ExactEigen,
}

#[derive(Debug, Clone)]
pub struct MeqParams {
    /// Multiplicative tolerance against `<|A_i|, Y>`.
    pub eps_mul: f64,
    /// Failure probability.
    pub delta: f64,
    /// Additive tolerance against `Tr|A_i|`.
    pub gamma_add: f64,
    /// Spectral-norm bound on `M` (supplied by the caller).
    pub r_bound: f64,
    pub seed: u64,
    /// JL row-count constant (default 24).
    pub c_jl: f64,
    /// Polynomial degree constant (default 1.0), calibrated offline so the
    /// operator-norm bound holds with a 2x margin.
    pub c_poly: f64,
    /// Lanczos iteration constant (default 1.0).
    pub c_lanczos: f64,
    pub sketch: SketchKind,
    pub exp_backend: ExpBackend,
}

impl MeqParams {
    pub fn new(eps_mul: f64, delta: f64, gamma_add: f64, r_bound: f64, seed: u64) -> Self {
        Self {
            eps_mul,
            delta,
            gamma_add,
            r_bound,
            seed,
            c_jl: 24.0,
            c_poly: 1.0,
            c_lanczos: 1.0,
            sketch: SketchKind::RandomUnit,
            exp_backend: ExpBackend::Chebyshev,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_mul", self.eps_mul),
            ("delta", self.delta),
            ("gamma_add", self.gamma_add),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        if !(self.r_bound > 0.0 && self.r_bound.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "r_bound must be positive, got {}",
                self.r_bound
            )));
        }
        Ok(())
    }

    pub fn sketch_rows(&self, d: usize) -> usize {
        sketch_rows(self.c_jl, self.eps_mul, self.delta, d)
    }

    /// Effective spectral range: the stated preconditions require
    /// `R >= ln(1/eps)` and `R >= ln(1/gamma)`.
    fn effective_range(&self) -> f64 {
        self.r_bound
            .max((1.0 / self.eps_mul).ln())
            .max((1.0 / self.gamma_add).ln())
            .max(1.0)
    }
}

/// Exact MEQ: `V_i = <A_i, exp(M)/Tr exp(M)>` by eigendecomposition with the
/// max-eigenvalue shift.
pub fn meq_exact(mats: &[DMatrix<f64>], m: &DMatrix<f64>) -> Vec<f64> {
    let (y, _) = spectral::mat_exp_normalized(m);
    mats.iter().map(|a| spectral::frob(a, &y)).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct TopEig {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Largest eigenvalue of a PSD operator by Lanczos with a random start and
/// full reorthogonalization. The iteration budget is
/// `ceil(c * ln(d/(delta eps)) / sqrt(eps))`, capped at `d`; if the budget
/// is hit before the Ritz residual certifies an `eps`-relative estimate the
/// best estimate is returned with `converged = false`.
pub fn top_eigenvalue(op: &dyn SymOp, eps: f64, delta: f64, c_lanczos: f64, seed: u64) -> TopEig {
    let d = op.dim();
    let budget = ((c_lanczos * ((d as f64) / (delta * eps)).ln() / eps.sqrt()).ceil() as usize)
        .clamp(1, d);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut q = DVector::from_iterator(d, (0..d).map(|_| rng.gen_range(-1.0f64..1.0)));
    let norm = q.norm();
    if norm == 0.0 {
        q[0] = 1.0;
    } else {
        q /= norm;
    }
    let mut basis: Vec<DVector<f64>> = vec![q.clone()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut last_beta = 0.0;
    let mut exhausted = false;
    for j in 0..budget {
        let mut w = op.apply(&q);
        let alpha = q.dot(&w);
        alphas.push(alpha);
        // Full reorthogonalization; cheap at desk scale and keeps the Ritz
        // values trustworthy.
        for qq in &basis {
            let c = qq.dot(&w);
            w -= qq * c;
        }
        for qq in &basis {
            let c = qq.dot(&w);
            w -= qq * c;
        }
        let beta = w.norm();
        last_beta = beta;
        if beta <= 1e-13 * alpha.abs().max(1.0) {
            exhausted = true;
            break;
        }
        if j + 1 < budget {
            betas.push(beta);
            q = w / beta;
            basis.push(q.clone());
        }
    }
    let m = alphas.len();
    let mut tri = DMatrix::zeros(m, m);
    for (i, &a) in alphas.iter().enumerate() {
        tri[(i, i)] = a;
    }
    for (i, &b) in betas.iter().enumerate() {
        tri[(i, i + 1)] = b;
        tri[(i + 1, i)] = b;
    }
    let (vals, vecs) = spectral::sym_eigen(&tri);
    let (arg, theta) = vals
        .iter()
        .cloned()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("Ritz values are finite"))
        .unwrap_or((0, 0.0));
    let residual = if exhausted {
        0.0
    } else {
        last_beta * vecs[(m - 1, arg)].abs()
    };
    TopEig {
        value: theta,
        converged: exhausted || basis.len() == d || residual <= eps * theta.abs().max(1e-300),
        iterations: m,
    }
}

/// Chebyshev approximation of `exp(-x)` on `[0, range]`, truncated at
/// degree `ceil(c_poly (sqrt(range L) + L))` for `L = max(ln(1/eps), 1)`.
#[derive(Debug, Clone)]
pub struct ExpPolynomial {
    coeffs: Vec<f64>,
    range: f64,
}

impl ExpPolynomial {
    pub fn build(range: f64, eps: f64, c_poly: f64) -> Self {
        assert!(range > 0.0 && eps > 0.0 && eps < 1.0);
        let l = (1.0 / eps).ln().max(1.0);
        let degree = (c_poly * ((range * l).sqrt() + l)).ceil() as usize;
        let degree = degree.clamp(1, 4000);
        // Interpolation coefficients at Chebyshev nodes; the integrand is
        // entire so a modest oversampling reaches machine precision.
        let m = 2 * (degree + 1) + 32;
        let mut coeffs = vec![0.0; degree + 1];
        let nodes: Vec<f64> = (0..m)
            .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / m as f64).cos())
            .collect();
        let fvals: Vec<f64> = nodes.iter().map(|&t| (-range * (t + 1.0) / 2.0).exp()).collect();
        for (j, c) in coeffs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..m {
                acc += fvals[k] * (j as f64 * std::f64::consts::PI * (k as f64 + 0.5) / m as f64).cos();
            }
            *c = 2.0 * acc / m as f64;
        }
        coeffs[0] /= 2.0;
        Self { coeffs, range }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Scalar evaluation of the polynomial at `x` in `[0, range]`.
    pub fn eval(&self, x: f64) -> f64 {
        let t = 2.0 * x / self.range - 1.0;
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + 2.0 * t * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + t * b1 - b2
    }

    /// Clenshaw evaluation of `p(M) V` for a PSD operator with
    /// `0 <= M <= range I`, one operator application per degree.
    pub fn apply_block(&self, op: &dyn SymOp, v: &DMatrix<f64>) -> DMatrix<f64> {
        let t_apply = |x: &DMatrix<f64>| -> DMatrix<f64> { op.apply_block(x) * (2.0 / self.range) - x };
        let mut b1 = DMatrix::zeros(v.nrows(), v.ncols());
        let mut b2 = DMatrix::zeros(v.nrows(), v.ncols());
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = v * c + t_apply(&b1) * 2.0 - b2;
            b2 = b1;
            b1 = b0;
        }
        v * self.coeffs[0] + t_apply(&b1) - b2
    }

    pub fn apply(&self, op: &dyn SymOp, v: &DVector<f64>) -> DVector<f64> {
        let block = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        DVector::from_column_slice(self.apply_block(op, &block).column(0).as_slice())
    }
}

/// `p(Mtilde) v` for `0 <= Mtilde <= r I`, with
/// `|p - exp(-.)|_op <= eps_tilde`.
pub fn poly_exp_apply(
    mtilde: &dyn SymOp,
    r: f64,
    eps_tilde: f64,
    v: &DVector<f64>,
) -> DVector<f64> {
    ExpPolynomial::build(r, eps_tilde, 1.0).apply(mtilde, v)
}

/// `lambda_hat I - M`.
struct FlippedShift<'a> {
    inner: &'a dyn SymOp,
    lambda_hat: f64,
}

impl SymOp for FlippedShift<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        v * self.lambda_hat - self.inner.apply(v)
    }

    fn apply_block(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m * self.lambda_hat - self.inner.apply_block(m)
    }
}

/// Shift and sketch shared by the estimators: `lambda_hat` with
/// `lambda_max(M) <= lambda_hat <= lambda_max(M) + 1` (so the shifted matrix
/// `Mtilde = lambda_hat I - M` is PSD with an eigenvalue at most 1), the
/// range bound on `Mtilde`, and the JL sketch `Q` (k x d).
pub struct ExpQueryPlan {
    pub lambda_hat: f64,
    pub range: f64,
    pub sketch: DMatrix<f64>,
    pub top_eig_converged: bool,
}

impl ExpQueryPlan {
    pub fn build(
        op: &dyn SymOp,
        r: f64,
        k: usize,
        sketch_kind: SketchKind,
        c_lanczos: f64,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        let d = op.dim();
        // Estimate lambda_max(M + 2R I) to absolute error 1/2, then shift up.
        let eps_top = 1.0 / (6.0 * r);
        let shifted = spectral::ShiftedOp {
            inner: op,
            shift: 2.0 * r,
        };
        let top = top_eigenvalue(&shifted, eps_top, 0.25, c_lanczos, rng.gen());
        let lambda_hat = top.value + 0.5 - 2.0 * r;
        let range = (lambda_hat + r).max(1.0);
        let sketch = match sketch_kind {
            SketchKind::Identity => DMatrix::identity(d, d),
            SketchKind::RandomUnit => {
                // Rows are uniform unit vectors scaled by sqrt(d/k), so that
                // E |Q v|^2 = |v|^2 (each row contributes |v|^2 / k).
                let scale = ((d as f64) / (k as f64)).sqrt();
                let mut q = DMatrix::zeros(k, d);
                for i in 0..k {
                    let mut row: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
                    // Normalized Gaussian draws give uniform unit vectors;
                    // Box-Muller from two uniforms.
                    for pair in row.chunks_mut(2) {
                        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                        let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                        let r0 = (-2.0 * u1.ln()).sqrt();
                        pair[0] = r0 * u2.cos();
                        if pair.len() > 1 {
                            pair[1] = r0 * u2.sin();
                        }
                    }
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    for (j, v) in row.iter().enumerate() {
                        q[(i, j)] = scale * v / norm;
                    }
                }
                q
            }
        };
        Self {
            lambda_hat,
            range,
            sketch,
            top_eig_converged: top.converged,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TraceEstimate {
    pub value: f64,
    pub top_eig_converged: bool,
}

/// Multiplicative approximation of `Tr exp(M)` for `|M|_op <= r`:
/// `exp(lambda_hat) * sum_l q_l' p(Mtilde) q_l` over the sketch rows.
pub fn approx_trace_exp(
    op: &dyn SymOp,
    eps: f64,
    delta: f64,
    r: f64,
    seed: u64,
) -> Result<TraceEstimate> {
    let params = MeqParams::new(eps, delta, eps, r, seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    approx_trace_with(op, &params, &mut rng)
}

fn approx_trace_with(
    op: &dyn SymOp,
    params: &MeqParams,
    rng: &mut ChaCha20Rng,
) -> Result<TraceEstimate> {
    params.validate()?;
    let d = op.dim();
    let r = params.effective_range();
    let k = match params.sketch {
        SketchKind::Identity => d,
        SketchKind::RandomUnit => params.sketch_rows(d),
    };
    let plan = ExpQueryPlan::build(op, r, k, params.sketch, params.c_lanczos, rng);
    let mtilde = FlippedShift {
        inner: op,
        lambda_hat: plan.lambda_hat,
    };
    let qt = plan.sketch.transpose();
    let pq = match params.exp_backend {
        ExpBackend::Chebyshev => {
            // Quadratic-form error per sketch row is |p - exp|_op |q_l|^2
            // with |q_l|^2 = d/k, so the polynomial pays the extra d.
            let poly = ExpPolynomial::build(
                plan.range,
                params.eps_mul / (4.0 * std::f64::consts::E * d as f64),
                params.c_poly,
            );
            poly.apply_block(&mtilde, &qt)
        }
        ExpBackend::ExactEigen => {
            let dense = mtilde.apply_block(&DMatrix::identity(d, d));
            spectral::spectral_map(&spectral::symmetrize(&dense), |x| (-x).exp()) * &qt
        }
    };
    let mut quad = 0.0;
    for j in 0..qt.ncols() {
        quad += qt.column(j).dot(&pq.column(j));
    }
    Ok(TraceEstimate {
        value: plan.lambda_hat.exp() * quad,
        top_eig_converged: plan.top_eig_converged,
    })
}

/// Randomized `(eps, delta, gamma)`-MEQ oracle for dense symmetric `{A_i}`
/// and an operator handle on `M` with `|M|_op <= r_bound`.
///
/// The inner products and the trace are estimated separately (budget split
/// `eps/3` + `eps/3`, `gamma/2`) and composed; one polynomial block-apply is
/// shared across all `i`.
pub fn meq_sketched(
    mats: &[DMatrix<f64>],
    op: &dyn SymOp,
    params: &MeqParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    let d = op.dim();
    let r = params.effective_range();
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let k = match params.sketch {
        SketchKind::Identity => d,
        SketchKind::RandomUnit => params.sketch_rows(d),
    };
    let plan = ExpQueryPlan::build(op, r, k, params.sketch, params.c_lanczos, &mut rng);
    let mtilde = FlippedShift {
        inner: op,
        lambda_hat: plan.lambda_hat,
    };
    // V = p(Mtilde / 2) Q', shared across every A_i.
    let qt = plan.sketch.transpose();
    let half = HalfOp { inner: &mtilde };
    let v = match params.exp_backend {
        ExpBackend::Chebyshev => {
            let poly = ExpPolynomial::build(
                plan.range / 2.0,
                params.gamma_add / (6.0 * std::f64::consts::E * d as f64),
                params.c_poly,
            );
            poly.apply_block(&half, &qt)
        }
        ExpBackend::ExactEigen => {
            let dense = mtilde.apply_block(&DMatrix::identity(d, d));
            spectral::spectral_map(&spectral::symmetrize(&dense), |x| (-x / 2.0).exp()) * &qt
        }
    };
    // Trace estimate with its own budget share and sketch.
    let trace_params = MeqParams {
        eps_mul: params.eps_mul / 3.0,
        delta: params.delta / 2.0,
        ..params.clone()
    };
    let trace = approx_trace_with(op, &trace_params, &mut rng)?;
    if !(trace.value > 0.0) {
        return Err(Error::InvalidParameter(
            "trace estimate is nonpositive; spectral range bound likely violated".into(),
        ));
    }
    let scale = plan.lambda_hat.exp() / trace.value;
    Ok(mats
        .iter()
        .map(|a| {
            let av = a * &v;
            let mut quad = 0.0;
            for j in 0..v.ncols() {
                quad += v.column(j).dot(&av.column(j));
            }
            scale * quad
        })
        .collect())
}

struct HalfOp<'a> {
    inner: &'a dyn SymOp,
}

impl SymOp for HalfOp<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.inner.apply(v) * 0.5
    }

    fn apply_block(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.apply_block(m) * 0.5
    }
}

/// Checks the MEQ contract of `values` against the exact density: all
/// `|V_i - <A_i, Y>| <= eps <|A_i|, Y> + gamma Tr|A_i|`.
pub fn meq_bound_holds(
    mats: &[DMatrix<f64>],
    m: &DMatrix<f64>,
    values: &[f64],
    eps: f64,
    gamma: f64,
) -> bool {
    let (y, _) = spectral::mat_exp_normalized(m);
    mats.iter().zip(values).all(|(a, &v)| {
        let abs_a = spectral::mat_abs(a);
        let exact = spectral::frob(a, &y);
        let allowance = eps * spectral::frob(&abs_a, &y) + gamma * abs_a.trace();
        (v - exact).abs() <= allowance
    })
}
