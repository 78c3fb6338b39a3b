//! Box-simplex game instances and the exact duality-gap certificate.
//!
//! The canonical game is
//!
//! ```text
//! min_{x in [-1,1]^n}  max_{y in simplex^d}   x' A y - b' y + c' x
//! ```
//!
//! with Lipschitz scale `L = |A|_{1->1}`, the largest l1 norm of any column.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simplex;
use crate::sparse::SparseMatrix;

/// `|A|_{1->1}`: the maximum over columns of the column's l1 norm.
/// Returns 0 for the all-zero matrix.
pub fn lipschitz_1to1(a: &SparseMatrix) -> f64 {
    a.col_abs_sums().into_iter().fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct BoxSimplexInstance {
    a: SparseMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
    lip: f64,
}

impl BoxSimplexInstance {
    pub fn new(a: SparseMatrix, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if b.len() != a.cols() {
            return Err(Error::DimensionMismatch(format!(
                "b has length {}, expected {} (columns of A)",
                b.len(),
                a.cols()
            )));
        }
        if c.len() != a.rows() {
            return Err(Error::DimensionMismatch(format!(
                "c has length {}, expected {} (rows of A)",
                c.len(),
                a.rows()
            )));
        }
        for (name, v) in [("b", &b), ("c", &c)] {
            if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("{name} contains {bad}")));
            }
        }
        let lip = lipschitz_1to1(&a);
        Ok(Self { a, b, c, lip })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Box dimension `n`.
    pub fn box_dim(&self) -> usize {
        self.a.rows()
    }

    /// Simplex dimension `d`.
    pub fn simplex_dim(&self) -> usize {
        self.a.cols()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lip
    }

    /// The instance with `A, b, c` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> BoxSimplexInstance {
        BoxSimplexInstance::new(
            self.a.scaled(factor),
            self.b.iter().map(|v| factor * v).collect(),
            self.c.iter().map(|v| factor * v).collect(),
        )
        .expect("scaling preserves well-formedness")
    }

    /// Payoff `f(x, y) = x' A y - b' y + c' x`.
    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.a.mul_vec(y);
        let bilinear: f64 = x.iter().zip(&ay).map(|(xi, v)| xi * v).sum();
        let by: f64 = self.b.iter().zip(y).map(|(bi, yi)| bi * yi).sum();
        let cx: f64 = self.c.iter().zip(x).map(|(ci, xi)| ci * xi).sum();
        bilinear - by + cx
    }

    /// Gradient operator `g(x, y) = (A y + c, b - A' x)`.
    pub fn gradient(&self, z: &PrimalDualPoint) -> Result<(Vec<f64>, Vec<f64>)> {
        if z.x.len() != self.box_dim() || z.logy.len() != self.simplex_dim() {
            return Err(Error::DimensionMismatch(format!(
                "point is ({}, {}), instance is ({}, {})",
                z.x.len(),
                z.logy.len(),
                self.box_dim(),
                self.simplex_dim()
            )));
        }
        let y = z.y();
        let mut gx = self.a.mul_vec(&y);
        for (g, ci) in gx.iter_mut().zip(&self.c) {
            *g += ci;
        }
        let atx = self.a.tr_mul_vec(&z.x);
        let gy = self.b.iter().zip(&atx).map(|(bi, v)| bi - v).collect();
        Ok((gx, gy))
    }

    /// Exact duality gap
    /// `[c'x + max_j (A'x - b)_j] + [|A y + c|_1 + b'y]`,
    /// always nonnegative (up to roundoff).
    ///
    /// The two brackets are the closed forms of the inner `max` over the
    /// simplex (a coordinate max) and the inner `min` over the box (a negated
    /// l1 norm).
    pub fn duality_gap(&self, x: &[f64], y: &[f64]) -> f64 {
        let atx = self.a.tr_mul_vec(x);
        let best_y = atx
            .iter()
            .zip(&self.b)
            .map(|(v, bi)| v - bi)
            .fold(f64::NEG_INFINITY, f64::max);
        let cx: f64 = self.c.iter().zip(x).map(|(ci, xi)| ci * xi).sum();

        let ay = self.a.mul_vec(y);
        let l1: f64 = ay.iter().zip(&self.c).map(|(v, ci)| (v + ci).abs()).sum();
        let by: f64 = self.b.iter().zip(y).map(|(bi, yi)| bi * yi).sum();

        (cx + best_y) + (l1 + by)
    }

    pub fn duality_gap_at(&self, z: &PrimalDualPoint) -> f64 {
        self.duality_gap(&z.x, &z.y())
    }

    /// Role swap for reductions in which the simplex player minimizes.
    ///
    /// Reading this instance's data `(A, b, c)` as the game
    /// `min_{s in simplex} max_{x in box} x' A s + b' s + c' x`,
    /// the returned canonical instance is `(-A, b, -c)`. A point `(x, y)` has
    /// the same duality gap in both games (with the simplex-min player at
    /// `y`), and the canonical value is the negation of the original value.
    /// Applying `dualize` twice recovers the original data.
    pub fn dualize(&self) -> BoxSimplexInstance {
        BoxSimplexInstance::new(
            self.a.negated(),
            self.b.clone(),
            self.c.iter().map(|v| -v).collect(),
        )
        .expect("dualize preserves well-formedness")
    }
}

/// A box point paired with a simplex point held as normalized log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub x: Vec<f64>,
    logy: Vec<f64>,
}

impl PrimalDualPoint {
    /// Builds a point, normalizing the log-weights.
    pub fn new(x: Vec<f64>, mut logy: Vec<f64>) -> Self {
        simplex::log_normalize(&mut logy);
        Self { x, logy }
    }

    /// The initial point `z0 = (0, uniform)`, the minimizer of the regularizer.
    pub fn origin(n: usize, d: usize) -> Self {
        Self {
            x: vec![0.0; n],
            logy: simplex::uniform_logs(d),
        }
    }

    pub fn from_simplex(x: Vec<f64>, y: &[f64]) -> Self {
        let logy = y
            .iter()
            .map(|&v| if v > 0.0 { v.ln() } else { simplex::LOG_FLOOR })
            .collect();
        Self::new(x, logy)
    }

    /// Replaces the box component, keeping the simplex component.
    pub fn with_x(mut self, x: Vec<f64>) -> Self {
        self.x = x;
        self
    }

    /// Normalized log-weights of the simplex component.
    pub fn logy(&self) -> &[f64] {
        &self.logy
    }

    /// Materializes the simplex component.
    pub fn y(&self) -> Vec<f64> {
        simplex::exp_normalized(&self.logy)
    }

    /// Checks `|x|_inf <= 1`, strict positivity of `y`, and `|sum y - 1| <= 1e-12`.
    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.x.iter().find(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "box component has entry {bad} outside [-1, 1]"
            )));
        }
        let y = self.y();
        if y.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidParameter(
                "simplex component has a nonpositive entry".into(),
            ));
        }
        let sum: f64 = y.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "simplex component sums to {sum}"
            )));
        }
        Ok(())
    }
}

/// Solver parameters. Defaults follow the analysis constants:
/// `alpha = beta = 2`, `gamma = 4`, `eta = 1/3`.
#[derive(Debug, Clone, Serialize)]
pub struct SolverParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub max_iters: Option<usize>,
    pub seed: u64,
    /// Gap-recording stride; defaults to `ceil(T / 100)`.
    pub trace_every: Option<usize>,
}

impl SolverParams {
    pub fn new(epsilon: f64) -> Self {
        Self {
            alpha: 2.0,
            beta: 2.0,
            gamma: 4.0,
            eta: 1.0 / 3.0,
            epsilon,
            max_iters: None,
            seed: 0,
            trace_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0 / 3.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "eta must lie in (0, 1/3], got {}",
                self.eta
            )));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidParameter(
                "alpha, beta, gamma must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}
