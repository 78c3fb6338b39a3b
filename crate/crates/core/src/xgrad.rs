//! A unified extragradient framework over product box/simplex domains:
//! exact proximal oracles, the relaxed mirror-prox loop, and sampling
//! checkers for the three Lipschitzness notions
//! (three-divergence, two-divergence, and area convexity).

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::simplex;
use crate::sparse::SparseMatrix;
use crate::subproblem;

/// Shape of a product domain, block by block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Block {
    /// `[-1, 1]^dim`
    Box { dim: usize },
    /// probability simplex on `dim` atoms
    Simplex { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub blocks: Vec<Block>,
}

impl Domain {
    pub fn new(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    pub fn dim(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| match b {
                Block::Box { dim } | Block::Simplex { dim } => *dim,
            })
            .sum()
    }

    /// Block offsets into a flat point.
    pub fn offsets(&self) -> Vec<(usize, &Block)> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut at = 0;
        for b in &self.blocks {
            out.push((at, b));
            at += match b {
                Block::Box { dim } | Block::Simplex { dim } => *dim,
            };
        }
        out
    }

    /// The canonical center: zero on box blocks, uniform on simplex blocks.
    pub fn center(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        for b in &self.blocks {
            match b {
                Block::Box { dim } => z.extend(std::iter::repeat(0.0).take(*dim)),
                Block::Simplex { dim } => z.extend(std::iter::repeat(1.0 / *dim as f64).take(*dim)),
            }
        }
        z
    }

    /// Uniform draw: uniform on box blocks, flat Dirichlet on simplex blocks.
    pub fn sample_uniform(&self, rng: &mut ChaCha20Rng) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        for b in &self.blocks {
            match b {
                Block::Box { dim } => {
                    z.extend((0..*dim).map(|_| rng.gen_range(-1.0..1.0)));
                }
                Block::Simplex { dim } => {
                    // Flat Dirichlet via normalized Exp(1) draws.
                    let e: Vec<f64> = (0..*dim)
                        .map(|_| -rng.gen_range(f64::MIN_POSITIVE..1.0f64).ln())
                        .collect();
                    let s: f64 = e.iter().sum();
                    z.extend(e.into_iter().map(|v| (v / s).max(1e-12)));
                }
            }
        }
        z
    }

    /// Perturbation of `base` at scale `sigma`, projected back to the domain.
    /// Area-convexity violations (if any) are local, so checkers mix these
    /// with uniform draws.
    pub fn sample_near(&self, base: &[f64], sigma: f64, rng: &mut ChaCha20Rng) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        for (off, b) in self.offsets() {
            match b {
                Block::Box { dim } => {
                    for i in 0..*dim {
                        z.push((base[off + i] + sigma * rng.gen_range(-1.0..1.0)).clamp(-1.0, 1.0));
                    }
                }
                Block::Simplex { dim } => {
                    let mut logs: Vec<f64> = (0..*dim)
                        .map(|i| base[off + i].max(1e-300).ln() + sigma * rng.gen_range(-1.0..1.0))
                        .collect();
                    simplex::log_normalize(&mut logs);
                    z.extend(simplex::exp_normalized(&logs));
                }
            }
        }
        z
    }
}

/// An evaluation map `z -> g(z)` over a product domain, with the domain
/// shape as metadata. Monotonicity is a sampled invariant, not a type-level
/// guarantee.
pub struct MonotoneOperator {
    pub domain: Domain,
    eval: Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl MonotoneOperator {
    pub fn new(domain: Domain, eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self {
            domain,
            eval: Box::new(eval),
        }
    }

    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        (self.eval)(z)
    }

    /// Gradient operator of the box-simplex game `(A y + c, b - A' x)` over
    /// box(n) x simplex(d).
    pub fn box_simplex_game(a: SparseMatrix, b: Vec<f64>, c: Vec<f64>) -> Self {
        let n = a.rows();
        let d = a.cols();
        let domain = Domain::new(vec![Block::Box { dim: n }, Block::Simplex { dim: d }]);
        Self::new(domain, move |z: &[f64]| {
            let (x, y) = z.split_at(n);
            let mut g = a.mul_vec(y);
            for (gi, ci) in g.iter_mut().zip(&c) {
                *gi += ci;
            }
            let atx = a.tr_mul_vec(x);
            g.extend(b.iter().zip(&atx).map(|(bi, v)| bi - v));
            g
        })
    }

    /// Gradient operator of the simplex-simplex matrix game
    /// `min_{y1} max_{y2} y1' M y2`: `g = (M y2, -M' y1)`.
    pub fn matrix_game(m: Vec<Vec<f64>>) -> Self {
        let r = m.len();
        let c = m[0].len();
        let domain = Domain::new(vec![Block::Simplex { dim: r }, Block::Simplex { dim: c }]);
        Self::new(domain, move |z: &[f64]| {
            let (y1, y2) = z.split_at(r);
            let mut g = vec![0.0; r + c];
            for i in 0..r {
                for j in 0..c {
                    g[i] += m[i][j] * y2[j];
                    g[r + j] -= m[i][j] * y1[i];
                }
            }
            g
        })
    }

    /// Sampled monotonicity: `min <g(w) - g(z), w - z>` over random pairs.
    pub fn monotonicity_deficit(&self, samples: usize, seed: u64) -> f64 {
        use rand::SeedableRng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut worst = f64::INFINITY;
        for _ in 0..samples {
            let z = self.domain.sample_uniform(&mut rng);
            let w = self.domain.sample_uniform(&mut rng);
            let gz = self.eval(&z);
            let gw = self.eval(&w);
            let ip: f64 = (0..z.len()).map(|i| (gw[i] - gz[i]) * (w[i] - z[i])).sum();
            worst = worst.min(ip);
        }
        worst
    }
}

/// An exact proximal oracle for a regularizer `r`: the step map
/// `(z, g) -> argmin_w <g, w> + V^r_z(w)`, plus the divergence, gradient,
/// and value of `r` (needed by the regret and area-convexity checkers).
pub struct ProximalOracle {
    pub name: String,
    step: Box<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>,
    bregman: Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
    grad: Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    value: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl ProximalOracle {
    pub fn step(&self, z: &[f64], g: &[f64]) -> Vec<f64> {
        (self.step)(z, g)
    }

    pub fn bregman(&self, z: &[f64], w: &[f64]) -> f64 {
        (self.bregman)(z, w)
    }

    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        (self.grad)(z)
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        (self.value)(z)
    }

    /// `r(y) = scale * sum y ln y` on one simplex block; the step is the KL
    /// prox [`entropy_prox`].
    pub fn entropy(dim: usize, scale: f64) -> Self {
        assert!(scale > 0.0);
        let _ = dim;
        Self {
            name: format!("entropy*{scale}"),
            step: Box::new(move |z, g| entropy_prox(z, g, scale)),
            bregman: Box::new(move |z, w| scale * simplex::kl(w, z)),
            grad: Box::new(move |z| {
                z.iter().map(|&v| scale * (v.max(1e-300).ln() + 1.0)).collect()
            }),
            value: Box::new(move |z| scale * simplex::neg_entropy(z)),
        }
    }

    /// `r(x) = (scale/2) |x|^2` on one box block; the step is a clipped
    /// Euclidean step.
    pub fn squared_box(scale: f64) -> Self {
        assert!(scale > 0.0);
        Self {
            name: format!("sq-box*{scale}"),
            step: Box::new(move |z, g| {
                z.iter()
                    .zip(g)
                    .map(|(zi, gi)| (zi - gi / scale).clamp(-1.0, 1.0))
                    .collect()
            }),
            bregman: Box::new(move |z, w| {
                0.5 * scale * z.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            }),
            grad: Box::new(move |z| z.iter().map(|v| scale * v).collect()),
            value: Box::new(move |z| 0.5 * scale * z.iter().map(|v| v * v).sum::<f64>()),
        }
    }

    /// Product of per-block oracles over a product domain.
    pub fn product(parts: Vec<(usize, ProximalOracle)>) -> Self {
        let name = parts
            .iter()
            .map(|(_, o)| o.name.clone())
            .collect::<Vec<_>>()
            .join(" x ");
        let dims: Vec<usize> = parts.iter().map(|(d, _)| *d).collect();
        let oracles = std::sync::Arc::new(
            parts.into_iter().map(|(_, o)| o).collect::<Vec<_>>(),
        );
        let split = {
            let dims = dims.clone();
            move |z: &[f64]| -> Vec<Vec<f64>> {
                let mut out = Vec::new();
                let mut at = 0;
                for &d in &dims {
                    out.push(z[at..at + d].to_vec());
                    at += d;
                }
                out
            }
        };
        let (split2, split3, split4) = (split.clone(), split.clone(), split.clone());
        let (o1, o2, o3, o4) = (
            oracles.clone(),
            oracles.clone(),
            oracles.clone(),
            oracles,
        );
        Self {
            name,
            step: Box::new(move |z, g| {
                let zs = split(z);
                let gs = split(g);
                zs.iter()
                    .zip(gs.iter())
                    .zip(o1.iter())
                    .flat_map(|((zb, gb), o)| o.step(zb, gb))
                    .collect()
            }),
            bregman: Box::new(move |z, w| {
                let zs = split2(z);
                let ws = split2(w);
                zs.iter()
                    .zip(ws.iter())
                    .zip(o2.iter())
                    .map(|((zb, wb), o)| o.bregman(zb, wb))
                    .sum()
            }),
            grad: Box::new(move |z| {
                split3(z)
                    .iter()
                    .zip(o3.iter())
                    .flat_map(|(zb, o)| o.grad(zb))
                    .collect()
            }),
            value: Box::new(move |z| {
                split4(z)
                    .iter()
                    .zip(o4.iter())
                    .map(|(zb, o)| o.value(zb))
                    .sum()
            }),
        }
    }

    /// The box-simplex regularizer `r_A^(alpha)` over box(n) x simplex(d).
    /// The prox subproblem has no closed form; it is served by the
    /// relatively-smooth subproblem solver (so `alpha` must be 2).
    pub fn box_simplex_reg(a: SparseMatrix, alpha: f64) -> Self {
        use crate::reg;
        let n = a.rows();
        let (a2, a3, a4) = (a.clone(), a.clone(), a.clone());
        fn as_point(n: usize, z: &[f64]) -> crate::problem::PrimalDualPoint {
            let (x, y) = z.split_at(n);
            crate::problem::PrimalDualPoint::from_simplex(x.to_vec(), y)
        }
        Self {
            name: format!("r_A^({alpha})"),
            step: Box::new(move |z, g| {
                let zp = as_point(n, z);
                let (rx, ry) = reg::regularizer_grad(&a, alpha, &zp);
                let vx: Vec<f64> = g[..n].iter().zip(&rx).map(|(gi, ri)| gi - ri).collect();
                let vy: Vec<f64> = g[n..].iter().zip(&ry).map(|(gi, ri)| gi - ri).collect();
                let sol = subproblem::minimize_subproblem(&a, &vx, &vy, alpha, 1e-13)
                    .expect("prox subproblem parameters are valid");
                let mut out = sol.point.x.clone();
                out.extend(sol.point.y());
                out
            }),
            bregman: Box::new(move |z, w| {
                reg::bregman(&a2, alpha, &as_point(n, z), &as_point(n, w))
            }),
            grad: Box::new(move |z| {
                let (gx, gy) = reg::regularizer_grad(&a3, alpha, &as_point(n, z));
                let mut out = gx;
                out.extend(gy);
                out
            }),
            value: Box::new(move |z| reg::regularizer(&a4, alpha, &as_point(n, z))),
        }
    }
}

/// KL proximal step on the simplex: `argmin <g, w> + scale * KL(w || y)`,
/// i.e. `w ~ y o exp(-g / scale)`, computed in the log domain.
pub fn entropy_prox(y: &[f64], g: &[f64], scale: f64) -> Vec<f64> {
    assert!(scale > 0.0, "entropy_prox: scale must be positive");
    assert_eq!(y.len(), g.len(), "entropy_prox: length mismatch");
    let mut logs: Vec<f64> = y
        .iter()
        .zip(g)
        .map(|(&yi, &gi)| yi.max(1e-300).ln() - gi / scale)
        .collect();
    simplex::log_normalize(&mut logs);
    simplex::exp_normalized(&logs)
}

#[derive(Debug, Clone)]
pub struct RegretCheck {
    /// `(1/T) sum_t <g(w_t), w_t - u>`
    pub avg_regret: f64,
    /// `(2 / (eta T)) V^r_{z0}(u)`
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug)]
pub struct MirrorProxOutcome {
    pub average: Vec<f64>,
    pub regret_checks: Vec<RegretCheck>,
    /// Worst slack of the per-step telescoping inequality
    /// `<eta g(w_t), w_t - u> <= 2 V_{z_t}(u) - 2 V_{z_{t+1}}(u)`
    /// over the run and comparators (positive = violated).
    pub worst_step_slack: f64,
}

/// The relaxed mirror-prox loop: `w_t = Prox_{z_t}(eta g(z_t))`,
/// `z_{t+1} = Prox_{z_t}((eta/2) g(w_t))`. Under `1/eta`-relaxed relative
/// Lipschitzness the averaged regret against any `u` is bounded by
/// `(2/(eta T)) V^r_{z0}(u)`; the bound is verified for each supplied
/// comparator.
pub fn relaxed_mirror_prox(
    g: &MonotoneOperator,
    prox: &ProximalOracle,
    z0: &[f64],
    eta: f64,
    t_total: usize,
    comparators: &[Vec<f64>],
) -> Result<MirrorProxOutcome> {
    if eta <= 0.0 || t_total == 0 {
        return Err(Error::InvalidParameter(
            "eta must be positive and T >= 1".into(),
        ));
    }
    let dim = g.domain.dim();
    if z0.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "z0 has length {}, domain dimension is {dim}",
            z0.len()
        )));
    }
    let mut z = z0.to_vec();
    let mut sum_w = vec![0.0; dim];
    let mut regrets = vec![0.0; comparators.len()];
    let mut worst_step_slack = f64::NEG_INFINITY;
    for _ in 0..t_total {
        let gz = g.eval(&z);
        let scaled: Vec<f64> = gz.iter().map(|v| eta * v).collect();
        let w = prox.step(&z, &scaled);
        let gw = g.eval(&w);
        let half: Vec<f64> = gw.iter().map(|v| eta / 2.0 * v).collect();
        let z_next = prox.step(&z, &half);
        for (s, wi) in sum_w.iter_mut().zip(&w) {
            *s += wi;
        }
        for (k, u) in comparators.iter().enumerate() {
            let r: f64 = (0..dim).map(|i| gw[i] * (w[i] - u[i])).sum();
            regrets[k] += r;
            let lhs = eta * r;
            let rhs = 2.0 * prox.bregman(&z, u) - 2.0 * prox.bregman(&z_next, u);
            worst_step_slack = worst_step_slack.max(lhs - rhs);
        }
        z = z_next;
    }
    let average: Vec<f64> = sum_w.iter().map(|v| v / t_total as f64).collect();
    let regret_checks = comparators
        .iter()
        .zip(&regrets)
        .map(|(u, acc)| {
            let avg_regret = acc / t_total as f64;
            let bound = 2.0 / (eta * t_total as f64) * prox.bregman(z0, u);
            RegretCheck {
                avg_regret,
                bound,
                holds: avg_regret <= bound + 1e-8,
            }
        })
        .collect();
    Ok(MirrorProxOutcome {
        average,
        regret_checks,
        worst_step_slack,
    })
}

/// Violation report for the three Lipschitzness notions over sampled triples.
#[derive(Debug, Clone, Default)]
pub struct RrlReport {
    pub samples: usize,
    /// Max violation of the three-divergence inequality (relaxed relative
    /// Lipschitzness).
    pub max_violation_three_div: f64,
    /// Max violation of the two-divergence inequality (relative
    /// Lipschitzness).
    pub max_violation_two_div: f64,
    /// Max violation of the area-convexity inequality.
    pub max_violation_area: f64,
    /// Triples where the two-divergence form held but the three-divergence
    /// form did not (must be zero).
    pub implication_failures_two_div: usize,
    /// Triples where the area form held but the three-divergence form did
    /// not (must be zero).
    pub implication_failures_area: usize,
}

/// Samples triples `(z, z', z+)` and evaluates
/// `eta <g(z') - g(z), z' - z+>` against the three right-hand sides:
/// three divergences, two divergences, and the area form
/// `r(z) + r(z') + r(z+) - 3 r(c)` at the centroid `c`. Also checks
/// pointwise that a pass of either stricter form implies a pass of the
/// three-divergence form.
pub fn check_rrl(
    g: &MonotoneOperator,
    r: &ProximalOracle,
    eta: f64,
    samples: usize,
    seed: u64,
) -> RrlReport {
    use rand::SeedableRng;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let dim = g.domain.dim();
    let base = g.domain.center();
    let mut report = RrlReport {
        samples,
        max_violation_three_div: f64::NEG_INFINITY,
        max_violation_two_div: f64::NEG_INFINITY,
        max_violation_area: f64::NEG_INFINITY,
        ..Default::default()
    };
    for k in 0..samples {
        let draw = |rng: &mut ChaCha20Rng, anchor: &[f64]| -> Vec<f64> {
            match k % 3 {
                0 => g.domain.sample_uniform(rng),
                1 => g.domain.sample_near(anchor, 0.1, rng),
                _ => g.domain.sample_near(anchor, 0.01, rng),
            }
        };
        let z = if k % 3 == 0 {
            g.domain.sample_uniform(&mut rng)
        } else {
            g.domain.sample_near(&base, 0.5, &mut rng)
        };
        let z1 = draw(&mut rng, &z);
        let z2 = draw(&mut rng, &z1);
        let gz = g.eval(&z);
        let gz1 = g.eval(&z1);
        let lhs: f64 = (0..dim)
            .map(|i| eta * (gz1[i] - gz[i]) * (z1[i] - z2[i]))
            .sum();
        let v_z_z1 = r.bregman(&z, &z1);
        let v_z1_z2 = r.bregman(&z1, &z2);
        let v_z_z2 = r.bregman(&z, &z2);
        let centroid: Vec<f64> = (0..dim).map(|i| (z[i] + z1[i] + z2[i]) / 3.0).collect();
        let area = r.value(&z) + r.value(&z1) + r.value(&z2) - 3.0 * r.value(&centroid);

        let viol3 = lhs - (v_z_z1 + v_z1_z2 + v_z_z2);
        let viol2 = lhs - (v_z_z1 + v_z1_z2);
        let viol_area = lhs - area;
        report.max_violation_three_div = report.max_violation_three_div.max(viol3);
        report.max_violation_two_div = report.max_violation_two_div.max(viol2);
        report.max_violation_area = report.max_violation_area.max(viol_area);
        if viol2 <= 0.0 && viol3 > 1e-12 {
            report.implication_failures_two_div += 1;
        }
        if viol_area <= 0.0 && viol3 > 1e-12 {
            report.implication_failures_area += 1;
        }
    }
    report
}
