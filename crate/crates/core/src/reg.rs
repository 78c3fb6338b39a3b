//! The weighted-quadratic-plus-entropy regularizer family
//! `r_A^(alpha)(x, y) = <|A| y, x^2> + alpha h(y)` and its Bregman divergences.

use crate::problem::PrimalDualPoint;
use crate::simplex;
use crate::sparse::SparseMatrix;

/// `r_A^(alpha)(x, y)`, with `0 ln 0 := 0`.
pub fn regularizer(a: &SparseMatrix, alpha: f64, z: &PrimalDualPoint) -> f64 {
    let y = z.y();
    let absy = a.abs_mul_vec(&y);
    let quad: f64 = absy.iter().zip(&z.x).map(|(q, xi)| q * xi * xi).sum();
    quad + alpha * simplex::neg_entropy(&y)
}

/// Bregman divergence `V^(alpha)_z(z')` of the regularizer.
///
/// Evaluated in the cancellation-free form
/// `<|A| y', (x'-x)^2> + 2 <|A|(y'-y), x o (x'-x)> + alpha KL(y' || y)`,
/// which costs two `|A|` products. Nonnegative for `alpha >= 1/2` by joint
/// convexity.
pub fn bregman(a: &SparseMatrix, alpha: f64, z: &PrimalDualPoint, z_new: &PrimalDualPoint) -> f64 {
    let y = z.y();
    let y_new = z_new.y();
    let dx: Vec<f64> = z_new.x.iter().zip(&z.x).map(|(a, b)| a - b).collect();
    let abs_ynew = a.abs_mul_vec(&y_new);
    let quad: f64 = abs_ynew.iter().zip(&dx).map(|(q, d)| q * d * d).sum();
    let dy: Vec<f64> = y_new.iter().zip(&y).map(|(a, b)| a - b).collect();
    let abs_dy = a.abs_mul_vec(&dy);
    let cross: f64 = abs_dy
        .iter()
        .zip(z.x.iter().zip(&dx))
        .map(|(q, (xi, d))| q * xi * d)
        .sum();
    quad + 2.0 * cross + alpha * simplex::kl_from_logs(z_new.logy(), z.logy())
}

/// Gradient of the regularizer:
/// `grad_x = 2 x o (|A| y)`, `grad_y = |A|' x^2 + alpha (log y + 1)`.
pub fn regularizer_grad(a: &SparseMatrix, alpha: f64, z: &PrimalDualPoint) -> (Vec<f64>, Vec<f64>) {
    let y = z.y();
    let absy = a.abs_mul_vec(&y);
    let gx = absy.iter().zip(&z.x).map(|(q, xi)| 2.0 * q * xi).collect();
    let x2: Vec<f64> = z.x.iter().map(|v| v * v).collect();
    let mut gy = a.abs_tr_mul_vec(&x2);
    for (g, ly) in gy.iter_mut().zip(z.logy()) {
        *g += alpha * (ly + 1.0);
    }
    (gx, gy)
}

/// `beta * KL(y' || y)` for plain simplex vectors. Divergence against a zero
/// coordinate is `+inf`, not a panic.
pub fn entropy_bregman(beta: f64, y: &[f64], y_new: &[f64]) -> f64 {
    beta * simplex::kl(y_new, y)
}

/// Log-domain variant of [`entropy_bregman`]; always finite.
pub fn entropy_bregman_logs(beta: f64, logy: &[f64], logy_new: &[f64]) -> f64 {
    beta * simplex::kl_from_logs(logy_new, logy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::BoxSimplexInstance;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn eye2() -> SparseMatrix {
        SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn regularizer_examples() {
        let a = eye2();
        let z0 = PrimalDualPoint::origin(2, 2);
        // alpha = 2 at the origin: 2 * (-ln 2).
        assert_relative_eq!(
            regularizer(&a, 2.0, &z0),
            -2.0 * std::f64::consts::LN_2,
            max_relative = 1e-14
        );
        // alpha = 0, x = (1,1): <y, 1> = 1.
        let z = PrimalDualPoint::from_simplex(vec![1.0, 1.0], &[0.5, 0.5]);
        assert_relative_eq!(regularizer(&a, 0.0, &z), 1.0, max_relative = 1e-14);
        // x = 0, alpha = 0: zero for any A, y.
        let z = PrimalDualPoint::from_simplex(vec![0.0, 0.0], &[0.3, 0.7]);
        assert_eq!(regularizer(&a, 0.0, &z), 0.0);
    }

    /// Direct evaluation of the Bregman divergence from its definition,
    /// `r(z') - r(z) - <grad r(z), z' - z>`, as an independent route.
    fn bregman_by_definition(
        a: &SparseMatrix,
        alpha: f64,
        z: &PrimalDualPoint,
        z_new: &PrimalDualPoint,
    ) -> f64 {
        let (gx, gy) = regularizer_grad(a, alpha, z);
        let lin_x: f64 = gx
            .iter()
            .zip(z_new.x.iter().zip(&z.x))
            .map(|(g, (xn, xo))| g * (xn - xo))
            .sum();
        let y = z.y();
        let y_new = z_new.y();
        let lin_y: f64 = gy
            .iter()
            .zip(y_new.iter().zip(&y))
            .map(|(g, (yn, yo))| g * (yn - yo))
            .sum();
        regularizer(a, alpha, z_new) - regularizer(a, alpha, z) - lin_x - lin_y
    }

    #[test]
    fn bregman_examples() {
        let a = eye2();
        let z0 = PrimalDualPoint::origin(2, 2);
        assert_eq!(bregman(&a, 2.0, &z0, &z0), 0.0);
        // u = ((1,1), (1,0)) meets the 1 + alpha log d bound with equality.
        let u = PrimalDualPoint::from_simplex(vec![1.0, 1.0], &[1.0, 0.0]);
        let v = bregman(&a, 2.0, &z0, &u);
        assert_relative_eq!(v, 1.0 + 2.0 * std::f64::consts::LN_2, epsilon = 1e-9);
    }

    #[test]
    fn bregman_matches_definition_and_is_nonnegative() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dense: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let a = SparseMatrix::from_dense(&dense).unwrap();
        for _ in 0..200 {
            let rand_point = |rng: &mut rand_chacha::ChaCha8Rng| {
                let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let logy: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..0.0)).collect();
                PrimalDualPoint::new(x, logy)
            };
            let z = rand_point(&mut rng);
            let z2 = rand_point(&mut rng);
            for alpha in [0.5, 2.0, 4.0] {
                let v = bregman(&a, alpha, &z, &z2);
                assert_relative_eq!(
                    v,
                    bregman_by_definition(&a, alpha, &z, &z2),
                    epsilon = 1e-9,
                    max_relative = 1e-9
                );
                assert!(v >= -1e-9, "joint convexity violated: {v}");
            }
        }
    }

    #[test]
    fn entropy_bregman_examples() {
        assert_eq!(entropy_bregman(4.0, &[0.5, 0.5], &[0.5, 0.5]), 0.0);
        let v = entropy_bregman(4.0, &[0.5, 0.5], &[0.8, 0.2]);
        let expected = 4.0 * (0.8f64 * 1.6f64.ln() + 0.2f64 * 0.4f64.ln());
        assert_relative_eq!(v, expected, max_relative = 1e-12);
        assert!((v - 0.77098).abs() < 1e-5);
        // Divergence against a zero coordinate is +inf, not a crash.
        assert!(entropy_bregman(1.0, &[1.0, 0.0], &[0.5, 0.5]).is_infinite());
    }

    /// Three-point identity: `<grad r(z') - grad r(z), u - z'> = V_z(u) - V_{z'}(u) - V_z(z')`.
    #[test]
    fn three_point_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let dense: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect();
        let a = SparseMatrix::from_dense(&dense).unwrap();
        let rand_point = |rng: &mut rand_chacha::ChaCha8Rng| {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let logy: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..0.0)).collect();
            PrimalDualPoint::new(x, logy)
        };
        for _ in 0..100 {
            let z = rand_point(&mut rng);
            let z2 = rand_point(&mut rng);
            let u = rand_point(&mut rng);
            let alpha = 2.0;
            let (gx1, gy1) = regularizer_grad(&a, alpha, &z);
            let (gx2, gy2) = regularizer_grad(&a, alpha, &z2);
            let y2 = z2.y();
            let uy = u.y();
            let mut lhs = 0.0;
            for i in 0..3 {
                lhs += (gx2[i] - gx1[i]) * (u.x[i] - z2.x[i]);
            }
            for j in 0..4 {
                lhs += (gy2[j] - gy1[j]) * (uy[j] - y2[j]);
            }
            let rhs = bregman(&a, alpha, &z, &u)
                - bregman(&a, alpha, &z2, &u)
                - bregman(&a, alpha, &z, &z2);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn divergence_from_origin_bounded() {
        // V_{z0}(u) <= 1 + alpha ln d on an instance scaled to L <= 1.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let dense: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let inst = BoxSimplexInstance::new(
            SparseMatrix::from_dense(&dense).unwrap(),
            vec![0.0; 6],
            vec![0.0; 5],
        )
        .unwrap();
        let scaled = inst.scaled(1.0 / inst.lipschitz());
        let z0 = PrimalDualPoint::origin(5, 6);
        let alpha = 2.0;
        let bound = 1.0 + alpha * 6f64.ln();
        for _ in 0..500 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let logy: Vec<f64> = (0..6).map(|_| rng.gen_range(-6.0..0.0)).collect();
            let u = PrimalDualPoint::new(x, logy);
            assert!(bregman(scaled.matrix(), alpha, &z0, &u) <= bound + 1e-9);
        }
    }
}
