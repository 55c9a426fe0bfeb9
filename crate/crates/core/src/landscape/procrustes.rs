//! Orthogonal Procrustes distance `min_R ‖U1 − U2 R‖_F` over orthogonal `R`.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

#[derive(Clone, Debug)]
pub struct ProcrustesResult {
    pub distance: f64,
    pub rotation: Mat,
}

/// Closed form through the SVD `U2^T U1 = A Σ B^T`, `R = A B^T`. When the
/// cross product is rank deficient the minimizer is not unique and the SVD's
/// ordering picks one. The distance is evaluated directly as
/// `‖U1 − U2 R‖_F`, which equals `sqrt(‖U1‖² + ‖U2‖² − 2 tr Σ)` without the
/// cancellation that formula suffers near zero.
pub fn procrustes(u1: &Mat, u2: &Mat) -> Result<ProcrustesResult> {
    if u1.shape() != u2.shape() {
        return Err(Error::dim(format!("procrustes of {:?} against {:?}", u1.shape(), u2.shape())));
    }
    let k = u1.ncols();
    let cross = u2.transpose() * u1;
    let rotation = if cross.iter().all(|x| *x == 0.0) {
        Mat::identity(k, k)
    } else {
        let dec = linalg::svd(&cross);
        &dec.u * dec.v.transpose()
    };
    let distance = (u1 - u2 * &rotation).norm();
    Ok(ProcrustesResult { distance, rotation })
}

#[derive(Clone, Debug)]
pub struct LowerBoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `‖U1U1^T − U2U2^T‖_F ≥ (2√2 − 2)^{1/2} σ_r(U1) dist(U1, U2)`.
pub fn procrustes_lower_bound_check(u1: &Mat, u2: &Mat) -> Result<LowerBoundCheck> {
    let dist = procrustes(u1, u2)?.distance;
    let lhs = (linalg::outer_gram(u1) - linalg::outer_gram(u2)).norm();
    let rhs = (2.0 * 2f64.sqrt() - 2.0).sqrt() * linalg::sigma_min(u1) * dist;
    let pass = lhs >= rhs - 1e-12 * (1.0 + rhs);
    Ok(LowerBoundCheck { lhs, rhs, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{self, gaussian_matrix, seeded};
    use proptest::prelude::*;

    #[test]
    fn self_distance_is_zero() {
        let u = gaussian_matrix(&mut seeded(1), 6, 3);
        let res = procrustes(&u, &u).unwrap();
        assert!(res.distance < 1e-12);
        assert!((res.rotation - Mat::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn sign_flip_in_one_dimension() {
        let u = gaussian_matrix(&mut seeded(2), 4, 1);
        let res = procrustes(&u, &(-&u)).unwrap();
        assert!(res.distance < 1e-12);
        assert!((res.rotation[(0, 0)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_pair_returns_identity() {
        let mut u1 = Mat::zeros(3, 1);
        let mut u2 = Mat::zeros(3, 1);
        u1[(0, 0)] = 1.0;
        u2[(1, 0)] = 2.0;
        let res = procrustes(&u1, &u2).unwrap();
        assert_eq!(res.rotation, Mat::identity(1, 1));
        assert!((res.distance - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_degenerate_cases() {
        let u = gaussian_matrix(&mut seeded(3), 5, 2);
        let c = procrustes_lower_bound_check(&u, &u).unwrap();
        assert!(c.lhs < 1e-12 && c.rhs < 1e-10 && c.pass);
        let z = Mat::zeros(5, 2);
        let c = procrustes_lower_bound_check(&z, &u).unwrap();
        assert_eq!(c.rhs, 0.0);
        assert!(c.pass);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(procrustes(&Mat::zeros(3, 2), &Mat::zeros(3, 1)).is_err());
    }

    /// Coarse grid over O(2); the fine-grid version runs in the acceptance
    /// suite.
    #[test]
    fn matches_grid_oracle_in_two_dimensions() {
        let mut rng = seeded(4);
        for _ in 0..10 {
            let u1 = gaussian_matrix(&mut rng, 5, 2);
            let u2 = gaussian_matrix(&mut rng, 5, 2);
            let c = u2.transpose() * &u1;
            let base = u1.norm_squared() + u2.norm_squared();
            let n = 200_000;
            let mut best = f64::INFINITY;
            for i in 0..n {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let (s, co) = th.sin_cos();
                // rotation [[co, -s], [s, co]] and reflection [[co, s], [s, -co]]
                let rot = co * (c[(0, 0)] + c[(1, 1)]) + s * (c[(1, 0)] - c[(0, 1)]);
                let refl = co * (c[(0, 0)] - c[(1, 1)]) + s * (c[(0, 1)] + c[(1, 0)]);
                best = best.min(base - 2.0 * rot.max(refl));
            }
            let oracle = best.max(0.0).sqrt();
            let res = procrustes(&u1, &u2).unwrap();
            assert!((res.distance - oracle).abs() < 1e-4, "{} vs {oracle}", res.distance);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rotation_is_orthogonal_and_cross_term_psd(seed in any::<u64>(), k in 1usize..5) {
            let mut rng = seeded(seed);
            let u1 = gaussian_matrix(&mut rng, 7, k);
            let u2 = gaussian_matrix(&mut rng, 7, k);
            let res = procrustes(&u1, &u2).unwrap();
            let r = &res.rotation;
            prop_assert!((r.transpose() * r - Mat::identity(k, k)).norm() < 1e-10);
            prop_assert!(((&u1 - &u2 * r).norm() - res.distance).abs() < 1e-10);
            let m = u1.transpose() * &u2 * r;
            prop_assert!((&m - m.transpose()).norm() < 1e-8);
            let (vals, _) = linalg::sym_eigen(&linalg::symmetrize(&m));
            prop_assert!(vals.iter().all(|v| *v >= -1e-8));
        }

        #[test]
        fn pseudometric(seed in any::<u64>(), k in 1usize..4) {
            let mut rng = seeded(seed);
            let a = gaussian_matrix(&mut rng, 6, k);
            let b = gaussian_matrix(&mut rng, 6, k);
            let c = gaussian_matrix(&mut rng, 6, k);
            let d = |x: &Mat, y: &Mat| procrustes(x, y).unwrap().distance;
            prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-10);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-8);
        }

        #[test]
        fn rotated_copy_has_zero_distance(seed in any::<u64>(), k in 1usize..4) {
            let mut rng = seeded(seed);
            let a = gaussian_matrix(&mut rng, 6, k);
            let r = random::orthogonal_matrix(&mut rng, k);
            prop_assert!(procrustes(&(&a * r), &a).unwrap().distance < 1e-10);
        }

        #[test]
        fn lower_bound_holds(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let a = gaussian_matrix(&mut rng, 8, 3);
            let b = gaussian_matrix(&mut rng, 8, 3);
            prop_assert!(procrustes_lower_bound_check(&a, &b).unwrap().pass);
        }
    }
}
