//! Landscape of the rank-constrained sensing loss: best rank-`s` solutions,
//! Procrustes distances and sampled checks of the local inequalities that
//! make gradient descent converge to them.
//!
//! Two losses appear throughout. The sensing loss `f_s(U) = ¼‖A(Z* − UU^T)‖²`
//! with `U` of width `s`, and its full-observation counterpart, the
//! factorization loss `F_s(U) = ¼‖UU^T − XX^T‖_F²` with gradient
//! `(UU^T − XX^T) U`.

mod best_rank;
mod convexity;
mod critical;
mod init;
mod procrustes;
mod rsi;

pub use best_rank::{check_minima_close, default_tolerance, solve_best_rank_s, BestRankSolution, MinimaCloseness};
pub use convexity::{rank1_hessian, rank1_strong_convexity, ConvexityProbe, ConvexityReport};
pub use critical::{factorization_critical_points, CriticalPoint};
pub use init::{random_init_regularity, InitRegularity};
pub use procrustes::{procrustes, procrustes_lower_bound_check, LowerBoundCheck, ProcrustesResult};
pub use rsi::{verify_rsi_factorization, verify_rsi_sensing, RsiReport};

use crate::linalg::{self, Mat};

/// `F_s(U) = ¼‖UU^T − XX^T‖_F²`.
pub fn factorization_loss(u: &Mat, z_star: &Mat) -> f64 {
    0.25 * (linalg::outer_gram(u) - z_star).norm_squared()
}

/// `∇F_s(U) = (UU^T − XX^T) U`.
pub fn factorization_gradient(u: &Mat, z_star: &Mat) -> Mat {
    (linalg::outer_gram(u) - z_star) * u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics;
    use crate::ground_truth::{make_ground_truth, TruthMode};
    use crate::random;
    use crate::sensing::MeasurementEnsemble;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn sensing_loss_is_rotation_invariant(seed in any::<u64>(), s in 1usize..4) {
            let gt = make_ground_truth(6, &[3.0, 2.0, 1.0], TruthMode::Orthogonalized, seed).unwrap();
            let ens = MeasurementEnsemble::gaussian(6, 40, seed ^ 1).unwrap();
            let mut rng = random::seeded(seed ^ 2);
            let u = random::gaussian_matrix(&mut rng, 6, s);
            let r = random::orthogonal_matrix(&mut rng, s);
            let z = gt.z_star();
            let a = dynamics::loss(&ens, &z, &u).unwrap();
            let b = dynamics::loss(&ens, &z, &(&u * r)).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
        }

        #[test]
        fn factorization_gradient_matches_finite_differences(seed in any::<u64>()) {
            let gt = make_ground_truth(5, &[2.0, 1.0], TruthMode::Orthogonalized, seed).unwrap();
            let mut rng = random::seeded(seed);
            let u = random::gaussian_matrix(&mut rng, 5, 2);
            let v = random::unit_direction(&mut rng, 5, 2);
            let z = gt.z_star();
            let h = 1e-5;
            let fd = (factorization_loss(&(&u + &v * h), &z) - factorization_loss(&(&u - &v * h), &z)) / (2.0 * h);
            let an = linalg::frob_inner(&factorization_gradient(&u, &z), &v);
            prop_assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()));
        }
    }
}
