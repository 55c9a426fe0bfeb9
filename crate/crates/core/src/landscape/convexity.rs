//! Local strong convexity of the rank-1 sensing loss around `σ_1 v_1`.
//!
//! The Hessian of `f_1(u) = ¼‖A(Z* − uu^T)‖²` acts as
//! `H v = A*A(uv^T + vu^T) u − A*A(Z* − uu^T) v`. Under full observation this
//! is `‖u‖² I + 2uu^T − XX^T`, whose smallest eigenvalue at `σ_1 v_1` is
//! `σ_1² − σ_2²`.

use crate::dynamics::residual_normal;
use crate::error::{Error, Result};
use crate::ground_truth::GroundTruth;
use crate::linalg::{self, Mat};
use crate::random;
use crate::sensing::MeasurementEnsemble;
use nalgebra::DVector;
use rand::Rng;

/// Assembled Hessian of `f_1` at `u`.
pub fn rank1_hessian(ens: &MeasurementEnsemble, z_star: &Mat, u: &[f64]) -> Result<Mat> {
    let k = ens.rank1_curvature(u)?;
    let um = Mat::from_column_slice(u.len(), 1, u);
    let (n, _) = residual_normal(ens, z_star, &um);
    Ok(linalg::symmetrize(&(k - n)))
}

fn gradient(ens: &MeasurementEnsemble, z_star: &Mat, u: &DVector<f64>) -> DVector<f64> {
    let um = Mat::from_column_slice(u.len(), 1, u.as_slice());
    let (n, _) = residual_normal(ens, z_star, &um);
    -(n * u)
}

#[derive(Clone, Debug)]
pub struct ConvexityProbe {
    /// `‖u − σ_1 v_1‖`.
    pub offset: f64,
    pub in_ball: bool,
    pub min_eig: f64,
    /// Relative gap between the assembled Hessian-vector product and a
    /// central difference of the gradient along a random unit direction.
    pub fd_rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct ConvexityReport {
    pub probes: Vec<ConvexityProbe>,
    pub ball_radius: f64,
    /// Minimum over in-ball probes; `None` when no probe landed inside.
    pub min_eig_in_ball: Option<f64>,
    /// `0.2 τ − 4 ‖X‖² (2 delta_hat)`.
    pub expected_floor: f64,
    pub max_fd_rel_err: f64,
}

/// Probes `u = σ_1 v_1 + e` with `‖e‖` uniform on `[0, radius_frac ·
/// min{σ_1, √τ}]`. Probes farther than `√0.1 · min{σ_1, √τ}` are flagged as
/// outside the ball and excluded from `min_eig_in_ball`.
pub fn rank1_strong_convexity(
    gt: &GroundTruth,
    ens: &MeasurementEnsemble,
    radius_frac: f64,
    n_probes: usize,
    delta_hat: f64,
    seed: u64,
) -> Result<ConvexityReport> {
    let d = gt.d();
    if ens.d() != d {
        return Err(Error::dim("ground truth and ensemble dimensions differ"));
    }
    let z_star = gt.z_star();
    let sigma1 = gt.sigmas()[0];
    let scale = sigma1.min(gt.tau().sqrt());
    let ball_radius = 0.1f64.sqrt() * scale;
    let center: DVector<f64> = gt.basis().column(0) * sigma1;
    let h = 1e-5 * sigma1;
    let mut rng = random::seeded(seed);

    let mut probes = Vec::with_capacity(n_probes);
    for _ in 0..n_probes {
        let len = radius_frac * scale * rng.random::<f64>();
        let dir = random::unit_direction(&mut rng, d, 1).column(0).into_owned();
        let u = &center + &dir * len;
        let hess = rank1_hessian(ens, &z_star, u.as_slice())?;
        let min_eig = *linalg::sym_eigen(&hess).0.last().expect("d >= 1");

        let v = random::unit_direction(&mut rng, d, 1).column(0).into_owned();
        let fd = (gradient(ens, &z_star, &(&u + &v * h)) - gradient(ens, &z_star, &(&u - &v * h))) / (2.0 * h);
        let hv = &hess * &v;
        let fd_rel_err = (fd - &hv).norm() / hv.norm().max(f64::MIN_POSITIVE);

        let offset = (&u - &center).norm();
        probes.push(ConvexityProbe {
            offset,
            in_ball: offset <= ball_radius,
            min_eig,
            fd_rel_err,
        });
    }
    let min_eig_in_ball = probes
        .iter()
        .filter(|p| p.in_ball)
        .map(|p| p.min_eig)
        .reduce(f64::min);
    let max_fd_rel_err = probes.iter().map(|p| p.fd_rel_err).fold(0.0, f64::max);
    Ok(ConvexityReport {
        probes,
        ball_radius,
        min_eig_in_ball,
        expected_floor: 0.2 * gt.tau() - 4.0 * gt.norm().powi(2) * 2.0 * delta_hat,
        max_fd_rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_truth::{make_ground_truth, TruthMode};

    #[test]
    fn closed_form_at_the_minimizer() {
        let gt = make_ground_truth(5, &[3.0, 2.0, 1.0], TruthMode::Orthogonalized, 4).unwrap();
        let ens = MeasurementEnsemble::full_observation(5);
        let u: Vec<f64> = (gt.basis().column(0) * 3.0).iter().copied().collect();
        let hess = rank1_hessian(&ens, &gt.z_star(), &u).unwrap();
        let min = *linalg::sym_eigen(&hess).0.last().unwrap();
        assert!((min - (9.0 - 4.0)).abs() < 1e-10, "{min}");
    }

    #[test]
    fn finite_differences_agree_and_floor_holds() {
        let gt = make_ground_truth(6, &[2.0, 1.0], TruthMode::Orthogonalized, 5).unwrap();
        let ens = MeasurementEnsemble::gaussian(6, 300, 6).unwrap();
        let rep = rank1_strong_convexity(&gt, &ens, 0.1f64.sqrt(), 50, 0.5, 7).unwrap();
        assert!(rep.max_fd_rel_err < 1e-4, "{}", rep.max_fd_rel_err);
        assert!(rep.probes.iter().all(|p| p.in_ball));
        assert!(rep.min_eig_in_ball.unwrap() >= rep.expected_floor);
    }

    #[test]
    fn far_probes_are_flagged() {
        let gt = make_ground_truth(4, &[2.0, 1.0], TruthMode::Orthogonalized, 5).unwrap();
        let ens = MeasurementEnsemble::full_observation(4);
        let rep = rank1_strong_convexity(&gt, &ens, 3.0, 40, 0.0, 1).unwrap();
        assert!(rep.probes.iter().any(|p| !p.in_ball));
        assert!(rep.probes.iter().filter(|p| !p.in_ball).all(|p| p.offset > rep.ball_radius));
    }
}
