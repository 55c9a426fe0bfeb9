//! Sampled restricted secant inequalities around the rank-`s` minimizers.
//!
//! Samples are `U = U_ref R + E` with Haar `R` and `E` of uniformly random
//! direction whose Frobenius norm is uniform on `(0, radius]`. The secant
//! direction is taken against the closest rotation of the reference found by
//! Procrustes. A sample with zero secant is skipped.

use super::factorization_gradient;
use super::procrustes::procrustes;
use super::BestRankSolution;
use crate::dynamics::residual_normal;
use crate::error::{Error, Result};
use crate::ground_truth::GroundTruth;
use crate::linalg::{self, Mat};
use crate::random;
use crate::sensing::MeasurementEnsemble;
use rand::Rng;
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct RsiReport {
    pub s: usize,
    pub samples: usize,
    pub skipped: usize,
    pub violations: usize,
    /// Smallest `⟨∇, U − Π(U)⟩ / (c ‖U − Π(U)‖²)`; at least 1 iff no violations.
    pub min_ratio: f64,
    pub radius: f64,
    /// The radius exceeds the inequality's hypothesis, so violations are
    /// informative only.
    pub outside_hypothesis: bool,
}

fn sweep<G>(u_ref: &Mat, radius: f64, constant: f64, n_samples: usize, seed: u64, grad: G) -> (usize, usize, f64)
where
    G: Fn(&Mat) -> Mat + Sync,
{
    let (d, s) = u_ref.shape();
    let ratios: Vec<Option<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = random::seeded(random::derive_seed(seed, i as u64));
            let r = random::orthogonal_matrix(&mut rng, s);
            let len = radius * (1.0 - rng.random::<f64>());
            if len == 0.0 {
                return None;
            }
            let e = random::unit_direction(&mut rng, d, s) * len;
            let u = u_ref * r + e;
            let rot = procrustes(&u, u_ref).expect("shapes match").rotation;
            let secant = &u - u_ref * rot;
            let sq = secant.norm_squared();
            if sq == 0.0 {
                return None;
            }
            Some(linalg::frob_inner(&grad(&u), &secant) / (constant * sq))
        })
        .collect();
    let skipped = ratios.iter().filter(|r| r.is_none()).count();
    let valid = ratios.iter().flatten();
    let violations = valid.clone().filter(|r| **r < 1.0).count();
    let min_ratio = valid.copied().fold(f64::INFINITY, f64::min);
    (skipped, violations, min_ratio)
}

/// `⟨∇f_s(U), U − Π_s(U)⟩ ≥ 0.1 κ⁻¹‖X‖² ‖U − Π_s(U)‖_F²` for
/// `‖U − Π_s(U)‖_F ≤ radius_scale · 10⁻² κ⁻¹ ‖X‖`.
pub fn verify_rsi_sensing(
    gt: &GroundTruth,
    ens: &MeasurementEnsemble,
    sol: &BestRankSolution,
    n_samples: usize,
    seed: u64,
    radius_scale: f64,
) -> Result<RsiReport> {
    if ens.d() != gt.d() || sol.u_star.nrows() != gt.d() {
        return Err(Error::dim("ground truth, ensemble and solution dimensions differ"));
    }
    let tau = gt.tau();
    let radius = radius_scale * 1e-2 * gt.norm() / gt.kappa();
    let z_star = gt.z_star();
    let (skipped, violations, min_ratio) = sweep(&sol.u_star, radius, 0.1 * tau, n_samples, seed, |u| {
        let (n, _) = residual_normal(ens, &z_star, u);
        -(n * u)
    });
    Ok(RsiReport {
        s: sol.s,
        samples: n_samples,
        skipped,
        violations,
        min_ratio,
        radius,
        outside_hypothesis: radius_scale > 1.0,
    })
}

/// `⟨∇F_s(U), U − X_s R⟩ ≥ 0.1 τ dist²(U, X_s)` for
/// `dist(U, X_s) ≤ radius_scale · 0.1 τ / ‖X‖`.
pub fn verify_rsi_factorization(
    gt: &GroundTruth,
    s: usize,
    n_samples: usize,
    seed: u64,
    radius_scale: f64,
) -> Result<RsiReport> {
    let trunc = gt.truncate(s)?;
    let tau = gt.tau();
    let radius = radius_scale * 0.1 * tau / gt.norm();
    let z_star = gt.z_star();
    let (skipped, violations, min_ratio) = sweep(&trunc.x_s, radius, 0.1 * tau, n_samples, seed, |u| {
        factorization_gradient(u, &z_star)
    });
    Ok(RsiReport {
        s,
        samples: n_samples,
        skipped,
        violations,
        min_ratio,
        radius,
        outside_hypothesis: radius_scale > 1.0,
    })
}
