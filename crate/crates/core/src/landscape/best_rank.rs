//! Best rank-`s` solution `Z_s^* = U_s^* U_s^*^T`, the global minimizer of the
//! sensing loss over factors of width `s`.

use super::procrustes::procrustes;
use crate::dynamics::residual_normal;
use crate::error::{Error, Result};
use crate::ground_truth::GroundTruth;
use crate::linalg::{self, Mat};
use crate::random;
use crate::sensing::MeasurementEnsemble;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub struct BestRankSolution {
    pub s: usize,
    pub u_star: Mat,
    pub z_star: Mat,
    pub grad_norm: f64,
    pub restart_spread: f64,
    pub f_value: f64,
}

#[derive(Serialize, Deserialize)]
struct SolutionDoc {
    s: usize,
    d: usize,
    f_value: f64,
    grad_norm: f64,
    restart_spread: f64,
    u_star: Vec<f64>,
}

impl BestRankSolution {
    pub fn to_json(&self) -> Result<String> {
        let doc = SolutionDoc {
            s: self.s,
            d: self.u_star.nrows(),
            f_value: self.f_value,
            grad_norm: self.grad_norm,
            restart_spread: self.restart_spread,
            u_star: linalg::to_row_major(&self.u_star),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SolutionDoc = serde_json::from_str(text)?;
        let u_star = linalg::from_row_major(doc.d, doc.s, &doc.u_star)
            .ok_or_else(|| Error::dim(format!("u_star holds {} entries, expected {}", doc.u_star.len(), doc.d * doc.s)))?;
        Ok(BestRankSolution {
            s: doc.s,
            z_star: linalg::outer_gram(&u_star),
            u_star,
            grad_norm: doc.grad_norm,
            restart_spread: doc.restart_spread,
            f_value: doc.f_value,
        })
    }
}

/// Default gradient tolerance `1e-9 ‖X‖³`.
pub fn default_tolerance(gt: &GroundTruth) -> f64 {
    1e-9 * gt.norm().powi(3)
}

struct RestartOutcome {
    u: Mat,
    grad_norm: f64,
    f_value: f64,
    converged: bool,
}

fn descend(ens: &MeasurementEnsemble, z_star: &Mat, mut u: Mat, mu: f64, tol: f64, max_iters: usize) -> RestartOutcome {
    let mut best_grad = f64::INFINITY;
    for _ in 0..=max_iters {
        let (n, f_value) = residual_normal(ens, z_star, &u);
        let step = n * &u;
        let grad_norm = step.norm();
        best_grad = best_grad.min(grad_norm);
        if grad_norm <= tol {
            return RestartOutcome {
                u,
                grad_norm,
                f_value,
                converged: true,
            };
        }
        let next = &u + step * mu;
        if !linalg::is_finite(&next) {
            break;
        }
        u = next;
    }
    let (n, f_value) = residual_normal(ens, z_star, &u);
    let grad_norm = (n * &u).norm();
    RestartOutcome {
        u,
        grad_norm: grad_norm.min(best_grad),
        f_value,
        converged: false,
    }
}

/// Gradient descent on `f_s` with step `0.1 / σ̂_1²`, where `σ̂_1²` is the top
/// eigenvalue of `A*A(Z*)`. Restart 0 starts from the spectral initialization
/// (top-`s` eigenvectors scaled by the root of their eigenvalues); the others
/// perturb it by `0.05 ‖X‖` in Frobenius norm. `tol` defaults to
/// [`default_tolerance`].
pub fn solve_best_rank_s(
    gt: &GroundTruth,
    ens: &MeasurementEnsemble,
    s: usize,
    restarts: usize,
    tol: Option<f64>,
    max_iters: usize,
) -> Result<BestRankSolution> {
    let d = gt.d();
    if ens.d() != d {
        return Err(Error::dim("ground truth and ensemble dimensions differ"));
    }
    if s == 0 || s > gt.r_star() {
        return Err(Error::dim(format!("rank {s} outside 1..={}", gt.r_star())));
    }
    if restarts < 2 {
        return Err(Error::dim(format!("at least two restarts are needed, got {restarts}")));
    }
    let tol = tol.unwrap_or_else(|| default_tolerance(gt));
    let z_star = gt.z_star();
    let (m, _) = ens.normal_op(&z_star)?;
    let (vals, vecs) = linalg::sym_eigen(&m);
    let top = vals[0];
    let mu = 0.1 / top;
    let mut spectral = vecs.columns(0, s).into_owned();
    for (j, mut col) in spectral.column_iter_mut().enumerate() {
        col *= vals[j].max(0.0).sqrt();
    }
    let scale = 0.05 * gt.norm();
    let base_seed = random::derive_seed(gt.seed(), s as u64);

    let outcomes: Vec<RestartOutcome> = (0..restarts)
        .into_par_iter()
        .map(|k| {
            let start = if k == 0 {
                spectral.clone()
            } else {
                let mut rng = random::seeded(random::derive_seed(base_seed, k as u64));
                &spectral + random::unit_direction(&mut rng, d, s) * scale
            };
            descend(ens, &z_star, start, mu, tol, max_iters)
        })
        .collect();

    let converged: Vec<&RestartOutcome> = outcomes.iter().filter(|o| o.converged).collect();
    if converged.is_empty() {
        let best = outcomes.iter().map(|o| o.grad_norm).fold(f64::INFINITY, f64::min);
        return Err(Error::NonConvergence { s, best_grad_norm: best });
    }
    let mut spread: f64 = 0.0;
    for i in 0..converged.len() {
        for j in i + 1..converged.len() {
            spread = spread.max(procrustes(&converged[i].u, &converged[j].u)?.distance);
        }
    }
    let best = converged
        .iter()
        .min_by(|a, b| a.f_value.total_cmp(&b.f_value))
        .expect("non-empty");
    Ok(BestRankSolution {
        s,
        z_star: linalg::outer_gram(&best.u),
        u_star: best.u.clone(),
        grad_norm: best.grad_norm,
        restart_spread: spread,
        f_value: best.f_value,
    })
}

/// Solver slack, relative to `‖X‖²`, added to the closeness bound so that an
/// exact isometry (bound 0) is judged against the solver's accuracy.
const MINIMA_SLACK: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct MinimaCloseness {
    pub s: usize,
    /// `‖Z_s^* − X_s X_s^T‖_F`.
    pub gap: f64,
    /// `160 δ κ √r_star ‖X‖²` with `δ = 2 delta_hat`.
    pub bound: f64,
    pub pass: bool,
}

pub fn check_minima_close(gt: &GroundTruth, sol: &BestRankSolution, delta_hat: f64) -> Result<MinimaCloseness> {
    let gram = gt.truncate(sol.s)?.gram();
    let gap = (&sol.z_star - gram).norm();
    let x_sq = gt.norm().powi(2);
    let bound = 160.0 * (2.0 * delta_hat) * gt.kappa() * (gt.r_star() as f64).sqrt() * x_sq;
    Ok(MinimaCloseness {
        s: sol.s,
        gap,
        bound,
        pass: gap <= bound + MINIMA_SLACK * x_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_truth::{make_ground_truth, TruthMode};

    #[test]
    fn full_observation_recovers_truncation() {
        let gt = make_ground_truth(8, &[3.0, 2.0, 1.5, 1.0], TruthMode::Orthogonalized, 5).unwrap();
        let ens = MeasurementEnsemble::full_observation(8);
        for s in 1..=4 {
            let sol = solve_best_rank_s(&gt, &ens, s, 3, None, 50_000).unwrap();
            let gram = gt.truncate(s).unwrap().gram();
            assert!((&sol.z_star - gram).norm() <= 1e-8 * gt.norm().powi(2), "s = {s}");
            assert!(sol.grad_norm <= default_tolerance(&gt));
            assert!(sol.restart_spread <= 1e-6);
        }
    }

    #[test]
    fn exact_recovery_at_full_rank() {
        let gt = make_ground_truth(6, &[2.0, 1.0], TruthMode::Orthogonalized, 6).unwrap();
        let ens = MeasurementEnsemble::gaussian(6, 400, 7).unwrap();
        let tol = default_tolerance(&gt);
        let sol = solve_best_rank_s(&gt, &ens, 2, 2, None, 50_000).unwrap();
        assert!((&sol.z_star - gt.z_star()).norm() <= 10.0 * tol * gt.norm());
        let (n, _) = ens.normal_op(&(gt.z_star() - &sol.z_star)).unwrap();
        assert!(((n * &sol.u_star).norm() - sol.grad_norm).abs() <= 1e-12 * (1.0 + sol.grad_norm));
    }

    #[test]
    fn argument_errors() {
        let gt = make_ground_truth(4, &[2.0, 1.0], TruthMode::Orthogonalized, 0).unwrap();
        let ens = MeasurementEnsemble::full_observation(4);
        assert!(solve_best_rank_s(&gt, &ens, 3, 2, None, 10).is_err());
        assert!(solve_best_rank_s(&gt, &ens, 1, 1, None, 10).is_err());
        assert!(matches!(
            solve_best_rank_s(&gt, &ens, 1, 2, Some(0.0), 3),
            Err(Error::NonConvergence { s: 1, .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let gt = make_ground_truth(4, &[2.0, 1.0], TruthMode::Orthogonalized, 0).unwrap();
        let ens = MeasurementEnsemble::full_observation(4);
        let sol = solve_best_rank_s(&gt, &ens, 2, 2, None, 20_000).unwrap();
        let back = BestRankSolution::from_json(&sol.to_json().unwrap()).unwrap();
        assert_eq!(back.u_star, sol.u_star);
        assert_eq!(back.f_value.to_bits(), sol.f_value.to_bits());
        assert_eq!(back.z_star, sol.z_star);
    }
}
