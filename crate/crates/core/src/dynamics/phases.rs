//! Phase boundaries read off a recorded trajectory.

use super::{initial_direction, residual_normal, GdConfig, SpectralTracker, Trajectory};
use crate::error::{Error, Result};
use crate::ground_truth::GroundTruth;
use crate::linalg;
use crate::sensing::MeasurementEnsemble;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankPhases {
    pub s: usize,
    pub t_pi: Option<usize>,
    pub t_ft: Option<usize>,
    pub t_hit: Option<usize>,
    pub hit_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    /// End of the spectral phase; shared by every rank.
    pub t_sp: Option<usize>,
    pub ranks: Vec<RankPhases>,
}

impl PhaseReport {
    pub fn rank(&self, s: usize) -> Option<&RankPhases> {
        self.ranks.iter().find(|r| r.s == s)
    }

    /// Hitting times in rank order, `None` where absent.
    pub fn hitting_times(&self) -> Vec<Option<usize>> {
        self.ranks.iter().map(|r| r.t_hit).collect()
    }
}

fn first_argmin(values: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (t, v) in values {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((t, v));
        }
    }
    best
}

/// Detects `T_sp`, and per rank `T_pi`, `T_ft` and the plateau-scoped hitting
/// time. `T_ft` needs an RIP estimate and is omitted without one.
pub fn detect_phases(traj: &Trajectory, gt: &GroundTruth, delta_hat: Option<f64>) -> PhaseReport {
    let tau = gt.tau();
    let kappa = gt.kappa();
    let x_sq = gt.norm() * gt.norm();
    let last_t = traj.steps.last().map(|r| r.t);

    let t_sp = traj
        .steps
        .iter()
        .find(|r| r.spectral_rel_err.is_some_and(|e| e > 1.0))
        .map(|r| r.t);

    let ft_offset = delta_hat.map(|dh| {
        let c3 = 1e4 * kappa * (gt.r_star() as f64).sqrt() * dh;
        let arg = 100.0 * x_sq * kappa * c3;
        let contraction = -(1.0 - 0.5 * traj.config.mu * tau).ln();
        if arg <= 1.0 || !(contraction > 0.0) {
            Some(0usize)
        } else {
            let steps = (arg.ln() / contraction).ceil();
            (steps.is_finite() && steps < usize::MAX as f64).then_some(steps as usize)
        }
    });

    let n_ranks = traj.steps.first().map_or(0, |r| r.ranks.len());
    let dist_series = |idx: usize| -> Vec<(usize, f64)> {
        traj.steps
            .iter()
            .filter_map(|r| r.ranks.get(idx).and_then(|d| d.dist_to_zs).map(|v| (r.t, v)))
            .collect()
    };

    let mut ranks = Vec::with_capacity(n_ranks);
    for idx in 0..n_ranks {
        let s = idx + 1;
        let t_pi = traj
            .steps
            .iter()
            .find(|r| {
                let d = &r.ranks[idx];
                !d.degenerate && d.sigma_min_vs * d.sigma_min_vs > 0.3 * tau
            })
            .map(|r| r.t);
        let t_ft = match (t_pi, ft_offset.flatten()) {
            (Some(tp), Some(off)) => tp.checked_add(off).filter(|t| last_t.is_some_and(|l| *t <= l)),
            _ => None,
        };

        let series = dist_series(idx);
        let cutoff = if idx + 1 < n_ranks {
            first_argmin(dist_series(idx + 1).into_iter()).map(|(t, _)| t)
        } else {
            None
        };
        let scoped = series.iter().copied().filter(|(t, _)| cutoff.is_none_or(|c| *t <= c));
        let hit = first_argmin(scoped).filter(|(_, v)| series.first().is_some_and(|(_, v0)| v < v0));
        ranks.push(RankPhases {
            s,
            t_pi,
            t_ft,
            t_hit: hit.map(|(t, _)| t),
            hit_radius: hit.map(|(_, v)| v),
        });
    }
    PhaseReport { t_sp, ranks }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralGap {
    pub t: usize,
    /// `‖U_t − (I + μM)^t U_0‖`.
    pub err: f64,
    pub bound: f64,
    /// `‖(I + μM)^t U_0‖`.
    pub sp_norm: f64,
}

/// Replays GD from `U_0` for `t_end` steps, comparing every iterate with the
/// linearized iterate. The bound uses `δ = 2 delta_hat`.
pub fn spectral_phase_series(
    config: &GdConfig,
    gt: &GroundTruth,
    ens: &MeasurementEnsemble,
    delta_hat: f64,
    t_end: usize,
) -> Result<Vec<SpectralGap>> {
    config.validate(gt.d())?;
    if ens.d() != gt.d() {
        return Err(Error::dim("ground truth and ensemble dimensions differ"));
    }
    let z_star = gt.z_star();
    let mut u = initial_direction(gt.d(), config.r_hat, config.seed) * config.alpha;
    let mut tracker = SpectralTracker::new(gt, ens, config.mu, &u);
    let top = tracker.top_eigenvalue();
    let delta = 2.0 * delta_hat;
    let log_prefactor = (4.0 / top).ln() + 3.0 * config.alpha.ln() + (gt.r_star() as f64).ln() + (1.0 + delta).ln();
    let log_growth = 3.0 * (config.mu * top).ln_1p();

    let mut out = Vec::with_capacity(t_end + 1);
    for t in 0..=t_end {
        let err = linalg::spectral_norm(&(&u - tracker.current()));
        let bound = if config.alpha == 0.0 {
            0.0
        } else {
            (log_prefactor + log_growth * t as f64).exp()
        };
        out.push(SpectralGap {
            t,
            err,
            bound,
            sp_norm: linalg::spectral_norm(tracker.current()),
        });
        if t == t_end {
            break;
        }
        let (n, _) = residual_normal(ens, &z_star, &u);
        u = &u + (n * &u) * config.mu;
        if !linalg::is_finite(&u) {
            return Err(Error::Divergence { step: t + 1 });
        }
        tracker.advance();
    }
    Ok(out)
}

/// Both sides of the spectral-phase bound at a single step of a trajectory.
pub fn spectral_approx_error(
    traj: &Trajectory,
    gt: &GroundTruth,
    ens: &MeasurementEnsemble,
    t: usize,
    delta_hat: f64,
) -> Result<SpectralGap> {
    let last = traj.steps.last().map_or(0, |r| r.t);
    if t > last {
        return Err(Error::dim(format!("step {t} beyond the trajectory end {last}")));
    }
    let series = spectral_phase_series(&traj.config, gt, ens, delta_hat, t)?;
    Ok(*series.last().expect("series includes t = 0"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::run_gd;
    use crate::ground_truth::{make_ground_truth, TruthMode};
    use crate::landscape::solve_best_rank_s;

    fn cfg(alpha: f64, t_max: usize) -> GdConfig {
        GdConfig {
            alpha,
            mu: 0.02,
            r_hat: 6,
            t_max,
            record_stride: 5,
            seed: 21,
        }
    }

    #[test]
    fn zero_iterate_has_no_phases() {
        let gt = make_ground_truth(6, &[3.0, 2.0, 1.0], TruthMode::Orthogonalized, 1).unwrap();
        let ens = MeasurementEnsemble::full_observation(6);
        let refs: Vec<_> = (1..=3).map(|s| solve_best_rank_s(&gt, &ens, s, 2, None, 20_000).unwrap()).collect();
        let traj = run_gd(&cfg(0.0, 200), &gt, &ens, Some(&refs)).unwrap();
        let rep = detect_phases(&traj, &gt, Some(0.0));
        assert_eq!(rep.t_sp, None);
        for r in &rep.ranks {
            assert_eq!((r.t_pi, r.t_ft, r.t_hit, r.hit_radius), (None, None, None, None));
        }
    }

    #[test]
    fn small_init_learns_ranks_in_order() {
        let gt = make_ground_truth(6, &[3.0, 2.0, 1.0], TruthMode::Orthogonalized, 1).unwrap();
        let ens = MeasurementEnsemble::full_observation(6);
        let refs: Vec<_> = (1..=3).map(|s| solve_best_rank_s(&gt, &ens, s, 2, None, 20_000).unwrap()).collect();
        let traj = run_gd(&cfg(1e-3, 3000), &gt, &ens, Some(&refs)).unwrap();
        let rep = detect_phases(&traj, &gt, Some(0.0));
        let hits: Vec<usize> = rep.hitting_times().into_iter().map(|t| t.unwrap()).collect();
        assert!(hits.windows(2).all(|w| w[0] < w[1]), "{hits:?}");
        assert!(rep.t_sp.is_some());
        for r in &rep.ranks {
            let t_pi = r.t_pi.unwrap();
            assert_eq!(r.t_ft, Some(t_pi));
            assert!(t_pi <= r.t_hit.unwrap());
        }
    }

    #[test]
    fn spectral_error_starts_at_zero() {
        let gt = make_ground_truth(5, &[2.0, 1.0], TruthMode::Orthogonalized, 2).unwrap();
        let ens = MeasurementEnsemble::gaussian(5, 60, 3).unwrap();
        let c = cfg(1e-2, 40);
        let c = GdConfig { r_hat: 5, ..c };
        let series = spectral_phase_series(&c, &gt, &ens, 0.3, 40).unwrap();
        assert_eq!(series[0].err, 0.0);
        let zero = GdConfig { alpha: 0.0, ..c };
        let series = spectral_phase_series(&zero, &gt, &ens, 0.3, 40).unwrap();
        assert!(series.iter().all(|g| g.err == 0.0));
    }
}
