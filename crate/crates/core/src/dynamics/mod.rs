//! Gradient descent on the factorized sensing loss
//! `f(U) = ¼‖A(Z* − UU^T)‖²` with per-rank diagnostics.

mod export;
mod phases;

pub use export::{csv_header, write_csv};
pub use phases::{
    detect_phases, spectral_approx_error, spectral_phase_series, PhaseReport, RankPhases, SpectralGap,
};

use crate::error::{Error, Result};
use crate::ground_truth::{GroundTruth, Truncation};
use crate::landscape::BestRankSolution;
use crate::linalg::{self, Mat};
use crate::random;
use crate::sensing::MeasurementEnsemble;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub alpha: f64,
    pub mu: f64,
    pub r_hat: usize,
    pub t_max: usize,
    pub record_stride: usize,
    pub seed: u64,
}

impl GdConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            errs.push(format!("alpha: must be finite and non-negative, got {}", self.alpha));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            errs.push(format!("mu: must be finite and positive, got {}", self.mu));
        }
        if self.r_hat == 0 || self.r_hat > d {
            errs.push(format!("r_hat: must lie in 1..={d}, got {}", self.r_hat));
        }
        if self.record_stride == 0 {
            errs.push("record_stride: must be at least 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankDiagnostics {
    pub s: usize,
    pub sigma_min_vs: f64,
    pub orth_norm: f64,
    pub align: f64,
    pub rel_err: f64,
    pub dist_to_zs: Option<f64>,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub loss: f64,
    /// Leading `min(r_hat, r_star + 1)` singular values of `U_t`.
    pub sing_vals: Vec<f64>,
    pub ranks: Vec<RankDiagnostics>,
    /// `‖U_t − U_t^sp‖ / ‖U_t^sp‖` against the linearized iteration, tracked
    /// until it first exceeds 1.
    pub spectral_rel_err: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged { step: usize },
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub config: GdConfig,
    pub r_star: usize,
    pub steps: Vec<StepRecord>,
    pub final_u: Mat,
    pub status: RunStatus,
}

/// `Ū`: seeded Gaussian `d x r_hat` matrix scaled to spectral norm 1.
pub fn initial_direction(d: usize, r_hat: usize, seed: u64) -> Mat {
    let g = random::gaussian_matrix(&mut random::seeded(seed), d, r_hat);
    let n = linalg::spectral_norm(&g);
    g / n
}

/// `A*A(Z* − UU^T)` and the loss `f(U)`.
pub(crate) fn residual_normal(ens: &MeasurementEnsemble, z_star: &Mat, u: &Mat) -> (Mat, f64) {
    let residual = z_star - linalg::outer_gram(u);
    let (n, sq) = ens.normal_op_unchecked(&residual);
    (n, 0.25 * sq)
}

/// Sensing loss `¼‖A(Z* − UU^T)‖²`.
pub fn loss(ens: &MeasurementEnsemble, z_star: &Mat, u: &Mat) -> Result<f64> {
    check_shapes(ens, z_star, u)?;
    Ok(residual_normal(ens, z_star, u).1)
}

/// Gradient `−A*A(Z* − UU^T) U`.
pub fn gradient(ens: &MeasurementEnsemble, z_star: &Mat, u: &Mat) -> Result<Mat> {
    check_shapes(ens, z_star, u)?;
    Ok(-(residual_normal(ens, z_star, u).0 * u))
}

fn check_shapes(ens: &MeasurementEnsemble, z_star: &Mat, u: &Mat) -> Result<()> {
    let d = ens.d();
    if z_star.shape() != (d, d) || u.nrows() != d {
        return Err(Error::dim(format!(
            "ensemble d = {d}, target {:?}, factor {:?}",
            z_star.shape(),
            u.shape()
        )));
    }
    Ok(())
}

/// One step `U + μ A*A(Z* − UU^T) U`.
pub fn gd_step(u: &Mat, ens: &MeasurementEnsemble, z_star: &Mat, mu: f64) -> Result<Mat> {
    check_shapes(ens, z_star, u)?;
    if !linalg::is_finite(u) {
        return Err(Error::Divergence { step: 0 });
    }
    let (n, _) = residual_normal(ens, z_star, u);
    Ok(u + (n * u) * mu)
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub w: Mat,
    pub w_perp: Mat,
    pub parallel_norm_min: f64,
    pub orth_norm: f64,
    pub align: f64,
    pub degenerate: bool,
}

/// Splits `U` along the right singular vectors `W` of `V_Xs^T U`.
pub fn decompose(u: &Mat, trunc: &Truncation) -> Result<Decomposition> {
    let k = u.ncols();
    let s = trunc.s;
    if s > k || u.nrows() != trunc.v_xs.nrows() {
        return Err(Error::dim(format!("cannot split a {:?} factor at rank {s}", u.shape())));
    }
    let proj = trunc.v_xs.transpose() * u;
    let dec = linalg::svd(&proj);
    let w = dec.v;
    let w_perp = linalg::orth_complement(&w);
    let uw = u * &w;
    let u_scale = linalg::spectral_norm(u);
    let sig_min = dec.s.last().copied().unwrap_or(0.0);
    let degenerate = u_scale == 0.0 || sig_min <= 1e-13 * u_scale;
    let parallel_norm_min = linalg::sigma_min(&uw);
    let orth_norm = if w_perp.ncols() == 0 {
        0.0
    } else {
        linalg::spectral_norm(&(u * &w_perp))
    };
    let align = if degenerate {
        1.0
    } else {
        let basis = linalg::svd(&uw).u;
        linalg::spectral_norm(&(trunc.v_xs_perp.transpose() * basis))
    };
    Ok(Decomposition {
        w,
        w_perp,
        parallel_norm_min,
        orth_norm,
        align,
        degenerate,
    })
}

struct RankContext {
    trunc: Truncation,
    gram: Mat,
    gram_sq: f64,
    reference: Option<Mat>,
}

struct Recorder {
    r_star: usize,
    n_sv: usize,
    ranks: Vec<RankContext>,
}

impl Recorder {
    fn new(gt: &GroundTruth, r_hat: usize, refs: Option<&[BestRankSolution]>) -> Result<Self> {
        let r_star = gt.r_star();
        let top = r_hat.min(r_star);
        let mut ranks = Vec::with_capacity(top);
        for s in 1..=top {
            let trunc = gt.truncate(s)?;
            let gram = trunc.gram();
            let gram_sq = gram.norm_squared();
            let reference = refs.and_then(|r| r.iter().find(|sol| sol.s == s)).map(|sol| sol.z_star.clone());
            ranks.push(RankContext {
                trunc,
                gram,
                gram_sq,
                reference,
            });
        }
        Ok(Recorder {
            r_star,
            n_sv: r_hat.min(r_star + 1),
            ranks,
        })
    }

    fn record(&self, t: usize, loss: f64, u: &Mat, spectral_rel_err: Option<f64>) -> StepRecord {
        let sv = linalg::singular_values(u);
        let sing_vals = sv.into_iter().take(self.n_sv).collect();
        let uu = linalg::outer_gram(u);
        let ranks = self
            .ranks
            .iter()
            .map(|ctx| {
                let dec = decompose(u, &ctx.trunc).expect("rank context matches factor shape");
                let sigma_min_vs = linalg::sigma_min(&(ctx.trunc.v_xs.transpose() * u));
                RankDiagnostics {
                    s: ctx.trunc.s,
                    sigma_min_vs,
                    orth_norm: dec.orth_norm,
                    align: dec.align,
                    rel_err: (&uu - &ctx.gram).norm_squared() / ctx.gram_sq,
                    dist_to_zs: ctx.reference.as_ref().map(|z| (&uu - z).norm()),
                    degenerate: dec.degenerate,
                }
            })
            .collect();
        StepRecord {
            t,
            loss,
            sing_vals,
            ranks,
            spectral_rel_err,
        }
    }
}

/// Tracks `U_t^sp = (I + μM)^t U_0` with `M = A*A(XX^T)` by repeated
/// multiplication.
pub(crate) struct SpectralTracker {
    m: Mat,
    mu: f64,
    u_sp: Mat,
}

impl SpectralTracker {
    pub(crate) fn new(gt: &GroundTruth, ens: &MeasurementEnsemble, mu: f64, u0: &Mat) -> Self {
        let (m, _) = ens.normal_op_unchecked(&gt.z_star());
        SpectralTracker {
            m,
            mu,
            u_sp: u0.clone(),
        }
    }

    pub(crate) fn top_eigenvalue(&self) -> f64 {
        linalg::sym_eigen(&self.m).0[0]
    }

    pub(crate) fn current(&self) -> &Mat {
        &self.u_sp
    }

    pub(crate) fn advance(&mut self) {
        let inc = (&self.m * &self.u_sp) * self.mu;
        self.u_sp += inc;
    }

    /// `‖U − U^sp‖ / ‖U^sp‖`, with 0/0 read as 0.
    pub(crate) fn rel_err(&self, u: &Mat) -> f64 {
        let num = linalg::spectral_norm(&(u - &self.u_sp));
        let den = linalg::spectral_norm(&self.u_sp);
        if num == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}

/// Runs `t_max` GD steps from `U_0 = αŪ`, recording diagnostics every
/// `record_stride` steps and at the final step.
pub fn run_gd(
    config: &GdConfig,
    gt: &GroundTruth,
    ens: &MeasurementEnsemble,
    refs: Option<&[BestRankSolution]>,
) -> Result<Trajectory> {
    let d = gt.d();
    if ens.d() != d {
        return Err(Error::dim(format!("ground truth d = {d}, ensemble d = {}", ens.d())));
    }
    config.validate(d)?;
    let z_star = gt.z_star();
    let recorder = Recorder::new(gt, config.r_hat, refs)?;
    let mut u = initial_direction(d, config.r_hat, config.seed) * config.alpha;
    let mut tracker = Some(SpectralTracker::new(gt, ens, config.mu, &u));
    let mut steps = Vec::with_capacity(config.t_max / config.record_stride + 2);
    let mut status = RunStatus::Completed;

    let mut t = 0;
    loop {
        let (n, loss) = residual_normal(ens, &z_star, &u);
        let is_last = t == config.t_max;
        if t % config.record_stride == 0 || is_last {
            let spec = tracker.as_ref().map(|tr| tr.rel_err(&u));
            if spec.is_some_and(|e| e > 1.0) {
                tracker = None;
            }
            steps.push(recorder.record(t, loss, &u, spec));
        }
        if is_last {
            break;
        }
        let next = &u + (n * &u) * config.mu;
        if !linalg::is_finite(&next) {
            status = RunStatus::Diverged { step: t + 1 };
            if steps.last().is_none_or(|r| r.t != t) {
                steps.push(recorder.record(t, loss, &u, None));
            }
            break;
        }
        u = next;
        if let Some(tr) = tracker.as_mut() {
            tr.advance();
        }
        t += 1;
    }

    Ok(Trajectory {
        config: config.clone(),
        r_star: recorder.r_star,
        steps,
        final_u: u,
        status,
    })
}

#[derive(Clone, Debug)]
pub struct GdErrorReport {
    pub lipschitz: f64,
    pub eps: f64,
    pub steps: usize,
    /// Largest `‖U_k − U'_k‖_F / ((1 + μL)^k ε)` over `k ≤ steps`.
    pub max_ratio: f64,
    pub violations: usize,
    pub max_iterate_norm: f64,
}

/// Compares two GD runs whose starting points differ by `eps` in Frobenius
/// norm against the growth bound `(1 + μL)^k ε` with `L = 20‖X‖²`.
pub fn gd_error_check(
    config: &GdConfig,
    gt: &GroundTruth,
    ens: &MeasurementEnsemble,
    eps: f64,
    steps: usize,
    seed: u64,
) -> Result<GdErrorReport> {
    config.validate(gt.d())?;
    let z_star = gt.z_star();
    let lipschitz = 20.0 * gt.norm() * gt.norm();
    let mut u = initial_direction(gt.d(), config.r_hat, config.seed) * config.alpha;
    let mut v = &u + random::unit_direction(&mut random::seeded(seed), gt.d(), config.r_hat) * eps;
    let growth = 1.0 + config.mu * lipschitz;
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    let mut max_iterate_norm = linalg::spectral_norm(&u).max(linalg::spectral_norm(&v));
    let mut bound = eps;
    for k in 0..=steps {
        let ratio = (&u - &v).norm() / bound;
        max_ratio = max_ratio.max(ratio);
        if ratio > 1.0 + 1e-12 {
            violations += 1;
        }
        if k == steps {
            break;
        }
        u = gd_step(&u, ens, &z_star, config.mu)?;
        v = gd_step(&v, ens, &z_star, config.mu)?;
        max_iterate_norm = max_iterate_norm.max(linalg::spectral_norm(&u)).max(linalg::spectral_norm(&v));
        bound *= growth;
    }
    Ok(GdErrorReport {
        lipschitz,
        eps,
        steps,
        max_ratio,
        violations,
        max_iterate_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_truth::{make_ground_truth, TruthMode};
    use proptest::prelude::*;

    fn small() -> (GroundTruth, MeasurementEnsemble) {
        let gt = make_ground_truth(5, &[2.0, 1.0], TruthMode::Orthogonalized, 3).unwrap();
        (gt, MeasurementEnsemble::full_observation(5))
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let (gt, ens) = small();
        let u = Mat::zeros(5, 3);
        assert_eq!(gd_step(&u, &ens, &gt.z_star(), 0.1).unwrap(), u);
    }

    #[test]
    fn global_minimizer_is_stationary() {
        let (gt, ens) = small();
        let next = gd_step(gt.x(), &ens, &gt.z_star(), 0.1).unwrap();
        assert!((next - gt.x()).norm() < 1e-12);
    }

    #[test]
    fn scalar_update_by_hand() {
        let gt = make_ground_truth(1, &[1.0], TruthMode::Orthogonalized, 0).unwrap();
        let ens = MeasurementEnsemble::full_observation(1);
        let u = Mat::from_element(1, 1, 0.5);
        let next = gd_step(&u, &ens, &gt.z_star(), 0.1).unwrap();
        assert!((next[(0, 0)] - 0.5375).abs() < 1e-15);
    }

    #[test]
    fn non_finite_input_is_divergence() {
        let (gt, ens) = small();
        let mut u = Mat::zeros(5, 2);
        u[(1, 1)] = f64::NAN;
        assert!(matches!(gd_step(&u, &ens, &gt.z_star(), 0.1), Err(Error::Divergence { .. })));
    }

    #[test]
    fn zero_alpha_records_are_constant() {
        let (gt, ens) = small();
        let cfg = GdConfig {
            alpha: 0.0,
            mu: 0.05,
            r_hat: 3,
            t_max: 25,
            record_stride: 10,
            seed: 1,
        };
        let traj = run_gd(&cfg, &gt, &ens, None).unwrap();
        let ts: Vec<usize> = traj.steps.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![0, 10, 20, 25]);
        for r in &traj.steps {
            assert_eq!(r.loss, traj.steps[0].loss);
            assert_eq!(r.sing_vals, traj.steps[0].sing_vals);
            assert_eq!(r.spectral_rel_err, Some(0.0));
            assert!(r.ranks.iter().all(|d| d.degenerate && d.align == 1.0));
        }
    }

    #[test]
    fn huge_step_diverges_with_status() {
        let (gt, ens) = small();
        let cfg = GdConfig {
            alpha: 1.0,
            mu: 50.0,
            r_hat: 2,
            t_max: 200,
            record_stride: 1,
            seed: 2,
        };
        let traj = run_gd(&cfg, &gt, &ens, None).unwrap();
        assert!(matches!(traj.status, RunStatus::Diverged { .. }));
        assert!(linalg::is_finite(&traj.final_u));
    }

    #[test]
    fn initial_direction_has_unit_norm() {
        let u = initial_direction(7, 4, 11);
        assert!((linalg::spectral_norm(&u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decompose_inside_span() {
        let (gt, _) = small();
        let trunc = gt.truncate(2).unwrap();
        let u = &trunc.v_xs * random::gaussian_matrix(&mut random::seeded(4), 2, 3);
        let dec = decompose(&u, &trunc).unwrap();
        assert!(dec.orth_norm < 1e-10);
        let dec = decompose(&trunc.x_s, &trunc).unwrap();
        assert!(dec.align < 1e-10);
        assert!(!dec.degenerate);
    }

    #[test]
    fn config_validation_lists_every_field() {
        let cfg = GdConfig {
            alpha: -1.0,
            mu: 0.0,
            r_hat: 0,
            t_max: 1,
            record_stride: 0,
            seed: 0,
        };
        match cfg.validate(4) {
            Err(Error::Config(errs)) => assert_eq!(errs.len(), 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn decompose_splits_orthogonally(seed in any::<u64>(), k in 2usize..6) {
            let gt = make_ground_truth(6, &[3.0, 2.0, 1.0], TruthMode::Orthogonalized, seed).unwrap();
            let trunc = gt.truncate(2).unwrap();
            let u = random::gaussian_matrix(&mut random::seeded(seed ^ 7), 6, k);
            let dec = decompose(&u, &trunc).unwrap();
            let split = (&u * &dec.w).norm_squared() + (&u * &dec.w_perp).norm_squared();
            prop_assert!((split - u.norm_squared()).abs() < 1e-10 * (1.0 + u.norm_squared()));
            let eye = &dec.w * dec.w.transpose() + &dec.w_perp * dec.w_perp.transpose();
            prop_assert!((eye - Mat::identity(k, k)).norm() < 1e-10);
        }

        #[test]
        fn step_is_pure(seed in any::<u64>()) {
            let gt = make_ground_truth(4, &[2.0, 1.0], TruthMode::Orthogonalized, seed).unwrap();
            let ens = MeasurementEnsemble::gaussian(4, 20, seed).unwrap();
            let u = random::gaussian_matrix(&mut random::seeded(seed), 4, 2) * 0.1;
            let a = gd_step(&u, &ens, &gt.z_star(), 0.01).unwrap();
            let b = gd_step(&u, &ens, &gt.z_star(), 0.01).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
