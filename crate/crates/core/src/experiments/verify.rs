//! The `verify` driver: invariant suites with counts and worst ratios.
//!
//! Every check is either asserted, and then decides the exit status, or
//! flagged, meaning it is reported for information because its hypothesis
//! is not met (an oversized RSI radius, an unsupported ground-truth mode).

use super::config::ExperimentConfig;
use super::run::{expand_grid, solve_references};
use crate::dynamics::{self, gd_error_check, run_gd, spectral_phase_series};
use crate::error::Result;
use crate::ground_truth::{GroundTruth, TruthMode};
use crate::landscape::{
    self, check_minima_close, factorization_critical_points, procrustes, procrustes_lower_bound_check,
    random_init_regularity, rank1_strong_convexity, verify_rsi_factorization, verify_rsi_sensing,
};
use crate::linalg::{self, Mat};
use crate::random;
use crate::sensing::{check_m_eigen, check_rip_consequence, estimate_rip_delta, MeasurementEnsemble};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Landscape,
    Sensing,
    Dynamics,
    All,
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "landscape" => Ok(Suite::Landscape),
            "sensing" => Ok(Suite::Sensing),
            "dynamics" => Ok(Suite::Dynamics),
            "all" => Ok(Suite::All),
            other => Err(format!("unknown suite `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckClass {
    Asserted,
    Flagged,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub suite: Suite,
    pub name: String,
    pub class: CheckClass,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match (self.class, self.passed) {
            (_, true) => "PASS",
            (CheckClass::Asserted, false) => "FAIL",
            (CheckClass::Flagged, false) => "FLAG",
        };
        let tag = match self.class {
            CheckClass::Asserted => "",
            CheckClass::Flagged => " (not asserted)",
        };
        write!(f, "{verdict} [{:?}] {}{tag}: {}", self.suite, self.name, self.detail)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub delta_hat: f64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn assertion_failures(&self) -> usize {
        self.checks
            .iter()
            .filter(|c| c.class == CheckClass::Asserted && !c.passed)
            .count()
    }

    pub fn flagged(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.class == CheckClass::Flagged)
    }

    pub fn ok(&self) -> bool {
        self.assertion_failures() == 0
    }
}

const LOWER_BOUND_PAIRS: usize = 500;
const ORACLE_GRID: usize = 1_000_000;
const INIT_TRIALS: usize = 1000;
const GD_ERROR_STEPS: usize = 200;
const GD_ERROR_EPS: f64 = 1e-6;

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    gt: GroundTruth,
    ens: MeasurementEnsemble,
    delta_hat: f64,
    refs: OnceLock<Result<Vec<landscape::BestRankSolution>>>,
}

impl Context<'_> {
    fn refs(&self) -> Result<&[landscape::BestRankSolution]> {
        match self.refs.get_or_init(|| solve_references(self.cfg, &self.gt, &self.ens)) {
            Ok(r) => Ok(r),
            Err(e) => Err(crate::Error::Config(vec![format!("references: {e}")])),
        }
    }

    fn rsi_class(&self) -> CheckClass {
        if self.cfg.verify.rsi_radius_scale > 1.0 {
            CheckClass::Flagged
        } else {
            CheckClass::Asserted
        }
    }
}

fn check(suite: Suite, name: impl Into<String>, class: CheckClass, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        suite,
        name: name.into(),
        class,
        passed,
        detail,
    }
}

/// Closed-form Procrustes against a sign oracle (`s = 1`) or a fine grid
/// over O(2) (`s = 2`).
pub fn procrustes_oracle_gap(u1: &Mat, u2: &Mat, grid: usize) -> Result<f64> {
    let closed = procrustes(u1, u2)?.distance;
    let oracle = match u1.ncols() {
        1 => (u1 - u2).norm().min((u1 + u2).norm()),
        2 => {
            let c = u2.transpose() * u1;
            let base = u1.norm_squared() + u2.norm_squared();
            let mut best = f64::INFINITY;
            for i in 0..grid {
                let th = std::f64::consts::TAU * i as f64 / grid as f64;
                let (s, co) = th.sin_cos();
                let rot = co * (c[(0, 0)] + c[(1, 1)]) + s * (c[(1, 0)] - c[(0, 1)]);
                let refl = co * (c[(0, 0)] - c[(1, 1)]) + s * (c[(0, 1)] + c[(1, 0)]);
                best = best.min(base - 2.0 * rot.max(refl));
            }
            best.max(0.0).sqrt()
        }
        k => return Err(crate::Error::dim(format!("no oracle for width {k}"))),
    };
    Ok((closed - oracle).abs())
}

fn sensing_checks(ctx: &Context) -> Result<Vec<CheckResult>> {
    let (gt, ens, dh) = (&ctx.gt, &ctx.ens, ctx.delta_hat);
    let d = gt.d();
    let mut rng = random::seeded(random::derive_seed(ctx.cfg.verify.seed, 1));
    let mut out = Vec::new();

    let mut worst_adj: f64 = 0.0;
    let mut symmetric = true;
    let mut worst_psd: f64 = 0.0;
    for _ in 0..100 {
        let z = linalg::symmetrize(&random::gaussian_matrix(&mut rng, d, d));
        let w: Vec<f64> = (0..ens.m()).map(|_| random::normal(&mut rng)).collect();
        let az = ens.apply(&z)?;
        let adj = ens.adjoint(&w)?;
        symmetric &= adj == adj.transpose();
        let left: f64 = az.iter().zip(&w).map(|(a, b)| a * b).sum();
        let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst_adj = worst_adj.max((left - linalg::frob_inner(&z, &adj)).abs() / (1.0 + z.norm() * wn));
        let (aa, sq) = ens.normal_op(&z)?;
        worst_psd = worst_psd.max((linalg::frob_inner(&z, &aa) - sq).abs() / (1.0 + sq));
    }
    out.push(check(
        Suite::Sensing,
        "adjointness",
        CheckClass::Asserted,
        worst_adj <= 1e-10 && symmetric,
        format!("100 pairs, worst scaled gap {worst_adj:.3e}, adjoint symmetric: {symmetric}"),
    ));
    out.push(check(
        Suite::Sensing,
        "normal operator is PSD",
        CheckClass::Asserted,
        worst_psd <= 1e-10,
        format!("100 matrices, worst |<Z, A*A Z> - |A Z|^2| {worst_psd:.3e}"),
    ));

    let delta = 2.0 * dh;
    let rip_rank = ctx.cfg.rip_rank();
    let (mut nuc_fail, mut spec_fail, mut worst) = (0, 0, 0.0f64);
    for _ in 0..200 {
        let v = random::unit_direction(&mut rng, d, 1);
        let z = &v * v.transpose();
        let rep = check_rip_consequence(ens, &z, delta, Some(rip_rank))?;
        nuc_fail += usize::from(!rep.nuclear_pass);
        spec_fail += usize::from(rep.spectral_pass == Some(false));
        if rep.nuclear_bound > 0.0 {
            worst = worst.max(rep.lhs / rep.nuclear_bound);
        }
    }
    out.push(check(
        Suite::Sensing,
        "RIP consequence on rank-1 matrices",
        CheckClass::Asserted,
        nuc_fail == 0 && spec_fail == 0,
        format!(
            "200 samples, delta = 2 x {dh:.4}, nuclear failures {nuc_fail}, spectral failures {spec_fail}, worst lhs/bound {worst:.3}"
        ),
    ));

    let me = check_m_eigen(gt, ens, delta)?;
    let worst_dev = me.deviations.iter().copied().fold(0.0, f64::max);
    out.push(check(
        Suite::Sensing,
        "eigenvalue perturbation of A*A(XX^T)",
        CheckClass::Asserted,
        me.pass,
        format!("max |sigma_hat_i^2 - sigma_i^2| = {worst_dev:.4e}, bound {:.4e}", me.bound),
    ));
    out.push(check(
        Suite::Sensing,
        "RIP estimate",
        CheckClass::Flagged,
        true,
        format!("delta_hat = {dh:.4} at rank {rip_rank} ({} samples, lower bound)", ctx.cfg.rip.samples),
    ));
    Ok(out)
}

fn landscape_checks(ctx: &Context) -> Result<Vec<CheckResult>> {
    let (gt, ens, dh) = (&ctx.gt, &ctx.ens, ctx.delta_hat);
    let v = &ctx.cfg.verify;
    let mut out = Vec::new();
    let mut rng = random::seeded(random::derive_seed(v.seed, 2));

    for s in [1usize, 2] {
        let mut worst: f64 = 0.0;
        for _ in 0..v.pairs {
            let u1 = random::gaussian_matrix(&mut rng, gt.d(), s);
            let u2 = random::gaussian_matrix(&mut rng, gt.d(), s);
            worst = worst.max(procrustes_oracle_gap(&u1, &u2, ORACLE_GRID)?);
        }
        out.push(check(
            Suite::Landscape,
            format!("Procrustes oracle, s = {s}"),
            CheckClass::Asserted,
            worst <= 1e-5,
            format!("{} pairs, worst |closed form - oracle| {worst:.3e}", v.pairs),
        ));
    }

    let mut lb_fail = 0;
    let mut lb_min = f64::INFINITY;
    for _ in 0..LOWER_BOUND_PAIRS {
        let u1 = random::gaussian_matrix(&mut rng, 20, 3);
        let u2 = random::gaussian_matrix(&mut rng, 20, 3);
        let c = procrustes_lower_bound_check(&u1, &u2)?;
        lb_fail += usize::from(!c.pass);
        if c.rhs > 0.0 {
            lb_min = lb_min.min(c.lhs / c.rhs);
        }
    }
    out.push(check(
        Suite::Landscape,
        "Procrustes lower bound",
        CheckClass::Asserted,
        lb_fail == 0,
        format!("{LOWER_BOUND_PAIRS} pairs at d = 20, r = 3, violations {lb_fail}, min lhs/rhs {lb_min:.3}"),
    ));

    let refs = ctx.refs()?;
    for sol in refs {
        let rep = verify_rsi_sensing(gt, ens, sol, v.samples, random::derive_seed(v.seed, 10 + sol.s as u64), v.rsi_radius_scale)?;
        out.push(check(
            Suite::Landscape,
            format!("RSI sensing, s = {}", sol.s),
            ctx.rsi_class(),
            rep.violations == 0,
            format!(
                "{} samples ({} skipped), radius {:.3e}, violations {}, min ratio {:.3}",
                rep.samples, rep.skipped, rep.radius, rep.violations, rep.min_ratio
            ),
        ));
        let mc = check_minima_close(gt, sol, dh)?;
        out.push(check(
            Suite::Landscape,
            format!("minima closeness, s = {}", sol.s),
            CheckClass::Asserted,
            mc.pass,
            format!("|Z_s* - X_s X_s^T| = {:.4e}, bound {:.4e}", mc.gap, mc.bound),
        ));
        let spread_tol = 1e-4 * gt.norm();
        out.push(check(
            Suite::Landscape,
            format!("restart agreement, s = {}", sol.s),
            CheckClass::Asserted,
            sol.restart_spread <= spread_tol,
            format!("spread {:.3e}, tolerance {spread_tol:.3e}, grad norm {:.3e}", sol.restart_spread, sol.grad_norm),
        ));
        let smin = linalg::sigma_min(&sol.u_star);
        let floor = 0.5 * gt.sigmas()[sol.s - 1];
        out.push(check(
            Suite::Landscape,
            format!("sigma_min of U_s*, s = {}", sol.s),
            CheckClass::Flagged,
            smin >= floor,
            format!("sigma_min {smin:.4}, half of sigma_s {floor:.4}"),
        ));
    }

    for s in 1..=gt.r_star() {
        let rep = verify_rsi_factorization(gt, s, v.samples, random::derive_seed(v.seed, 20 + s as u64), v.rsi_radius_scale)?;
        out.push(check(
            Suite::Landscape,
            format!("RSI factorization, s = {s}"),
            ctx.rsi_class(),
            rep.violations == 0,
            format!(
                "{} samples ({} skipped), radius {:.3e}, violations {}, min ratio {:.3}",
                rep.samples, rep.skipped, rep.radius, rep.violations, rep.min_ratio
            ),
        ));
    }

    if gt.mode() == TruthMode::Orthogonalized {
        let tol = 1e-10 * gt.norm().powi(3);
        let mut ok = true;
        let mut count = 0;
        for s in 1..=gt.r_star() {
            let pts = factorization_critical_points(gt, s)?;
            count += pts.len();
            ok &= pts.iter().all(|p| p.grad_norm <= tol);
            let best = pts.iter().min_by(|a, b| a.f_value.total_cmp(&b.f_value)).expect("non-empty");
            ok &= best.subset == (0..s).collect::<Vec<_>>();
        }
        out.push(check(
            Suite::Landscape,
            "factorization critical points",
            CheckClass::Asserted,
            ok,
            format!("{count} points over s = 1..={}, all stationary and top subsets minimal: {ok}", gt.r_star()),
        ));
    } else {
        out.push(check(
            Suite::Landscape,
            "factorization critical points",
            CheckClass::Flagged,
            true,
            "skipped: needs an orthogonalized ground truth".into(),
        ));
    }

    let conv = rank1_strong_convexity(gt, ens, 0.1f64.sqrt(), v.probes, dh, random::derive_seed(v.seed, 3))?;
    let min_eig = conv.min_eig_in_ball.unwrap_or(f64::INFINITY);
    out.push(check(
        Suite::Landscape,
        "rank-1 strong convexity",
        CheckClass::Asserted,
        min_eig >= conv.expected_floor && conv.max_fd_rel_err <= 1e-4,
        format!(
            "{} probes, min eigenvalue {min_eig:.4}, floor {:.4}, max finite-difference gap {:.2e}",
            conv.probes.len(),
            conv.expected_floor,
            conv.max_fd_rel_err
        ),
    ));

    let r_hat = ctx.cfg.grid.r_hat.iter().copied().max().unwrap_or(gt.d());
    let s = gt.r_star().min(r_hat);
    let rho = 0.01 * ((r_hat as f64).sqrt() - ((s - 1) as f64).sqrt()) / (r_hat as f64).sqrt();
    let init = random_init_regularity(gt.d(), r_hat, s, rho, INIT_TRIALS, random::derive_seed(v.seed, 4))?;
    out.push(check(
        Suite::Landscape,
        "random initialization regularity",
        CheckClass::Asserted,
        init.success_fraction >= 0.9,
        format!(
            "r_hat = {r_hat}, s = {s}, rho = {rho:.3e}, success fraction {:.4} over {INIT_TRIALS} trials",
            init.success_fraction
        ),
    ));
    Ok(out)
}

fn dynamics_checks(ctx: &Context) -> Result<Vec<CheckResult>> {
    let (gt, ens, dh) = (&ctx.gt, &ctx.ens, ctx.delta_hat);
    let mut out = Vec::new();
    let base = expand_grid(ctx.cfg).into_iter().next().expect("validated grid is non-empty");
    let z_star = gt.z_star();

    let zero = Mat::zeros(gt.d(), base.r_hat);
    let fixed = dynamics::gd_step(&zero, ens, &z_star, base.mu)? == zero;
    out.push(check(Suite::Dynamics, "zero is a fixed point", CheckClass::Asserted, fixed, format!("{fixed}")));

    let ge = gd_error_check(&base, gt, ens, GD_ERROR_EPS, GD_ERROR_STEPS, random::derive_seed(ctx.cfg.verify.seed, 5))?;
    out.push(check(
        Suite::Dynamics,
        "trajectory divergence bound",
        CheckClass::Asserted,
        ge.violations == 0,
        format!(
            "k <= {}, eps = {:.0e}, L = {:.3}, max ratio {:.3e}, violations {}",
            ge.steps, ge.eps, ge.lipschitz, ge.max_ratio, ge.violations
        ),
    ));

    if base.alpha > 0.0 {
        let series = spectral_phase_series(&base, gt, ens, dh, base.t_max)?;
        let window = series.iter().find(|g| g.bound > g.sp_norm).map(|g| g.t);
        let scoped = series.iter().filter(|g| window.is_none_or(|w| g.t <= w));
        let bad = scoped.clone().filter(|g| g.err > g.bound).count();
        let worst = scoped.map(|g| if g.bound > 0.0 { g.err / g.bound } else { 0.0 }).fold(0.0, f64::max);
        let w = window.unwrap_or(base.t_max);
        out.push(check(
            Suite::Dynamics,
            "spectral-phase bound",
            CheckClass::Asserted,
            bad == 0,
            format!("validity window {w} steps, violations {bad}, max err/bound {worst:.3e}"),
        ));
        out.push(check(
            Suite::Dynamics,
            "spectral-phase window length",
            CheckClass::Flagged,
            w >= 50,
            format!("{w} steps (50 expected at alpha = 1e-3)"),
        ));
    }

    let traj = run_gd(&base, gt, ens, None)?;
    let top = traj.steps.iter().filter_map(|r| r.sing_vals.first().copied()).fold(0.0, f64::max);
    let class = if base.alpha <= 1e-2 { CheckClass::Asserted } else { CheckClass::Flagged };
    out.push(check(
        Suite::Dynamics,
        "iterate norm bound",
        class,
        top <= 3.0 * gt.norm(),
        format!("max recorded |U_t| = {top:.4}, 3|X| = {:.4}", 3.0 * gt.norm()),
    ));

    let short = dynamics::GdConfig {
        t_max: base.t_max.min(200),
        ..base.clone()
    };
    let a = run_gd(&short, gt, ens, None)?;
    let b = run_gd(&short, gt, ens, None)?;
    let same = a.steps == b.steps && a.final_u == b.final_u;
    out.push(check(Suite::Dynamics, "trajectory determinism", CheckClass::Asserted, same, format!("{same}")));
    Ok(out)
}

type SuiteFn = fn(&Context) -> Result<Vec<CheckResult>>;

pub fn cmd_verify(cfg: &ExperimentConfig, suite: Suite) -> Result<VerifyReport> {
    cfg.validate()?;
    let gt = cfg.build_ground_truth()?;
    let ens = cfg.build_ensemble()?;
    let delta_hat = estimate_rip_delta(&ens, cfg.rip_rank(), cfg.rip.samples, cfg.rip.seed)?.delta_hat;
    let ctx = Context {
        cfg,
        gt,
        ens,
        delta_hat,
        refs: OnceLock::new(),
    };
    let mut suites: Vec<SuiteFn> = Vec::new();
    if matches!(suite, Suite::Sensing | Suite::All) {
        suites.push(sensing_checks);
    }
    if matches!(suite, Suite::Landscape | Suite::All) {
        suites.push(landscape_checks);
    }
    if matches!(suite, Suite::Dynamics | Suite::All) {
        suites.push(dynamics_checks);
    }
    let results: Vec<Vec<CheckResult>> = suites.par_iter().map(|f| f(&ctx)).collect::<Result<_>>()?;
    Ok(VerifyReport {
        delta_hat,
        checks: results.into_iter().flatten().collect(),
    })
}
