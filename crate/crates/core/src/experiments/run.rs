//! The `run` driver: references, the run grid, CSV and summary output.

use super::config::ExperimentConfig;
use super::plot::{render_svg, PlotKind, Series};
use crate::dynamics::{detect_phases, run_gd, write_csv, GdConfig, PhaseReport, RunStatus, Trajectory};
use crate::error::Result;
use crate::ground_truth::GroundTruth;
use crate::landscape::{solve_best_rank_s, BestRankSolution};
use crate::sensing::{estimate_rip_delta, MeasurementEnsemble};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub alpha: f64,
    pub mu: f64,
    pub r_hat: usize,
    pub t_max: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub params: RunParams,
    pub csv: String,
    #[serde(flatten)]
    pub status: RunStatus,
    #[serde(rename = "T_hit")]
    pub t_hit: Vec<Option<usize>>,
    pub hit_radius: Vec<Option<f64>>,
    pub min_rel_err: Vec<f64>,
    pub final_loss: f64,
    pub phases: PhaseReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub s: usize,
    pub f_value: f64,
    pub grad_norm: f64,
    pub restart_spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config_hash: String,
    pub delta_hat: f64,
    pub rip_rank: usize,
    pub references: Vec<ReferenceSummary>,
    pub per_run: Vec<RunSummary>,
}

impl SweepResult {
    pub fn any_diverged(&self) -> bool {
        self.per_run.iter().any(|r| r.status != RunStatus::Completed)
    }
}

/// Cartesian product of the grid in the order alpha, mu, r_hat, t_max, seed.
pub fn expand_grid(cfg: &ExperimentConfig) -> Vec<GdConfig> {
    let g = &cfg.grid;
    let mut out = Vec::new();
    for &alpha in &g.alpha {
        for &mu in &g.mu {
            for &r_hat in &g.r_hat {
                for &t_max in &g.t_max {
                    for &seed in &g.seeds {
                        out.push(GdConfig {
                            alpha,
                            mu,
                            r_hat,
                            t_max,
                            record_stride: cfg.outputs.stride,
                            seed,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Solves the configured references concurrently, in rank order.
pub fn solve_references(cfg: &ExperimentConfig, gt: &GroundTruth, ens: &MeasurementEnsemble) -> Result<Vec<BestRankSolution>> {
    let r = &cfg.references;
    r.ranks
        .par_iter()
        .map(|&s| solve_best_rank_s(gt, ens, s, r.restarts, r.tol, r.max_iters))
        .collect()
}

pub fn summarize(traj: &Trajectory, gt: &GroundTruth, delta_hat: f64, csv: String) -> RunSummary {
    let phases = detect_phases(traj, gt, Some(delta_hat));
    let n_ranks = traj.steps.first().map_or(0, |r| r.ranks.len());
    let min_rel_err = (0..n_ranks)
        .map(|i| traj.steps.iter().map(|r| r.ranks[i].rel_err).fold(f64::INFINITY, f64::min))
        .collect();
    let c = &traj.config;
    RunSummary {
        params: RunParams {
            alpha: c.alpha,
            mu: c.mu,
            r_hat: c.r_hat,
            t_max: c.t_max,
            seed: c.seed,
        },
        csv,
        status: traj.status,
        t_hit: phases.hitting_times(),
        hit_radius: phases.ranks.iter().map(|r| r.hit_radius).collect(),
        min_rel_err,
        final_loss: traj.steps.last().map_or(f64::NAN, |r| r.loss),
        phases,
    }
}

fn rel_err_series(traj: &Trajectory) -> Vec<Series> {
    (1..=traj.r_star)
        .map(|s| Series {
            label: format!("E_{s}"),
            points: traj
                .steps
                .iter()
                .filter_map(|r| r.ranks.iter().find(|d| d.s == s).map(|d| (r.t as f64, d.rel_err)))
                .collect(),
        })
        .collect()
}

/// Builds the problem, runs the grid concurrently and writes
/// `run_NNN.csv` per grid point, the reference solutions and
/// `summary.json` into `out_dir`.
pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SweepResult> {
    cfg.validate()?;
    let gt = cfg.build_ground_truth()?;
    let ens = cfg.build_ensemble()?;
    let rip_rank = cfg.rip_rank();
    let delta_hat = estimate_rip_delta(&ens, rip_rank, cfg.rip.samples, cfg.rip.seed)?.delta_hat;
    let refs = solve_references(cfg, &gt, &ens)?;

    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("ground_truth.json"), gt.to_json()?)?;
    for sol in &refs {
        fs::write(out_dir.join(format!("best_rank_s{}.json", sol.s)), sol.to_json()?)?;
    }

    let grid = expand_grid(cfg);
    let per_run: Vec<RunSummary> = grid
        .par_iter()
        .enumerate()
        .map(|(i, gd)| -> Result<RunSummary> {
            let traj = run_gd(gd, &gt, &ens, Some(&refs))?;
            let name = format!("run_{i:03}.csv");
            let path: PathBuf = out_dir.join(&name);
            let mut buf = Vec::new();
            write_csv(&traj, &mut buf)?;
            fs::write(&path, buf)?;
            if cfg.outputs.plots {
                let svg = render_svg(PlotKind::RelErr, &rel_err_series(&traj));
                fs::write(out_dir.join(format!("run_{i:03}_rel_err.svg")), svg)?;
            }
            Ok(summarize(&traj, &gt, delta_hat, name))
        })
        .collect::<Result<_>>()?;

    let result = SweepResult {
        config_hash: cfg.hash(),
        delta_hat,
        rip_rank,
        references: refs
            .iter()
            .map(|r| ReferenceSummary {
                s: r.s,
                f_value: r.f_value,
                grad_norm: r.grad_norm,
                restart_spread: r.restart_spread,
            })
            .collect(),
        per_run,
    };
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&result)?)?;
    Ok(result)
}
