use clap::{Parser, Subcommand};
use msense::experiments::{cmd_plot, cmd_run, cmd_verify, exit, ExperimentConfig, PlotKind, Profile, Suite};
use msense::landscape::solve_best_rank_s;
use msense::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "msense", version, about = "Incremental learning of gradient descent on low-rank matrix sensing")]
struct Cli {
    /// Built-in defaults the config file is merged over.
    #[arg(long, global = true)]
    profile: Option<Profile>,
    /// Worker threads for grid points and sample sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured GD grid and write trajectories plus a summary.
    Run { config: PathBuf },
    /// Execute invariant suites and report per-check results.
    Verify {
        config: PathBuf,
        #[arg(long, default_value = "all")]
        suite: Suite,
    },
    /// Render trajectory CSVs as an SVG with a log-scale y axis.
    Plot {
        #[arg(long)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
    /// Solve for the best rank-s solution and print it as JSON.
    BestRank {
        config: PathBuf,
        #[arg(long)]
        s: usize,
    },
}

fn code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Schema { .. }
        | Error::InvalidSpectrum(_)
        | Error::UnsupportedMode(_)
        | Error::Dimension(_) => {
            exit::VALIDATION as u8
        }
        Error::Divergence { .. } => exit::DIVERGENCE as u8,
        _ => exit::ASSERTION as u8,
    }
}

fn load(path: &Path, profile: Option<Profile>) -> Result<ExperimentConfig, Error> {
    ExperimentConfig::load(path, profile)
}

fn execute(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config, cli.profile)?;
            let out_dir = cfg.output_dir();
            let result = cmd_run(&cfg, &out_dir)?;
            for run in &result.per_run {
                println!(
                    "{} alpha={:e} mu={:e} r_hat={} seed={} T_hit={:?} final_loss={:e}",
                    run.csv, run.params.alpha, run.params.mu, run.params.r_hat, run.params.seed, run.t_hit, run.final_loss
                );
            }
            println!("summary written to {}", out_dir.join("summary.json").display());
            Ok(if result.any_diverged() { exit::DIVERGENCE } else { exit::SUCCESS } as u8)
        }
        Command::Verify { config, suite } => {
            let cfg = load(&config, cli.profile)?;
            let report = cmd_verify(&cfg, suite)?;
            for c in &report.checks {
                println!("{c}");
            }
            println!(
                "{} checks, {} assertion failures, {} flagged",
                report.checks.len(),
                report.assertion_failures(),
                report.flagged().count()
            );
            Ok(if report.ok() { exit::SUCCESS } else { exit::ASSERTION } as u8)
        }
        Command::Plot { kind, out, csv } => {
            let paths: Vec<&Path> = csv.iter().map(PathBuf::as_path).collect();
            cmd_plot(&paths, &out, kind)?;
            println!("wrote {}", out.display());
            Ok(exit::SUCCESS as u8)
        }
        Command::BestRank { config, s } => {
            let cfg = load(&config, cli.profile)?;
            let gt = cfg.build_ground_truth()?;
            let ens = cfg.build_ensemble()?;
            let r = &cfg.references;
            let sol = solve_best_rank_s(&gt, &ens, s, r.restarts, r.tol, r.max_iters)?;
            let json = sol.to_json()?;
            let out_dir = cfg.output_dir();
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join(format!("best_rank_s{s}.json")), &json)?;
            println!("{json}");
            Ok(exit::SUCCESS as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(exit::VALIDATION as u8);
        }
    }
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(code_for(&e))
        }
    }
}
