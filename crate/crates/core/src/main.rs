//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 config error, 3 runtime error, 4 check
//! failure.

use clap::{Parser, Subcommand};
use occstream::acceptance;
use occstream::config::{load_config, ConfigError, RunConfig};
use occstream::fusion::{
    check_gradients, make_toy_dataset, train_fusion_toy, GradCheckOp, InitMode, TrainingSchedule,
};
use occstream::pipeline::{
    run_ablation, run_embodied, run_local, write_ablation_csv, write_artifacts,
    write_loss_curve_csv, AblationAxis, StreamOutput,
};
use occstream::scene::NUM_CLASSES;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "occstream",
    about = "Streaming monocular 3D semantic occupancy on procedural scenes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-frame local prediction from a cold pool.
    RunLocal {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Dotted-path overrides, e.g. --set lifter.sigma=1.0
        #[arg(long = "set")]
        set: Vec<String>,
        /// Output directory (defaults to the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Streaming run over the configured trajectory.
    RunEmbodied {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs one ablation axis: lift_mode | refine_mode | grm_mode |
    /// sigma_sweep | k_sweep.
    Ablate {
        axis: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verifies analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Runs the acceptance suite (one pass/fail line per criterion).
    Check {
        /// Run a single criterion by number (1-11).
        #[arg(long)]
        criterion: Option<usize>,
        /// Directory for check artifacts (toy-trainer loss curves).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_CHECK: u8 = 4;

fn load(config: &PathBuf, set: &[String]) -> Result<RunConfig, ConfigError> {
    load_config(config, set)
}

fn print_summary(kind: &str, out: &StreamOutput) {
    let m = &out.final_metrics;
    println!(
        "{kind}: sc_iou {:.4}  miou {}  boundary_f1 {:.4}  pool {}  frames {}",
        m.sc_iou,
        m.miou.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()),
        m.boundary_f1,
        out.pool.len(),
        out.frames.len()
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::RunLocal { config, set, out } => {
            let cfg = match load(&config, &set) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let out_dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            match run_local(&cfg).and_then(|o| write_artifacts(&out_dir, &o).map(|_| o)) {
                Ok(o) => {
                    print_summary("run-local", &o);
                    println!("artifacts: {}", out_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("runtime error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::RunEmbodied { config, set, out } => {
            let cfg = match load(&config, &set) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let out_dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            match run_embodied(&cfg).and_then(|o| write_artifacts(&out_dir, &o).map(|_| o)) {
                Ok(o) => {
                    print_summary("run-embodied", &o);
                    println!("artifacts: {}", out_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("runtime error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Ablate { axis, config, set, out } => {
            let Some(axis) = AblationAxis::parse(&axis) else {
                eprintln!(
                    "config error: unknown axis '{axis}' (expected lift_mode, refine_mode, grm_mode, sigma_sweep, or k_sweep)"
                );
                return ExitCode::from(EXIT_CONFIG);
            };
            let cfg = match load(&config, &set) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let out_dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            match run_ablation(&cfg, axis) {
                Ok(rows) => {
                    let path = out_dir.join(format!("ablation_{}.csv", axis.name()));
                    if let Err(e) = write_ablation_csv(&path, &rows) {
                        eprintln!("runtime error: {e}");
                        return ExitCode::from(EXIT_RUNTIME);
                    }
                    for row in &rows {
                        println!(
                            "{:<20} sc_iou {:.4}  miou {}  boundary_f1 {:.4}",
                            row.variant,
                            row.metrics.sc_iou,
                            row.metrics
                                .miou
                                .map(|v| format!("{v:.4}"))
                                .unwrap_or_else(|| "n/a".into()),
                            row.metrics.boundary_f1
                        );
                    }
                    println!("table: {}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("runtime error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Gradcheck { trials, step, tol } => {
            let mut all_pass = true;
            for op in [GradCheckOp::Gate, GradCheckOp::Grm, GradCheckOp::Fusion] {
                let report = check_gradients(op, trials, step, tol);
                println!(
                    "{}  {:?}: max rel err {:.3e} over {} trials (tol {:.0e})",
                    if report.pass { "PASS" } else { "FAIL" },
                    report.op,
                    report.max_rel_err,
                    report.trials,
                    report.tol
                );
                all_pass &= report.pass;
            }
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK)
            }
        }
        Command::Check { criterion, out } => {
            let results = match criterion {
                Some(id) => match acceptance::run_criterion(id) {
                    Some(r) => vec![r],
                    None => {
                        eprintln!("config error: no criterion {id} (valid: 1-11)");
                        return ExitCode::from(EXIT_CONFIG);
                    }
                },
                None => acceptance::run_all(),
            };
            for r in &results {
                println!("{}", r.line());
            }
            let passed = results.iter().filter(|r| r.passed).count();
            println!("{passed}/{} criteria passed", results.len());

            if let Some(out_dir) = out {
                // Companion artifact: the toy trainer's loss curve under the
                // default two-phase schedule.
                let data = make_toy_dataset(NUM_CLASSES, 256, 7);
                let sched = TrainingSchedule::default();
                match train_fusion_toy(&data, InitMode::Identity, &sched, 20) {
                    Ok(curve) => {
                        if let Err(e) =
                            write_loss_curve_csv(&out_dir.join("fusion_curve.csv"), &curve)
                        {
                            eprintln!("runtime error: {e}");
                            return ExitCode::from(EXIT_RUNTIME);
                        }
                    }
                    Err(e) => {
                        eprintln!("runtime error: {e}");
                        return ExitCode::from(EXIT_RUNTIME);
                    }
                }
            }
            if passed == results.len() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK)
            }
        }
    }
}
