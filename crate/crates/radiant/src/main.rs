//! Command-line runner: config-driven solves, the stratified reference
//! solver, profile comparison, benchmark series, and operator inspection.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use radiant::config::RunConfig;
use radiant::pipeline::{
    self, compare_profiles, convergence_order, read_profile, write_slab_profile, PipelineError,
};
use radiant::stratified::{KappaProfile, SlabProblem};

#[derive(Parser)]
#[command(
    name = "radiant",
    about = "Stationary radiative transfer and temperature on tetrahedral meshes",
    version
)]
struct Cli {
    /// Worker threads for assembly and matvecs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Verbose logging.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the pipeline from a config and solve.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Grey timing series over slab meshes of increasing size.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Per-axis subdivision counts, e.g. --series 7,15,30
        #[arg(long, value_delimiter = ',')]
        series: Vec<usize>,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Solve the 1D stratified reference problem and write its profile.
    Stratified {
        /// Constant absorption level.
        #[arg(long, default_value_t = 0.5)]
        kappa: f64,
        /// Optional affine absorption "base,slope" overriding --kappa.
        #[arg(long)]
        affine: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        height: f64,
        #[arg(long, default_value_t = 2e-5)]
        q0: f64,
        #[arg(long, default_value_t = 1.02)]
        t_sun: f64,
        #[arg(long, default_value_t = 800)]
        nodes: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value = "stratified.csv")]
        out: PathBuf,
    },
    /// Gap metrics between two profiles, or a convergence order for a series.
    Compare {
        /// Profile CSV to evaluate.
        #[arg(long, required_unless_present = "series")]
        profile_a: Option<PathBuf>,
        /// Reference profile CSV.
        #[arg(long)]
        profile_b: Option<PathBuf>,
        /// Refinement series entries n:path (repeatable); compared against
        /// --profile-b to produce a convergence order.
        #[arg(long)]
        series: Vec<String>,
    },
    /// Dump the block layout of one compressed operator as CSV.
    InspectHmat {
        #[arg(long)]
        config: PathBuf,
        /// volume | surface
        #[arg(long, default_value = "volume")]
        kind: String,
        #[arg(long, default_value_t = 0)]
        bin: usize,
        #[arg(long, default_value = "blocks.csv")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose {
        "debug"
    } else {
        "info"
    }))
    .init();

    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("failed to size thread pool: {e}");
            return ExitCode::from(7);
        }
    }

    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Run { config, output_dir } => {
            let cfg = RunConfig::load(&config)?;
            let artifacts = pipeline::run(&cfg, &output_dir)?;
            for solve in &artifacts.report.solves {
                println!(
                    "solve {}: {} sweeps, converged={}, T in [{:.6}, {:.6}] reduced",
                    solve.name,
                    solve.iterations,
                    solve.converged,
                    solve.min_temperature,
                    solve.max_temperature
                );
            }
            for path in pipeline::describe_outputs(&cfg, &output_dir) {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Bench {
            config,
            series,
            output_dir,
        } => {
            let cfg = RunConfig::load(&config)?;
            let series = if series.is_empty() {
                vec![7, 15, 30]
            } else {
                series
            };
            let report = pipeline::bench(&cfg, &series, &output_dir)?;
            for p in &report.points {
                println!(
                    "N={:<8} build {:.2}s solve {:.2}s total {:.2}s ({} sweeps)",
                    p.n_vertices, p.build_s, p.solve_s, p.total_s, p.iterations
                );
            }
            println!(
                "fit t = C N log N: C={:.3e}, rel residual {:.3}",
                report.nlogn_fit.constant, report.nlogn_fit.rel_residual
            );
            println!(
                "fit t = C N^2:     C={:.3e}, rel residual {:.3}",
                report.nsquared_fit.constant, report.nsquared_fit.rel_residual
            );
            println!("wrote {}/bench.csv and bench.json", output_dir.display());
            Ok(())
        }
        Command::Stratified {
            kappa,
            affine,
            height,
            q0,
            t_sun,
            nodes,
            tol,
            out,
        } => {
            let profile = match &affine {
                Some(spec) => {
                    let parts: Vec<&str> = spec.split(',').collect();
                    let parse = |i: usize| -> Result<f64, PipelineError> {
                        parts
                            .get(i)
                            .and_then(|s| s.trim().parse().ok())
                            .ok_or_else(|| {
                                PipelineError::Compare(format!(
                                    "--affine expects base,slope (got {spec:?})"
                                ))
                            })
                    };
                    KappaProfile::AffineX {
                        base: parse(0)?,
                        slope: parse(1)?,
                    }
                }
                None => KappaProfile::Constant(kappa),
            };
            let problem = SlabProblem::with_uniform_grid(height, nodes, profile, q0, t_sun)
                .map_err(|e| PipelineError::Compare(e.to_string()))?;
            let solution = problem.solve(tol, 5000);
            if !solution.converged {
                log::warn!("stratified solve hit the iteration cap");
            }
            write_slab_profile(&out, &solution)?;
            println!(
                "stratified profile ({} nodes, {} sweeps) -> {}",
                nodes,
                solution.iterations,
                out.display()
            );
            Ok(())
        }
        Command::Compare {
            profile_a,
            profile_b,
            series,
        } => {
            let reference = profile_b
                .as_ref()
                .map(|p| read_profile(p))
                .transpose()?
                .ok_or_else(|| PipelineError::Compare("--profile-b is required".into()))?;
            if series.is_empty() {
                let a = read_profile(profile_a.as_ref().expect("clap enforces profile-a"))?;
                let result = compare_profiles(&a, &reference)?;
                println!("{}", serde_json::to_string_pretty(&result).unwrap());
            } else {
                let mut points = Vec::new();
                let mut gaps = serde_json::Map::new();
                for entry in &series {
                    let (nstr, path) = entry.split_once(':').ok_or_else(|| {
                        PipelineError::Compare(format!("--series expects n:path, got {entry:?}"))
                    })?;
                    let n: f64 = nstr.parse().map_err(|_| {
                        PipelineError::Compare(format!("bad series index {nstr:?}"))
                    })?;
                    let prof = read_profile(Path::new(path))?;
                    let gap = compare_profiles(&prof, &reference)?;
                    gaps.insert(entry.clone(), serde_json::json!(gap.l2_rel_gap));
                    points.push((n, gap.l2_rel_gap));
                }
                let order = convergence_order(&points);
                println!(
                    "{}",
                    serde_json::to_string_pretty(&serde_json::json!({
                        "gaps": gaps,
                        "convergence_order": order,
                    }))
                    .unwrap()
                );
            }
            Ok(())
        }
        Command::InspectHmat {
            config,
            kind,
            bin,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            pipeline::inspect_hmat(&cfg, &kind, bin, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}
