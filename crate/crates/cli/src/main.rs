//! `trapcheck` command line: full verification runs, geometry lookups and
//! trajectory dumps.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use trapcheck_core::config::parse_config;
use trapcheck_core::hamiltonian_flow::{default_trapped_point, integrate, perturbed_point, IntegrateOptions};
use trapcheck_core::report::{geometry_only, run_full_report, write_run, RunOptions};
use trapcheck_core::trajectory_csv::write_trajectory_csv;
use trapcheck_core::SdsParams;

const OUT_ENV: &str = "TRAPCHECK_OUT";

#[derive(Parser, Debug)]
#[command(name = "trapcheck", version, about = "Photon-sphere trapping checks for Schwarzschild-de Sitter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every check and write report.json plus trajectory CSVs.
    Run(RunArgs),
    /// Print the geometry block for one parameter set as JSON.
    Geometry(GeometryArgs),
    /// Integrate one trajectory and write it as CSV.
    Trajectory(TrajectoryArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; TRAPCHECK_OUT takes precedence.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reduced sample sizes.
    #[arg(long)]
    quick: bool,
}

#[derive(Args, Debug)]
struct GeometryArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    mass: f64,
    #[arg(long = "lambda-cosmo", allow_negative_numbers = true)]
    lambda_cosmo: f64,
}

#[derive(Args, Debug)]
struct TrajectoryArgs {
    #[arg(long)]
    config: PathBuf,
    /// Start on the trapped set.
    #[arg(long, conflicts_with = "perturbed", required_unless_present = "perturbed")]
    gamma: bool,
    /// Start at r_p with radial momentum delta.
    #[arg(long, allow_negative_numbers = true)]
    perturbed: Option<f64>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn run(args: RunArgs) -> Result<bool> {
    let mut cfg = parse_config(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let dir = match std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        Some(v) => PathBuf::from(v),
        None => args.out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir)),
    };
    let out = run_full_report(&cfg, &RunOptions { quick: args.quick })?;
    let path = write_run(&out, &dir)?;

    let mut stdout = std::io::stdout().lock();
    for v in &out.report.verdicts {
        writeln!(stdout, "[{:>4}] {:>2} {:<26} {}", v.status, v.id, v.key, v.detail)?;
    }
    for w in &out.report.warnings {
        writeln!(stdout, "warning: {w}")?;
    }
    writeln!(stdout, "report: {}", path.display())?;
    Ok(out.report.all_passed)
}

fn geometry(args: GeometryArgs) -> Result<()> {
    let p = SdsParams::new(args.n, args.mass, args.lambda_cosmo)?;
    let g = geometry_only(&p)?;
    writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&g)?)?;
    Ok(())
}

fn trajectory(args: TrajectoryArgs) -> Result<()> {
    let cfg = parse_config(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    cfg.validate()?;
    let p = cfg.params()?;
    let x0 = match (args.gamma, args.perturbed) {
        (true, None) => default_trapped_point(&p, 1.0)?,
        (false, Some(d)) => perturbed_point(&p, d, 1.0)?,
        _ => bail!("exactly one of --gamma and --perturbed is required"),
    };
    let tr = integrate(&p, &x0, IntegrateOptions { t_final: cfg.t_final, dt: cfg.dt, variational: false })?;
    match args.output {
        Some(path) => {
            let mut f = std::io::BufWriter::new(
                std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
            );
            write_trajectory_csv(&p, &tr, &mut f)?;
            f.flush()?;
        }
        None => {
            let mut out = std::io::BufWriter::new(std::io::stdout().lock());
            write_trajectory_csv(&p, &tr, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Geometry(a) => geometry(a).map(|_| true),
        Command::Trajectory(a) => trajectory(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        // reader went away (e.g. `| head`): not our failure
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let io = c.downcast_ref::<std::io::Error>().or(match c.downcast_ref::<trapcheck_core::Error>() {
            Some(trapcheck_core::Error::Io(io)) => Some(io),
            _ => None,
        });
        io.is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}
