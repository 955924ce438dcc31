use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparse_pmp::solver::{FdScheme, PhiSign};
use sparse_pmp_cli::files::Format;
use sparse_pmp_cli::{cmd_export, cmd_solve, cmd_verify, CliError, Overrides, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "sparsepmp", version, about = "Shooting solver for sparse optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a benchmark (s1, s1-windowed, s2, s3, toy-*) or a problem file.
    Solve(SolveArgs),
    /// Check the necessary conditions on a run's trajectory.
    Verify {
        run: PathBuf,
        /// Trajectory to check instead of the run's own.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Rewrite a run's trace and trajectory in another format.
    Export {
        run: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        /// Output directory; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SolveArgs {
    instance: String,
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    switch_radius: Option<f64>,
    /// `root:C:A`, `power:C:A` or `rational:C:B`; exponents may be fractions like `4/7`.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_sa: Option<usize>,
    #[arg(long)]
    max_nr: Option<usize>,
    /// Integration nodes per interval.
    #[arg(long)]
    grid_nodes: Option<usize>,
    /// Selects the unpreconditioned stochastic step with this sign.
    #[arg(long, value_parser = parse_sign)]
    phi_sign: Option<PhiSign>,
    /// `verbatim`, `preconditioned` or `preconditioned:REFRESH`.
    #[arg(long)]
    sa_direction: Option<String>,
    #[arg(long, value_parser = parse_fd)]
    fd: Option<FdScheme>,
}

fn parse_sign(s: &str) -> Result<PhiSign, String> {
    match s {
        "+" | "plus" => Ok(PhiSign::Plus),
        "-" | "minus" => Ok(PhiSign::Minus),
        _ => Err(format!("expected + or -, got '{s}'")),
    }
}

fn parse_fd(s: &str) -> Result<FdScheme, String> {
    match s {
        "central2" => Ok(FdScheme::Central2),
        "central4" => Ok(FdScheme::Central4),
        _ => Err(format!("expected central2 or central4, got '{s}'")),
    }
}

fn thread_pool() -> Result<(), CliError> {
    let Ok(v) = std::env::var("SPARSEPMP_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| CliError::Invalid(format!("SPARSEPMP_THREADS='{v}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Invalid(e.to_string()))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    thread_pool()?;
    match cli.command {
        Command::Solve(a) => {
            let overrides = Overrides {
                eps: a.eps,
                switch_radius: a.switch_radius,
                schedule: a.schedule,
                noise_scale: a.noise_scale,
                seed: a.seed,
                max_sa: a.max_sa,
                max_nr: a.max_nr,
                grid_nodes: a.grid_nodes,
                phi_sign: a.phi_sign,
                sa_direction: a.sa_direction,
                fd: a.fd,
            };
            let (summary, code) = cmd_solve(&a.instance, &overrides, &a.out, a.format)?;
            println!(
                "{}: {:?} ‖Φ‖ = {:.3e} after {} SA + {} Newton iterations ({:.1} s)",
                summary.instance,
                summary.status,
                summary.phi_norm,
                summary.sa_iterations,
                summary.nr_iterations,
                summary.elapsed_seconds
            );
            if !summary.message.is_empty() {
                println!("{}", summary.message);
            }
            Ok(code)
        }
        Command::Verify { run, trajectory } => {
            let (report, code) = cmd_verify(&run, trajectory.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(code)
        }
        Command::Export { run, format, out } => {
            cmd_export(&run, format, out.as_deref().unwrap_or(&run))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE as u8)
        }
    }
}
