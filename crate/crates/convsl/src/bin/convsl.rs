//! Command-line front end: parses flags, builds the thread pool, and
//! dispatches to the library command implementations.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use convsl::cli::{
    cmd_forward, cmd_invert, cmd_recover_v, cmd_roundtrip, cmd_stability, exit_code, Overrides,
};

#[derive(Parser)]
#[command(name = "convsl", about = "Forward and inverse spectral problems for \
the Sturm-Liouville operator with a convolution perturbation", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Problem file (line-oriented key=value text)
    #[arg(long, global = true)]
    problem: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the grid panel count
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Override the eigenvalue count
    #[arg(long = "K", global = true)]
    k: Option<usize>,
    /// Override the cosine-series truncation
    #[arg(long = "Kv", global = true)]
    kv: Option<usize>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the sweep seed
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the first K eigenvalues of (q, M)
    Forward,
    /// Recover the characteristic-function kernel v from a spectrum
    RecoverV,
    /// Reconstruct the convolution kernel M from a spectrum and q
    Invert,
    /// Forward solve, invert, and forward again with an error summary
    Roundtrip,
    /// Seeded perturbation sweep measuring stability ratios
    Stability,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(t) = args.threads {
        if t == 0 || rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            eprintln!("error: invalid --threads value");
            return ExitCode::from(2);
        }
    }
    let Some(problem) = args.problem.as_deref() else {
        eprintln!("error: --problem <path> is required");
        return ExitCode::from(2);
    };
    let Some(out) = args.out.as_deref() else {
        eprintln!("error: --out <dir> is required");
        return ExitCode::from(2);
    };
    let ov = Overrides {
        grid: args.grid,
        k: args.k,
        kv: args.kv,
        seed: args.seed,
    };
    let result = match args.command {
        Command::Forward => cmd_forward(problem, out, &ov),
        Command::RecoverV => cmd_recover_v(problem, out, &ov),
        Command::Invert => cmd_invert(problem, out, &ov),
        Command::Roundtrip => cmd_roundtrip(problem, out, &ov),
        Command::Stability => cmd_stability(problem, out, &ov),
    };
    match result {
        Ok(bundle) => {
            for f in &bundle.files {
                println!("wrote {}", bundle.out_dir.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
