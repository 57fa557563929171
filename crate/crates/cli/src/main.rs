use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cocyc_cli::commands::{run, write_tables, Command, Exit, Overrides};
use cocyc_cli::config::load_config;

#[derive(Parser)]
#[command(name = "cocyc", version, about = "Numerical experiments on 2x2 cocycles over subshifts of finite type")]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Depth of the conditional family (u-state commands).
    #[arg(long)]
    depth: Option<usize>,
    /// Starting projective grid, or the number of t-grid levels for `sweep`.
    #[arg(long)]
    grid_points: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            eprintln!();
            return ExitCode::from(Exit::Config as u8);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        pool = pool.num_threads(w);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start workers: {e}");
            return ExitCode::from(Exit::Config as u8);
        }
    };
    let ov = Overrides { seed: args.seed, depth: args.depth, grid_points: args.grid_points };
    let out = match pool.install(|| run(args.command, &cfg, &ov)) {
        Ok(o) => o,
        Err((code, msg)) => {
            eprintln!("{msg}");
            return ExitCode::from(code as u8);
        }
    };
    match write_tables(&out, &args.out, &cfg.hash) {
        Ok(paths) => paths.iter().for_each(|p| println!("{}", p.display())),
        Err(e) => {
            eprintln!("cannot write output: {e}");
            return ExitCode::from(Exit::Invariant as u8);
        }
    }
    for n in &out.notes {
        eprintln!("{n}");
    }
    ExitCode::from(out.exit as u8)
}
