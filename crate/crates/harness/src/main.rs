use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lohe_harness::scenario::Format;
use lohe_harness::{run_to_disk, CommandKind, Overrides};

#[derive(Parser)]
#[command(name = "lohe-sync", version, about = "Schrödinger-Lohe synchronization runs, checks and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the wave functions and write diagnostics and a summary.
    Simulate(RunArgs),
    /// Integrate a correlation system (full, two or fg).
    Ode(RunArgs),
    /// Evaluate the two-oscillator closed form.
    Oracle(RunArgs),
    /// Run the PDE and check it against ODEs, closed forms and expected classes.
    Verify(RunArgs),
    /// Run the [sweep] grid and write one CSV row per run.
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Output root; defaults to $LOHE_SYNC_OUT, then ./runs.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "X")]
    dt: Option<f64>,
    #[arg(long = "t-end", value_name = "X")]
    t_end: Option<f64>,
    #[arg(long, value_parser = ["ndjson", "csv"])]
    format: Option<String>,
    /// Worker threads for sweeps.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Simulate(a) => (CommandKind::Simulate, a),
        Command::Ode(a) => (CommandKind::Ode, a),
        Command::Oracle(a) => (CommandKind::Oracle, a),
        Command::Verify(a) => (CommandKind::Verify, a),
        Command::Sweep(a) => (CommandKind::Sweep, a),
    };
    if let Some(threads) = args.threads {
        if threads == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let overrides = Overrides {
        seed: args.seed,
        dt: args.dt,
        t_end: args.t_end,
        format: args.format.as_deref().map(|f| f.parse::<Format>().expect("clap restricts values")),
    };
    match run_to_disk(kind, &args.scenario, &overrides, args.out.as_deref()) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err((dir, e)) => {
            if let Some(dir) = dir {
                println!("{}", dir.display());
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
