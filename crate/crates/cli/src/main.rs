use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mfpmp", version, about = "Finite-N Pontryagin experiments for mean-field optimal control")]
struct Cli {
    /// Write artifacts here instead of the configured directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Worker threads for the data-parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Repeat for more detail (info, debug, trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Print the problem catalog with parameter documentation.
    ListProblems,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(threads) = cli.threads {
        #[cfg(feature = "parallel")]
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::FAILURE;
        }
        #[cfg(not(feature = "parallel"))]
        log::warn!("--threads {threads} ignored: built without the `parallel` feature");
    }

    match cli.command {
        Command::ListProblems => {
            print!("{}", mfpmp_cli::list_problems());
            ExitCode::SUCCESS
        }
        Command::Run { config } => match mfpmp_cli::run(&config, cli.output_dir.as_deref()) {
            Ok(summary) => {
                println!("wrote {} to {}", summary.files.join(", "), summary.output_dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
