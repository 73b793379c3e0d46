use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use impulse_volterra::problems::{builtin, BUILTIN_NAMES};
use impulse_volterra_cli::run::EXIT_OK;
use impulse_volterra_cli::{execute, load_config};

#[derive(Parser)]
#[command(
    name = "impulse-volterra",
    version,
    about = "Solve, differentiate and optimize impulsive Volterra problems"
)]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Run the command named in a configuration file.
    Run {
        config: PathBuf,
        /// Write artifacts here instead of the configured directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a configuration without running it.
    Validate { config: PathBuf },
    /// List the built-in problems with their parameters and starting points.
    Problems,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.action {
        Action::Run { config, out } => match load_config(&config) {
            Ok(mut c) => {
                if let Some(out) = out {
                    c.output_dir = out;
                }
                let (code, lines) = execute(&c);
                for line in lines {
                    if code == EXIT_OK {
                        println!("{line}");
                    } else {
                        eprintln!("{line}");
                    }
                }
                code
            }
            Err(e) => report(e),
        },
        Action::Validate { config } => match load_config(&config) {
            Ok(c) => {
                println!("ok: {} on {}", c.command.name(), c.problem);
                EXIT_OK
            }
            Err(e) => report(e),
        },
        Action::Problems => {
            for name in BUILTIN_NAMES {
                let b = builtin(name, &Default::default()).expect("built-in problems construct");
                let params: Vec<String> = b
                    .parameters
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                println!(
                    "{name}: tau = {:?}, levels = {:?}, parameters [{}]",
                    b.schedule.times(),
                    b.controls.flatten(),
                    params.join(", ")
                );
            }
            EXIT_OK
        }
    };
    ExitCode::from(code as u8)
}

fn report(e: impulse_volterra_cli::config::ConfigError) -> i32 {
    let error = impulse_volterra_cli::RunError::from(e);
    eprintln!("error: {error}");
    error.exit_code()
}
