use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = dimabsa_cli::Cli::parse();
    match dimabsa_cli::run(cli) {
        Ok(outcome) => {
            for path in &outcome.outputs {
                log::info!("wrote {}", path.display());
            }
            if outcome.hard_errors == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
