use std::process::ExitCode;

use clap::Parser;
use mspf_cli::{Cli, Status, BAND_FAILURE};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = mspf_cli::configure_threads().and_then(|_| mspf_cli::run(&cli));
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::BandsFailed) => ExitCode::from(BAND_FAILURE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
