use std::process::ExitCode;

use clap::Parser;
use saeb_cli::{run, seed_from_env, Cli, Outcome};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = seed_from_env().and_then(|seed| run(cli, seed));
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
