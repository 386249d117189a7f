use std::process::ExitCode;

use lssem::cli::{parse_env_args, run};
use lssem::Error;

fn main() -> ExitCode {
    let config = match parse_env_args() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&config, &mut std::io::stdout().lock()) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e @ Error::Usage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
