use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use steklov_cli::{run, Cli, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("{}", err.to_json());
            let _ = e.print();
            return ExitCode::from(err.exit_code());
        }
    };
    match run(&cli) {
        Ok(stdout) => {
            let mut lock = std::io::stdout().lock();
            if lock.write_all(stdout.as_bytes()).and_then(|_| lock.flush()).is_err() {
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
