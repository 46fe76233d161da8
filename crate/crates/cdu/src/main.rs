use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = cdu::cli::Cli::parse();
    match cdu::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
