use std::process::ExitCode;

use clap::Parser;
use mvhuman::cli::{run, Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            match &e {
                CliError::Verification(report) => print!("{report}"),
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
