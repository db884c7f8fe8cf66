use std::process::ExitCode;

use clap::Parser;
use cuelab_cli::{run, Cli, Outcome};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            match outcome {
                Outcome::Manifest { records } => eprintln!("wrote {records} records"),
                Outcome::Metrics { rows } => eprintln!("wrote {rows} metric rows"),
                Outcome::Spectra { files } => eprintln!("wrote {files} spectra"),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
