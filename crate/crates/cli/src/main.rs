use std::process::ExitCode;

use bgvlab_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.output);
            if outcome.alarms.is_empty() {
                ExitCode::SUCCESS
            } else {
                let k = outcome.alarms.len();
                eprintln!("{k} alarm{} raised", if k == 1 { "" } else { "s" });
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
