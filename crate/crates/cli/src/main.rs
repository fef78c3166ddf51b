use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use dentvox::commands::{run, Cli};
use dentvox::error::CliError;

fn main() -> ExitCode {
    let json = std::env::args().any(|a| a == "--json");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Usage(e.to_string()), json),
    };
    match run(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("JSON values serialize"));
            } else {
                println!("{}", out.text);
            }
            ExitCode::from(out.code as u8)
        }
        Err(e) => fail(&e, cli.json),
    }
}

fn fail(e: &CliError, json: bool) -> ExitCode {
    if json {
        eprintln!("{}", serde_json::to_string_pretty(&e.report()).expect("error report serializes"));
    } else {
        eprintln!("error: {e}");
    }
    ExitCode::from(e.exit_code() as u8)
}
