use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = sealedbid_cli::Cli::parse();
    match sealedbid_cli::run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
