mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bounds(a) => commands::bounds(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Figure(a) => commands::figure(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(text) => {
            if !text.is_empty() {
                println!("{}", text.trim_end());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dispest: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
