mod args;
mod commands;
mod error;
mod output;
mod settings;

use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn dispatch(cli: &Cli, out: &mut impl Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Regime(a) => commands::regime(a, out),
        Command::Simulate(a) => commands::simulate(a, out),
        Command::Ensemble(a) => commands::ensemble(a, out),
        Command::Sweep(a) => commands::sweep(a, out),
        Command::Ladder(a) => commands::ladder(a, out),
        Command::Analyze(a) => commands::analyze(a, out),
        Command::Validate(a) => commands::validate(a, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    let result = dispatch(&cli, &mut out);
    let flushed = out.flush();
    match result.and(flushed.map_err(CliError::from)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cullsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
