mod commands;
mod config;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind as ClapKind;
use clap::Parser;

use commands::Failure;
use config::{load_file, Cli, Opts};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ClapKind::DisplayHelp | ClapKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&Failure::Config(e.to_string().trim_end().to_string())),
    };
    let flags = cli.command.opts().clone();
    let opts = match &cli.config {
        Some(path) => match load_file(path, cli.command.name()) {
            Ok(file) => flags.over(file),
            Err(e) => return fail(&Failure::Config(e.0)),
        },
        None => flags.over(Opts::default()),
    };
    match commands::run(&cli.command, &opts) {
        Ok(out) => {
            // a closed stdout must not turn a finished run into a failure
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{}", out.summary);
            for f in out.files {
                let _ = writeln!(stdout, "{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &Failure) -> ExitCode {
    let _ = writeln!(std::io::stderr(), "{}", e.to_json());
    ExitCode::from(e.exit_code())
}
