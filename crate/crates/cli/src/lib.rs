//! Command-line front end for the packing-order toolkit.

// stdout writes that tolerate a closed pipe
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

pub mod args;
pub mod bench;
pub mod commands;
pub mod config;
pub mod error;

use std::fmt;

use clap::Parser;

pub use args::Cli;
pub use error::{CliError, EXIT_CODES};

/// Stderr logger gated by `-v` / `-q`.
#[derive(Debug, Clone, Copy)]
pub struct Log {
    level: i8,
}

impl Log {
    pub fn new(verbose: u8, quiet: bool) -> Self {
        Self {
            level: if quiet { -1 } else { verbose.min(2) as i8 },
        }
    }

    pub fn warn(&self, msg: fmt::Arguments<'_>) {
        if self.level >= 0 {
            eprintln!("warning: {msg}");
        }
    }

    pub fn info(&self, msg: fmt::Arguments<'_>) {
        if self.level >= 1 {
            eprintln!("{msg}");
        }
    }

    pub fn debug(&self, msg: fmt::Arguments<'_>) {
        if self.level >= 2 {
            eprintln!("{msg}");
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    use args::Command;

    let log = Log::new(cli.verbose, cli.quiet);
    let config = config::FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::BuildModel(a) => commands::build_model(a, &config, &log),
        Command::Score(a) => commands::score(a, &config),
        Command::Plan(a) => commands::plan_cmd(a, &config, &log),
        Command::Evaluate(a) => commands::evaluate(a, &config, &log).map(|_| ()),
        Command::Replay(a) => commands::replay(a, &config, &log),
        Command::Bench(a) => bench::bench(a, &config, &log).map(|_| ()),
        Command::Fingerprint(a) => commands::fingerprint_cmd(a, &config),
    }
}

/// Parses `std::env::args`, runs the command and returns the process exit code.
pub fn main_exit_code() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error[{}]: {err}", err.category());
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            err.exit_code()
        }
    }
}
