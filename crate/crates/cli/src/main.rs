use std::process::ExitCode;

use clap::Parser;
use hyperlaw_cli::{run, Cli, EXIT_ERROR};

fn main() -> ExitCode {
    // Usage errors exit 1 so that 2 keeps meaning a physics violation.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    ExitCode::from(run(cli))
}
