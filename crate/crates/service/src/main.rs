use std::io::{self, BufReader};

use clap::Parser;
use repograph_service::cli::{execute, Cli};
use tracing_subscriber::EnvFilter;

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)))
        .with_writer(io::stderr)
        .init();
    let code = execute(cli, &mut io::stdout(), &mut io::stderr(), &mut BufReader::new(io::stdin()));
    std::process::exit(code);
}
