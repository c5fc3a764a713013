use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = opplab_cli::app::Cli::parse();
    ExitCode::from(opplab_cli::app::execute(cli))
}
