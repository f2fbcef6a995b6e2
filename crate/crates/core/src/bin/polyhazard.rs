use clap::Parser;
use polyhazard::cli::{exit_code, run_command, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run_command(&cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
