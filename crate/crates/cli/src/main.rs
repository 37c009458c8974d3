use clap::Parser;

use dpsqkd_cli::{execute, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(err) = execute(&cli) {
        log::debug!("{err:?}");
        eprintln!("dpsqkd: {err}");
        std::process::exit(err.exit_code());
    }
}
