use std::process::ExitCode;

use clap::Parser;
use inavrl_cli::{run, Cli};

fn main() -> ExitCode {
    // clap reports malformed arguments itself with exit status 2.
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("indoor-nav-rl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
