use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use hae::cli::{run, Cli};

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help/--version
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = match run(cli, &mut out) {
        Ok(outcome) => outcome.code(),
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            1
        }
    };
    ExitCode::from(code)
}
