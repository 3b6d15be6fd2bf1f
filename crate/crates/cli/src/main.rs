use clap::Parser;
use coda_cli::commands::{execute, Cli, USAGE};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    let code = match execute(cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            USAGE
        }
    };
    std::process::exit(code);
}
