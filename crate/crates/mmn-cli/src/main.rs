use clap::Parser;
use mmn_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
