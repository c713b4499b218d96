use clap::Parser;
use inr_reco::cli::{run, Cli};

fn main() {
    // clap exits with code 2 on its own parse failures.
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
