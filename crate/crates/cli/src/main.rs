use clap::Parser;

fn main() {
    let cli = carotid_cli::Cli::parse();
    if let Err(e) = carotid_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
