use clap::Parser;

fn main() {
    let cli = osrk::cli::Cli::parse();
    if let Err(e) = osrk::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
