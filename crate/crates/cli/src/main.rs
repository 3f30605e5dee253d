use clap::Parser;

fn main() {
    if let Err(e) = is2_cli::run(is2_cli::Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
