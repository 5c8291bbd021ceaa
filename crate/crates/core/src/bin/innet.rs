use clap::Parser;

fn main() {
    let cli = innet::cli::Cli::parse();
    if let Err(e) = innet::cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
