use clap::Parser;

fn main() {
    let cli = corrfilter_cli::cli::Cli::parse();
    if let Err(e) = corrfilter_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
