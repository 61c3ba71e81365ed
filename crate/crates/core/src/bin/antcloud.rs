use clap::Parser;

fn main() {
    let cli = antcloud::cli::Cli::parse();
    std::process::exit(antcloud::cli::run(cli));
}
