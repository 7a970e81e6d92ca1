use clap::Parser;

fn main() {
    std::process::exit(homfield::cli::main_with(homfield::cli::Cli::parse()));
}
