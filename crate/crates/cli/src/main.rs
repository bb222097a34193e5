use clap::Parser;

fn main() {
    let cli = bloch_cli::Cli::parse();
    std::process::exit(bloch_cli::main_with(cli));
}
