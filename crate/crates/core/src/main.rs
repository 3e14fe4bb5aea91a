use clap::Parser;

fn main() {
    let cli = lml_core::cli::Cli::parse();
    std::process::exit(lml_core::cli::main_with(cli));
}
