use clap::Parser;

fn main() {
    let args = exosim_cli::Args::parse();
    std::process::exit(exosim_cli::execute(&args));
}
