use clap::Parser;

fn main() {
    env_logger::init();
    let cli = drc_cli::Cli::parse();
    std::process::exit(drc_cli::run(cli));
}
