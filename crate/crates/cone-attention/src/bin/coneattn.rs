use clap::Parser;

fn main() {
    let cli = cone_attention::cli::Cli::parse();
    std::process::exit(cone_attention::cli::run(cli));
}
