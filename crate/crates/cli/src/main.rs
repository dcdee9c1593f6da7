use clap::Parser;

fn main() {
    let cli = hom_cli::Cli::parse();
    if let Err(e) = hom_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.kind.exit_code());
    }
}
