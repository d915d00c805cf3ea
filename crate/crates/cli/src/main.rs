use clap::Parser;

fn main() {
    let cli = stallbound_cli::Cli::parse();
    if let Err(e) = stallbound_cli::run(cli) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
