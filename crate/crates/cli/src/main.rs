use clap::Parser;

fn main() {
    let cli = tsad_cli::Cli::parse();
    if let Err(e) = tsad_cli::run(cli) {
        std::process::exit(tsad_cli::report_error(&e));
    }
}
