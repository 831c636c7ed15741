use clap::Parser;

fn main() {
    let cli = trixlab_cli::Cli::parse();
    if let Err(e) = trixlab_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
