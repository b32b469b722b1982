use clap::Parser;

fn main() {
    let cli = netform_cli::Cli::parse();
    if let Err(e) = netform_cli::run(&cli) {
        eprintln!("netform: {e}");
        std::process::exit(e.exit_code());
    }
}
