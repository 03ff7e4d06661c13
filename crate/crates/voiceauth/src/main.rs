use clap::Parser;

fn main() {
    let cli = voiceauth::cli::commands::Cli::parse();
    if let Err(e) = voiceauth::cli::commands::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
