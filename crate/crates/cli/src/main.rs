use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = txnet_cli::Cli::parse();
    match txnet_cli::execute(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
