use std::process::ExitCode;

fn main() -> ExitCode {
    homobound::cli::run()
}
