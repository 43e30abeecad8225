use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(welfarium::cli::run(std::env::args_os()))
}
