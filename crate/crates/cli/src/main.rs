use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(popsan_cli::run(std::env::args_os()))
}
