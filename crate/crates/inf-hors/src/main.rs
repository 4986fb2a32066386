use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(inf_hors::cli::run(std::env::args_os()))
}
