use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(kfsp_core::cli::run(std::env::args_os()) as u8)
}
