use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(hpa_core::cli::run(std::env::args()) as u8)
}
