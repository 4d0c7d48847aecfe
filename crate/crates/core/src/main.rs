use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(r2n2::cli::cli_main(std::env::args_os()) as u8)
}
