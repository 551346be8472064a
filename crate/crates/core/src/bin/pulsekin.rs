use std::process::ExitCode;

fn main() -> ExitCode {
    pulsekin::cli::main_with_args(std::env::args_os())
}
