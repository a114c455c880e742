use std::process::ExitCode;

fn main() -> ExitCode {
    s2vt::cli::main_with_args(std::env::args_os())
}
