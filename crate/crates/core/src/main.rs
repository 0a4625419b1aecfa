use std::process::ExitCode;

fn main() -> ExitCode {
    salience::cli::main_with_args(std::env::args_os())
}
