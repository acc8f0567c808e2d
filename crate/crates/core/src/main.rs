use std::process::ExitCode;

fn main() -> ExitCode {
    receiver_sim::cli::main_with_args(std::env::args_os())
}
