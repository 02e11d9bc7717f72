fn main() -> std::process::ExitCode {
    fedpoint_cli::main_with_args(std::env::args_os())
}
