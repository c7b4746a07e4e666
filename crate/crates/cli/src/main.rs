fn main() -> std::process::ExitCode {
    enwell_cli::run(std::env::args_os())
}
