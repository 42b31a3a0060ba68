fn main() -> std::process::ExitCode {
    gmtrack::cli::run(std::env::args_os())
}
