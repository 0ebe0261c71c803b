fn main() -> std::process::ExitCode {
    feast::cli::run()
}
