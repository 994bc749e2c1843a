fn main() -> std::process::ExitCode {
    holoquilt_service::cli::main()
}
