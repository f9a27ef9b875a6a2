fn main() -> std::process::ExitCode {
    envforge_service::cli::main()
}
