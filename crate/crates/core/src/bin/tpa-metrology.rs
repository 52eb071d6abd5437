fn main() -> std::process::ExitCode {
    tpa_metrology::cli::main()
}
