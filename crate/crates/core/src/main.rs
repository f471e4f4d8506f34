fn main() -> std::process::ExitCode {
    uarch_probe::cli::main()
}
