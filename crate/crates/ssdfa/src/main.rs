fn main() -> std::process::ExitCode {
    ssdfa::cli::main()
}
