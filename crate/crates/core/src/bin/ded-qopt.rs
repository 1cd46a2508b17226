fn main() -> std::process::ExitCode {
    ded_qopt::cli::main()
}
