fn main() -> std::process::ExitCode {
    blockgt::cli::main(std::env::args().collect())
}
