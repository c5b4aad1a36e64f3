use std::process::ExitCode;

fn main() -> ExitCode {
    loadcast::cli::main()
}
