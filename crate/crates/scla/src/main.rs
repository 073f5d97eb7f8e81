use std::process::ExitCode;

fn main() -> ExitCode {
    scla::cli::run()
}
