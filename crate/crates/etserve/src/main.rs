use std::process::ExitCode;

fn main() -> ExitCode {
    etserve::cli::dispatch()
}
