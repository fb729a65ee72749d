use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use subscope::cli::{run, Cli};
use subscope::error::{ErrorBody, ErrorDetail};
use subscope::to_json;

fn fail(code: &str, message: String, exit: u8) -> ExitCode {
    let body = ErrorBody {
        error: ErrorDetail {
            code: code.to_string(),
            message,
        },
    };
    let _ = std::io::stderr().write_all(&to_json(&body));
    ExitCode::from(exit)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end().to_string(), 2),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.code(), e.to_string(), 1),
    }
}
