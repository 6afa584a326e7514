use std::process::ExitCode;

fn main() -> ExitCode {
    match fedrec_cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(fedrec_cli::CliError::Usage(e)) => {
            let _ = e.print();
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
