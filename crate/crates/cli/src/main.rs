use std::process::ExitCode;

fn main() -> ExitCode {
    match bnp_cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bnp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
