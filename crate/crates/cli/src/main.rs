use std::process::ExitCode;

fn main() -> ExitCode {
    match mgrpo_lab::cli::run(std::env::args().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(&e)
        }
    }
}
