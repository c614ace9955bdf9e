use std::io::Write;

use clap::Parser;

use kelly_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    // Output may go to a closed pipe (`| head`); that is not an error.
    let mut out = std::io::stdout().lock();
    match run(cli) {
        Ok(summary) => {
            for m in &summary.messages {
                let _ = writeln!(out, "{m}");
            }
            for p in &summary.written {
                let _ = writeln!(out, "wrote {}", p.display());
            }
            let _ = writeln!(out, "manifest {}", summary.manifest.display());
            if let Some(e) = &summary.failure {
                eprintln!("error: {e}");
            }
            std::process::exit(summary.exit_code());
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
