use clap::Parser;
use superman::cli::{run, Cli};

fn main() {
    match run(Cli::parse()) {
        Ok(manifest) => {
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}: wrote {} artifacts", manifest.command, manifest.artifacts.len() + 1);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
