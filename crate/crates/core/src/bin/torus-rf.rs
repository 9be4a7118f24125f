use std::process::ExitCode;

use clap::Parser;
use torus_rf::cli::{run_experiment, Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => args.into_settings().and_then(|settings| {
            let outputs = run_experiment(&settings)?;
            println!("manifest: {}", outputs.manifest.display());
            println!("aggregate: {}", outputs.aggregate.display());
            for f in &outputs.figures {
                println!("figure data: {}", f.display());
            }
            if let Some(t) = &outputs.traces {
                println!("traces: {}", t.hops.display());
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
