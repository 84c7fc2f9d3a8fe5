use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracergo_cli::{list_experiments, load_config, plan_summary, run_experiment, write_artifacts, ConfigError};

#[derive(Parser)]
#[command(name = "fracergo", version, about = "Coupling experiments for SDEs driven by moving-average noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON configuration.
    Run {
        config: PathBuf,
        /// Validate the configuration and print the replica/seed layout.
        #[arg(long)]
        dry_run: bool,
        /// Worker threads (falls back to FRACERGO_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the available experiments.
    List,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return if n == 0 { Err("--threads must be positive".into()) } else { Ok(Some(n)) };
    }
    match std::env::var("FRACERGO_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("FRACERGO_THREADS={v} is not a positive integer")),
        },
        Err(_) => Ok(None),
    }
}

fn report(value: serde_json::Value) {
    eprintln!("{}", serde_json::to_string_pretty(&value).expect("report serializes"));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for entry in list_experiments() {
                println!("{}", entry.line());
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, dry_run, threads } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    let path = match &e {
                        ConfigError::Schema { path, .. } => path.clone(),
                        ConfigError::Io { .. } => String::new(),
                    };
                    report(serde_json::json!({"status": "invalid-config", "path": path, "message": e.to_string()}));
                    return ExitCode::from(2);
                }
            };
            let threads = match thread_count(threads) {
                Ok(t) => t,
                Err(msg) => {
                    report(serde_json::json!({"status": "invalid-arguments", "message": msg}));
                    return ExitCode::from(2);
                }
            };
            if let Some(n) = threads {
                // only fails if a pool already exists, which cannot happen here
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            if dry_run {
                print!("{}", plan_summary(&cfg, rayon::current_num_threads()));
                return ExitCode::SUCCESS;
            }
            let outcome = match run_experiment(&cfg) {
                Ok(o) => o,
                Err(e) => {
                    report(e.report(&cfg));
                    return ExitCode::FAILURE;
                }
            };
            if let Err(e) = write_artifacts(&cfg, &outcome.artifacts) {
                report(e.report(&cfg));
                return ExitCode::FAILURE;
            }
            for a in &outcome.artifacts {
                println!("{}", cfg.output.join(&a.name).display());
            }
            println!("{}", cfg.output.join("manifest.json").display());
            match outcome.failure {
                Some(msg) => {
                    report(serde_json::json!({
                        "status": "check-failed",
                        "experiment": cfg.experiment.name(),
                        "message": msg,
                    }));
                    ExitCode::FAILURE
                }
                None => ExitCode::SUCCESS,
            }
        }
    }
}
