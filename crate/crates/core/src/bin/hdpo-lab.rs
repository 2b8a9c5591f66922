use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hdpo_lab::runner::{error_record, exit_code, run, Overrides};

#[derive(Parser)]
#[command(version, about = "Run D_alpha fitting, tabular H-DPO and diversity-metric experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 picks one per core.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", serde_json::json!({ "error": "config", "exit_code": 2, "message": msg.trim() }));
            return ExitCode::from(2);
        }
    };
    let Command::Run {
        config,
        output_dir,
        seed,
        threads,
    } = cli.command;
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("{}", serde_json::json!({ "error": "config", "exit_code": 2, "message": e.to_string() }));
            return ExitCode::from(2);
        }
    }
    match run(&config, &Overrides { output_dir, seed }) {
        Ok(manifest) => {
            for f in &manifest.files {
                println!("{}  {}", f.sha256, f.path);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
