//! Configuration-driven front end for `bloch-core`: one TOML file per run,
//! CSV data plus a JSON summary per subcommand.

pub mod config;
pub mod output;
pub mod run;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "bloch", version, about = "Bloch bands, geometry, dynamics and pumps from a TOML config")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Action,
}

#[derive(Subcommand, Debug)]
pub enum Action {
    /// Run the pipeline named by `command` in the config.
    Run {
        config: PathBuf,
        /// Override a key, e.g. `--set numeric.cutoff=6.5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Shorthand for `--set butterfly.chern=true`.
        #[arg(long)]
        chern: bool,
    },
    /// Validate the config and print the resolved spec as JSON.
    Check {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn load(path: &PathBuf, set: &[String]) -> Result<config::RunSpec, run::RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| run::RunError::Io {
        path: path.clone(),
        source,
    })?;
    let text = config::apply_overrides(&text, set)?;
    Ok(config::parse_config(&text)?)
}

/// Runs the parsed command line and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let result = match &cli.command {
        Action::Run { config, set, chern } => {
            let mut set = set.clone();
            if *chern {
                set.push("butterfly.chern=true".into());
            }
            load(config, &set).and_then(|spec| run::run(&spec)).map(|(c, j)| {
                println!("wrote {} and {}", c.display(), j.display());
            })
        }
        Action::Check { config, set } => load(config, set).map(|spec| {
            println!("{}", serde_json::to_string_pretty(&spec).expect("spec serializes"));
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
