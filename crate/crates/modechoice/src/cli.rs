//! Argument parsing and exit codes.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, Failure, Outcome, Overrides, Run};

#[derive(Debug, Parser)]
#[command(name = "modechoice", version, about = "Logit and machine-learning mode choice models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every configured model on the full data.
    Fit(Common),
    /// Paired k-fold cross-validation.
    Crossval(Common),
    /// Importance, partial dependence and sensitivity from saved models.
    Interpret {
        #[command(flatten)]
        common: Common,
        /// Directory of model files (default `<out>/models`).
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Simulate a dataset from a generator config.
    Synth(Common),
    /// Cross-validation, fitting and interpretation in one run.
    Compare(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Fit(c) | Command::Crossval(c) | Command::Synth(c) | Command::Compare(c) => c,
            Command::Interpret { common, .. } => common,
        }
    }
}

fn set_jobs(jobs: Option<usize>) -> Outcome<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::Validation(anyhow::anyhow!("--jobs must be at least 1")));
        }
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn execute(cmd: &Command) -> Outcome<()> {
    let c = cmd.common();
    set_jobs(c.jobs)?;
    let ov = Overrides {
        seed: c.seed,
        out: c.out.clone(),
        models: match cmd {
            Command::Interpret { models, .. } => models.clone(),
            _ => None,
        },
    };
    match cmd {
        Command::Synth(_) => commands::synth(&c.config, &ov),
        Command::Fit(_) => commands::fit(&Run::load(&c.config, &ov)?).map(|_| ()),
        Command::Crossval(_) => commands::crossval(&Run::load(&c.config, &ov)?),
        Command::Interpret { .. } => {
            let run = Run::load(&c.config, &ov)?;
            let dir = ov.models.clone().unwrap_or_else(|| run.sink.path("models"));
            commands::interpret(&run, &dir)
        }
        Command::Compare(_) => commands::compare(&Run::load(&c.config, &ov)?),
    }
}

/// Parses `args` and runs; returns the process exit status.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run_with(std::env::args_os())
}
