pub mod artifacts;
pub mod commands;
pub mod config;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use config::{threads_from_env, Overrides, RunConfig, Variant};

#[derive(Debug, Parser)]
#[command(name = "fairmatch", version, about = "Gender-debiased resume/vacancy representations and salary matching")]
pub struct Cli {
    /// TOML configuration; flags take precedence over its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Single-threaded, bitwise-reproducible training.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[arg(long, global = true, value_enum)]
    pub variant: Option<Variant>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Independent debiasing runs.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// JSONL corpus to use instead of the synthetic one.
    #[arg(long, global = true, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus.
    Synth,
    /// Train word vectors and pool documents.
    Embed,
    /// Train the adversarial debiasing runs.
    Debias,
    /// Industry classification parity report and gender probe.
    Eval,
    /// Nearest-vacancy matching and the salary comparison.
    Match,
    /// Every stage for the selected variants.
    Pipeline,
    /// Re-hash the artifacts in the output directory against their manifests.
    Verify,
}

impl Cli {
    pub fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let o = Overrides {
            seed: self.seed,
            deterministic: self.deterministic.then_some(true),
            variant: self.variant,
            out: self.out.clone(),
            runs: self.runs,
            corpus: self.corpus.clone(),
            threads: threads_from_env()?,
        };
        base.resolve(&o)
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve()?;
    match cli.command {
        Command::Synth => commands::cmd_synth(&cfg),
        Command::Embed => commands::cmd_embed(&cfg),
        Command::Debias => commands::cmd_debias(&cfg),
        Command::Eval => commands::cmd_eval(&cfg).map(|t| print!("{t}")),
        Command::Match => commands::cmd_match(&cfg).map(|t| print!("{t}")),
        Command::Pipeline => commands::cmd_pipeline(&cfg).map(|s| print!("{}\n{}", s.parity_table, s.salary_table)),
        Command::Verify => commands::cmd_verify(&cfg)
            .map(|v| println!("ok: {} manifests, {} artifacts", v.manifests, v.artifacts)),
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 success, 1 configuration or usage error, 2 data or I/O error, 3
/// numeric failure.
pub fn main_with_args<I, T>(args: I) -> i32
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
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            e.exit_code()
        }
    }
}

fn report(e: &Error) {
    eprintln!("error: {e}");
}
