//! Command-line surface. Exit codes: 0 success, 1 usage, 2 data, 3 upstream.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use polistance_core::evaluation::Protocol;

use crate::annotate::{AnnotationSummary, ChatClient, HttpChatClient};
use crate::error::{Error, Result};
use crate::experiments::{self, Experiment, Outcome, Target};

#[derive(Debug, Parser)]
#[command(name = "polistance", version, about = "Stance detection with VAD-disentangled latent factors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite an existing output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset and compare it with the published split counts.
    Prepare {
        /// Write a synthetic demo project instead of reading a config.
        #[arg(long)]
        toy: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        force: bool,
    },
    /// Label unlabeled examples with sentiment through a chat endpoint.
    Annotate {
        #[command(flatten)]
        common: Common,
    },
    /// Train in-target models and score them on the test split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// `ad-hoc` or `merged`.
        #[arg(long, value_parser = parse_protocol)]
        protocol: Option<Protocol>,
    },
    /// Score checkpoints written by `train`.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Output directory of a `train` run.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_protocol)]
        protocol: Option<Protocol>,
    },
    /// Train on source targets, test on a held-out target. Without
    /// target flags every standard pair is run.
    CrossTarget {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated names or initials.
        #[arg(long, value_delimiter = ',')]
        source_targets: Option<Vec<String>>,
        #[arg(long)]
        dest_target: Option<String>,
    },
    /// Full model against each module removed, with one shared seed.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Repeat training over the fixed seed list and report mean and std.
    SweepSeeds {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, value_parser = parse_protocol)]
        protocol: Option<Protocol>,
    },
    /// Score the zero-shot chat baseline on the test split.
    ZeroShotBaseline {
        #[command(flatten)]
        common: Common,
    },
    /// Stance-by-sentiment counts per target as CSV and SVG.
    PlotSentiment {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_protocol(s: &str) -> std::result::Result<Protocol, String> {
    Protocol::parse(s).ok_or_else(|| format!("unknown protocol {s:?}; use ad-hoc or merged"))
}

fn target(common: &Common) -> Target {
    Target { out: common.out.clone(), force: common.force }
}

fn load(config: &Path) -> Result<Experiment> {
    Experiment::load(config)
}

fn report(outcome: &Outcome, out: &Path) {
    match outcome {
        Outcome::Done(m) => println!("wrote {} files to {} (run {})", m.outputs.len(), out.display(), &m.key[..12]),
        Outcome::Identical(m) => {
            println!(
                "{} already holds this run (key {}); nothing written, use --force to rerun",
                out.display(),
                &m.key[..12]
            )
        }
    }
}

/// Prints the summary; every request failing is an upstream error.
fn check_upstream(s: &AnnotationSummary) -> Result<()> {
    println!(
        "{} items: {} parsed, {} unparsed, {} failed ({} cache hits)",
        s.total, s.parsed, s.unparsed, s.failed, s.cache_hits
    );
    if s.total > 0 && s.failed == s.total {
        return Err(Error::Upstream(format!("all {} requests failed", s.failed)));
    }
    Ok(())
}

/// Runs one parsed command. `client` overrides the HTTP client for the
/// chat-backed subcommands.
pub fn execute(cli: Cli, client: Option<&dyn ChatClient>) -> Result<Outcome> {
    let http;
    let (outcome, out) = match cli.command {
        Command::Prepare { toy, config, out, seed, force } => {
            let t = Target { out: out.clone(), force };
            let outcome = match (toy, config) {
                (true, _) => experiments::write_toy_project(&t, seed)?,
                (false, Some(c)) => experiments::prepare(&load(&c)?, &t)?,
                (false, None) => return Err(Error::Usage("prepare needs --config or --toy".into())),
            };
            (outcome, out)
        }
        Command::Annotate { common } => {
            let exp = load(&common.config)?;
            http = HttpChatClient::new(&exp.config.annotation.client);
            let c: &dyn ChatClient = client.unwrap_or(&http);
            let (outcome, summary) = experiments::annotate_corpus(&exp, &target(&common), c)?;
            if let Some(s) = &summary {
                check_upstream(s)?;
            }
            (outcome, common.out)
        }
        Command::Train { common, seed, protocol } => {
            let exp = load(&common.config)?;
            (experiments::train(&exp, &target(&common), seed, protocol)?, common.out)
        }
        Command::Evaluate { common, checkpoint, protocol } => {
            let exp = load(&common.config)?;
            (experiments::evaluate(&exp, &target(&common), &checkpoint, protocol)?, common.out)
        }
        Command::CrossTarget { common, seed, source_targets, dest_target } => {
            let exp = load(&common.config)?;
            let outcome = experiments::cross_target(
                &exp,
                &target(&common),
                seed,
                source_targets.as_deref(),
                dest_target.as_deref(),
            )?;
            (outcome, common.out)
        }
        Command::Ablate { common, seed } => {
            let exp = load(&common.config)?;
            let (outcome, table) = experiments::ablate(&exp, &target(&common), seed)?;
            for row in table.iter().flatten() {
                println!("{:<14} F_avg {:>6.2}  delta {:+.2}", row.label, row.report.f_avg, row.delta);
            }
            (outcome, common.out)
        }
        Command::SweepSeeds { common, k, protocol } => {
            let exp = load(&common.config)?;
            (experiments::sweep_seeds(&exp, &target(&common), k, protocol)?, common.out)
        }
        Command::ZeroShotBaseline { common } => {
            let exp = load(&common.config)?;
            http = HttpChatClient::new(&exp.config.annotation.client);
            let c: &dyn ChatClient = client.unwrap_or(&http);
            let (outcome, result) = experiments::zero_shot_baseline(&exp, &target(&common), c)?;
            if let Some(r) = &result {
                println!("zero-shot F_avg {:.2} ({} unanswered)", r.report.f_avg, r.unanswered);
                check_upstream(&r.annotation)?;
            }
            (outcome, common.out)
        }
        Command::PlotSentiment { common } => {
            let exp = load(&common.config)?;
            (experiments::plot_sentiment(&exp, &target(&common))?, common.out)
        }
    };
    report(&outcome, &out);
    Ok(outcome)
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I, client: Option<&dyn ChatClient>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli, client) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
