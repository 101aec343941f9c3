//! Pipeline commands behind the `flavorgraph` binary.

pub mod commands;
pub mod layout;

use std::path::PathBuf;

use anyhow::{anyhow, Context as _, Result};
use clap::{Parser, Subcommand};
use flavorgraph_core::config::RunConfig;

pub use commands::{Context, ModelChoice};
pub use layout::Layout;

#[derive(Debug, Parser)]
#[command(name = "flavorgraph", version, about = "Graph-based molecule generation with reinforcement fine-tuning")]
pub struct Cli {
    /// key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives bit-identical reruns.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the configured work directory.
    #[arg(long, global = true)]
    pub work_dir: Option<PathBuf>,
    /// Overrides one configuration key, e.g. `--set epochs=100`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a corpus and write shards, vocabulary and scoring tables.
    Preprocess {
        /// SMILES[TAB]descriptors file; defaults to the configured corpus.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Pretrain on the preprocessed corpus.
    Pretrain,
    /// Fine-tune the reference model against the score.
    Finetune,
    /// Sample molecules from a checkpoint.
    Generate {
        /// `agent`, `reference` or a checkpoint path.
        #[arg(long, default_value = "agent")]
        model: ModelChoice,
        /// Defaults to n_samples.
        #[arg(long, short)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a samples CSV or a SMILES list.
    Score {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generation statistics and UC-JSD of a checkpoint.
    Eval {
        #[arg(long, default_value = "agent")]
        model: ModelChoice,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SA and NP histograms of labeled score files.
    Report {
        /// `LABEL=scores.csv`; without any, compares reference and agent samples.
        #[arg(long = "input", value_name = "LABEL=PATH")]
        sets: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// preprocess, pretrain, finetune and report.
    Run,
    /// Print the effective configuration.
    Config,
}

fn split_pair(s: &str) -> Result<(&str, &str)> {
    s.split_once('=').ok_or_else(|| anyhow!("expected KEY=VALUE, got `{s}`"))
}

/// Configuration from the file, then `--set`, `--seed` and `--work-dir`.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = split_pair(o)?;
        if !cfg.set(k.trim(), v.trim()).map_err(|e| anyhow!("--set {o}: {e}"))? {
            anyhow::bail!("--set {o}: unknown key `{k}`");
        }
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = &cli.work_dir {
        cfg.work_dir = w.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command and returns the lines to print.
pub fn execute(cli: &Cli) -> Result<Vec<String>> {
    let cfg = resolve_config(cli)?;
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let mut ctx = Context::new(cfg);
    ctx.verbose = !cli.quiet;
    pool.install(|| dispatch(&ctx, &cli.command))
}

fn dispatch(ctx: &Context, command: &Command) -> Result<Vec<String>> {
    let lines = match command {
        Command::Preprocess { input } => {
            let s = commands::preprocess(ctx, input.as_deref())?;
            vec![format!(
                "{} molecules ({} train, {} valid, {} test), {} rejects, {} duplicates, {} shards in {}",
                s.molecules,
                s.per_split[0],
                s.per_split[1],
                s.per_split[2],
                s.rejects,
                s.duplicates,
                s.shards,
                ctx.layout.corpus_dir().display()
            )]
        }
        Command::Pretrain => {
            let s = commands::pretrain(ctx)?;
            vec![format!(
                "pretrained {} epochs, final loss {:.4}; reference is epoch {} at {}",
                s.epochs,
                s.final_loss,
                s.reference_epoch,
                ctx.layout.reference().display()
            )]
        }
        Command::Finetune => {
            let s = commands::finetune(ctx)?;
            vec![format!(
                "fine-tuned epochs {}..={}; best epoch {} (mean score {:.4}) at {}",
                s.first_epoch,
                s.last_epoch,
                s.best_epoch,
                s.best_mean_score,
                ctx.layout.agent().display()
            )]
        }
        Command::Generate { model, n, out } => {
            let s = commands::generate(ctx, model, *n, out.as_deref())?;
            vec![format!("{} molecules, {} valid, {} unique -> {}", s.n, s.valid, s.unique, s.path.display())]
        }
        Command::Score { input, out } => {
            let s = commands::score(ctx, input.as_deref(), out.as_deref())?;
            vec![format!(
                "{} rows, {} zeroed, mean final score {:.4} -> {}",
                s.rows,
                s.zeroed,
                s.mean_final_score,
                s.path.display()
            )]
        }
        Command::Eval { model, out } => {
            let row = commands::eval(ctx, model, out.as_deref())?;
            vec![flavorgraph_core::eval::RUN_LOG_HEADER.to_string(), row.to_csv()]
        }
        Command::Report { sets, out } => {
            let sets = sets
                .iter()
                .map(|s| split_pair(s).map(|(l, p)| (l.to_string(), PathBuf::from(p))))
                .collect::<Result<Vec<_>>>()?;
            let s = commands::report(ctx, &sets, out.as_deref())?;
            report_lines(&s)
        }
        Command::Run => {
            let s = commands::run(ctx)?;
            let mut lines = vec![format!(
                "reference epoch {}, best agent epoch {} (mean score {:.4})",
                s.pretrain.reference_epoch, s.finetune.best_epoch, s.finetune.best_mean_score
            )];
            lines.extend(report_lines(&s.report));
            lines
        }
        Command::Config => ctx.cfg.to_text().lines().map(str::to_string).collect(),
    };
    Ok(lines)
}

fn report_lines(s: &commands::ReportSummary) -> Vec<String> {
    let mut lines: Vec<String> = s
        .histograms
        .iter()
        .map(|h| {
            let (lo, hi) = h.kind.optimal_band();
            format!(
                "{} {}: {:.2}% of {} in [{lo}, {hi}]",
                h.kind.name(),
                h.label,
                h.optimal_percent,
                h.total
            )
        })
        .collect();
    lines.push(format!("histograms -> {}", s.path.display()));
    lines
}
