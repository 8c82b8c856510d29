//! Command-line pipeline: generate or ingest a corpus, annotate, featurize, split, train,
//! evaluate, run the ablation grid, explain and report. Every stage writes its artifacts
//! and a manifest under the output directory.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use propdet_core::features::FeatureMode;
use propdet_core::splits::SplitKind;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, ErrorCategory, Result};
pub use pipeline::{Pipeline, StageReport, StageStatus};

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(propdet_core::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "propdet", version, about = "Propaganda detection pipeline with distribution-shift splits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (JSON). Defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Training seeds, comma separated.
    #[arg(long = "seeds", alias = "seed", global = true, value_delimiter = ',')]
    pub seeds: Vec<u64>,

    /// Feature mode(s): hybrid, hybrid-lite, text-only.
    #[arg(long = "mode", global = true, value_delimiter = ',')]
    pub modes: Vec<FeatureMode>,

    /// Split strategy(ies): random, sources, political, credibility.
    #[arg(long = "split", global = true, value_delimiter = ',')]
    pub splits: Vec<SplitKind>,

    /// Worker threads for grid cells.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Annotate with the bundled lexicons instead of the remote service.
    #[arg(long, global = true, conflicts_with = "endpoint")]
    pub offline: bool,

    /// Remote annotation service base URL (token from PROPDET_ANNOTATOR_TOKEN).
    #[arg(long, global = true)]
    pub endpoint: Option<String>,

    /// Decision threshold on the sigmoid score.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus and word vectors.
    SynthGen,
    /// Validate an external corpus and copy it into the output directory.
    Ingest,
    /// Annotate genre, topic and persuasion techniques (cached).
    Annotate,
    /// Build feature matrices for the configured modes.
    Featurize,
    /// Write and verify split assignments.
    Split,
    /// Train one model per split, mode and seed.
    Train,
    /// Score trained models on their test sets.
    Evaluate,
    /// Run the split x mode x seed grid and summarise it.
    Ablate,
    /// Grouped Shapley attributions per split.
    Explain,
    /// Results table and CSVs from a completed grid.
    Report,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seeds: self.seeds.clone(),
            modes: self.modes.clone(),
            splits: self.splits.clone(),
            workers: self.workers,
            offline: self.offline,
            endpoint: self.endpoint.clone(),
            threshold: self.threshold,
        }
    }

    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&self.overrides())?;
        Ok(cfg)
    }
}

fn describe(r: &StageReport) -> String {
    let tag = match r.status {
        StageStatus::Ran => "done",
        StageStatus::Skipped => "skipped",
    };
    format!("{} [{tag}]: {}", r.stage, r.message)
}

/// Runs one subcommand; returns the lines to print on stdout.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let pipeline = Pipeline::new(cli.resolve_config()?)?;
    let mut lines = Vec::new();
    match cli.command {
        Command::SynthGen => lines.push(describe(&pipeline.synth_gen()?)),
        Command::Ingest => lines.push(describe(&pipeline.ingest()?)),
        Command::Annotate => lines.push(describe(&pipeline.annotate()?)),
        Command::Featurize => lines.extend(pipeline.featurize()?.iter().map(describe)),
        Command::Split => lines.push(describe(&pipeline.split()?)),
        Command::Train => lines.push(describe(&pipeline.train()?)),
        Command::Evaluate => lines.push(describe(&pipeline.evaluate()?)),
        Command::Ablate => {
            let (r, summary) = pipeline.ablate()?;
            lines.push(describe(&r));
            if pipeline.cfg.report.print_table {
                lines.push(summary.render_table());
            }
        }
        Command::Explain => {
            let (r, _) = pipeline.explain()?;
            lines.push(describe(&r));
        }
        Command::Report => {
            let (r, text) = pipeline.report_stage()?;
            lines.push(describe(&r));
            if pipeline.cfg.report.print_table {
                lines.push(text);
            }
        }
    }
    lines.push(format!("artifacts in {}", pipeline.out.display()));
    Ok(lines)
}
