use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use steval::da::DaAggregation;
use steval::evalset::Condition;
use steval::metrics::Metric;
use steval::stats::{PoolAxis, ReportFormat};
use steval::textproc::TokenizationLevel;

pub const CAMPAIGN_DIR_ENV: &str = "STEVAL_CAMPAIGN_DIR";

#[derive(Debug, Parser)]
#[command(name = "steval", version, about = "Speech translation evaluation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align unsegmented hypotheses to the reference segmentation.
    Reseg(ResegArgs),
    /// Score resegmented systems with chrF or BLEU.
    Score(ScoreArgs),
    /// Build, serve and collect a direct assessment campaign.
    Campaign {
        #[command(subcommand)]
        command: CampaignCommand,
    },
    /// Correlate human and metric system scores.
    Correlate(CorrelateArgs),
}

#[derive(Debug, Args)]
pub struct ResegArgs {
    /// Hypothesis file (one or more `#!steval` document blocks).
    #[arg(long)]
    pub hyp: PathBuf,
    /// Condition directory with manifest.json, or a test set root.
    #[arg(long)]
    pub ref_manifest: PathBuf,
    /// Condition to use when the test set has several, e.g. offline/en-de/TED.
    #[arg(long)]
    pub condition: Option<Condition>,
    /// word or char; defaults to char for zh/ja targets and word otherwise.
    #[arg(long)]
    pub level: Option<TokenizationLevel>,
    /// Reference set to align against (default: first by name).
    #[arg(long)]
    pub ref_set: Option<String>,
    /// Restrict alignment to a diagonal band of this half-width.
    #[arg(long)]
    pub band: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub testset: PathBuf,
    #[arg(long)]
    pub condition: Option<Condition>,
    /// Resegmented hypothesis files; defaults to systems listed in the manifest.
    #[arg(long, num_args = 1..)]
    pub systems: Vec<PathBuf>,
    #[arg(long, default_value = "chrf")]
    pub metric: Metric,
    #[arg(long)]
    pub ref_set: String,
    #[arg(long, default_value_t = 6)]
    pub char_order: usize,
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 4)]
    pub bleu_order: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CampaignDir {
    /// Campaign directory.
    #[arg(env = CAMPAIGN_DIR_ENV)]
    pub dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum CampaignCommand {
    /// Sample segments and write the task list.
    Build {
        #[command(flatten)]
        dir: CampaignDir,
        #[command(flatten)]
        args: CampaignBuildArgs,
    },
    /// Serve the annotation API.
    Serve {
        #[command(flatten)]
        dir: CampaignDir,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Import a TSV of scores collected elsewhere.
    Ingest {
        #[command(flatten)]
        dir: CampaignDir,
        #[arg(long)]
        scores: PathBuf,
    },
    /// Write all records as WMT-style TSV.
    Export {
        #[command(flatten)]
        dir: CampaignDir,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write system-level DA scores.
    Aggregate {
        #[command(flatten)]
        dir: CampaignDir,
        /// raw-mean or annotator-z.
        #[arg(long, default_value = "raw-mean")]
        mode: DaAggregation,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print per-annotator progress as JSON.
    Progress {
        #[command(flatten)]
        dir: CampaignDir,
    },
}

#[derive(Debug, Args)]
pub struct CampaignBuildArgs {
    #[arg(long)]
    pub testset: PathBuf,
    #[arg(long)]
    pub condition: Option<Condition>,
    /// Resegmented hypothesis files; defaults to systems listed in the manifest.
    #[arg(long, num_args = 1..)]
    pub systems: Vec<PathBuf>,
    /// Segments to sample (all if larger than the test set).
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub shuffle_seed: u64,
    /// Comma-separated annotator ids.
    #[arg(long, value_delimiter = ',', required = true)]
    pub annotators: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// System-level human score tables.
    #[arg(long, num_args = 1.., required = true)]
    pub human: Vec<PathBuf>,
    /// System-level metric score tables.
    #[arg(long, num_args = 1.., required = true)]
    pub metric: Vec<PathBuf>,
    /// Average each method over domains before correlating.
    #[arg(long, conflicts_with = "pool")]
    pub average_domains: bool,
    /// Pool all conditions into one sample along task, domain or language.
    #[arg(long)]
    pub pool: Option<PoolAxis>,
    /// Standardize each condition's scores before pooling.
    #[arg(long, requires = "pool")]
    pub zscore: bool,
    /// tsv or md.
    #[arg(long, default_value = "tsv")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
