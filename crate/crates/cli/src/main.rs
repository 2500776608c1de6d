// SPDX-License-Identifier: Apache-2.0

//! `procnet`: corruption-risk analysis of public procurement markets.

mod commands;

use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "procnet", version, about = "Corruption-risk analysis of public procurement networks")]
pub struct Cli {
    /// Worker threads for replicate evaluation and per-market analyses.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: u16,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Record the wall-clock time in the manifest (breaks byte-identical reruns).
    #[arg(long, global = true)]
    pub record_time: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, deduplicate and filter a contract file into canonical CSV.
    Ingest(IngestArgs),
    /// Descriptive network statistics and degree power-law fits.
    Stats(StatsArgs),
    /// Weighted core numbers, core membership and core statistics.
    Core(CoreArgs),
    /// Link communities, modularity and clustering of single bidding.
    Communities(CommunitiesArgs),
    /// Compare statistics with the CPV-preserving permutation null model.
    Null(NullArgs),
    /// Generate a synthetic market from a config file.
    Synth(SynthArgs),
    /// Correlate country measures with external indicators.
    Correlate(CorrelateArgs),
    /// Run every analysis per country-year and write the summary tables.
    Report(ReportArgs),
}

fn parse_years(s: &str) -> Result<RangeInclusive<i32>, String> {
    let (a, b) = s.split_once(':').unwrap_or((s, s));
    let a: i32 = a.trim().parse().map_err(|_| format!("bad start year in {s:?}"))?;
    let b: i32 = b.trim().parse().map_err(|_| format!("bad end year in {s:?}"))?;
    if a > b {
        return Err(format!("empty year range {s:?}"));
    }
    Ok(a..=b)
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Contract CSV, or `-` for stdin.
    #[arg(long, short)]
    pub input: String,
    /// Column mapping file (`key = value`); canonical columns by default.
    #[arg(long)]
    pub format: Option<PathBuf>,
    /// Keep only this country.
    #[arg(long)]
    pub country: Option<String>,
    /// Keep only these years, `FROM:TO` inclusive or a single year.
    #[arg(long, value_parser = parse_years)]
    pub years: Option<RangeInclusive<i32>>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Keep contracts without a bid count.
    #[arg(long)]
    pub keep_missing_bids: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Threshold {
    Weighted,
    Unweighted,
}

#[derive(Debug, Args)]
pub struct CoreArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// One market over all selected years instead of one per year.
    #[arg(long)]
    pub pooled: bool,
    /// Class mean used as the core threshold.
    #[arg(long, value_enum, default_value_t = Threshold::Weighted)]
    pub threshold: Threshold,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CommunitiesArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub seed: u64,
    /// Louvain runs used for the modularity mean and spread.
    #[arg(long, default_value_t = 10)]
    pub modularity_seeds: usize,
    /// Refuse line graphs with more edges than this.
    #[arg(long, default_value_t = procnet::communities::DEFAULT_LINE_EDGE_CAP)]
    pub line_edge_cap: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatisticArg {
    CoreSb,
    Cv,
    GlobalSb,
    All,
}

#[derive(Debug, Args)]
pub struct NullArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = procnet::nullmodel::DEFAULT_REPS)]
    pub reps: usize,
    #[arg(long, value_enum, default_value_t = StatisticArg::All)]
    pub statistic: StatisticArg,
    /// Also write every replicate value.
    #[arg(long)]
    pub samples: bool,
    #[arg(long, value_enum, default_value_t = Threshold::Weighted)]
    pub threshold: Threshold,
    /// Output directory; without it results are printed as JSON lines.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the `seed` key of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; without it the contract CSV goes to stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndicatorArgs {
    /// External indicator as `NAME:POLARITY:PATH`, POLARITY one of
    /// higher_is_worse, higher_is_better; the file has columns country,value.
    #[arg(long = "indicator")]
    pub indicators: Vec<String>,
    /// Vintage of the supplied indicators, recorded in the outputs.
    #[arg(long)]
    pub indicator_year: Option<i32>,
    #[arg(long, default_value_t = procnet::report::DEFAULT_BOOTSTRAP)]
    pub n_boot: usize,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Contract data; the measure is each country's single-bidding rate.
    #[arg(long, short, conflicts_with = "measure", required_unless_present = "measure")]
    pub input: Option<String>,
    #[arg(long)]
    pub format: Option<PathBuf>,
    /// Precomputed measure as a country,value CSV.
    #[arg(long)]
    pub measure: Option<PathBuf>,
    #[command(flatten)]
    pub indicators: IndicatorArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = procnet::nullmodel::DEFAULT_REPS)]
    pub reps: usize,
    /// Skip the null models and the files that depend on them.
    #[arg(long)]
    pub no_null: bool,
    #[arg(long, default_value_t = 10)]
    pub modularity_seeds: usize,
    #[arg(long, value_enum, default_value_t = Threshold::Weighted)]
    pub threshold: Threshold,
    /// Weight cross-year means by contract counts.
    #[arg(long)]
    pub contract_weighted: bool,
    #[arg(long, default_value_t = procnet::communities::DEFAULT_LINE_EDGE_CAP)]
    pub line_edge_cap: u64,
    #[command(flatten)]
    pub indicators: IndicatorArgs,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads as usize)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| commands::run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<commands::UsageError>().is_some();
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
