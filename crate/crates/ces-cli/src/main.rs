//! `ces` - batch analysis of temporal bipartite co-occurrence streams.
//!
//! Every command writes its products plus a `manifest.json` with input and
//! output digests into the output directory. Exit codes: 0 success, 1
//! usage, 2 input validation, 3 numerical failure.

mod commands;
mod common;
mod manifest;
mod pipeline;
mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use ces_core::ingest::{DayRange, Grouping, IngestError};
use ces_core::net::NetError;
use ces_core::spectral::SpectralError;
use ces_core::stringency::StringencyError;
use ces_core::synth::SynthError;
use ces_core::tensor::TensorError;
use ces_core::turnover::TurnoverError;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::RangeOutsideWindow { .. } => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::InvalidParam(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<TurnoverError> for CliError {
    fn from(e: TurnoverError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<StringencyError> for CliError {
    fn from(e: StringencyError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn parse_window(text: &str) -> Result<DayRange, String> {
    DayRange::parse(text).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GroupingArg {
    Full,
    Grouped,
}

impl From<GroupingArg> for Grouping {
    fn from(g: GroupingArg) -> Grouping {
        match g {
            GroupingArg::Full => Grouping::Full,
            GroupingArg::Grouped => Grouping::Grouped,
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Event file, CSV (`date,feature,activity,user[,count]`) or JSONL.
    #[arg(long)]
    pub events: PathBuf,
    /// Taxonomy file, CSV `kind,term,class`.
    #[arg(long)]
    pub taxonomy: PathBuf,
    /// Analysis window as `START:END` inclusive ISO dates.
    #[arg(long, value_parser = parse_window)]
    pub window: DayRange,
    /// Abort on unknown terms instead of skipping rows with a warning.
    #[arg(long)]
    pub strict: bool,
    /// Keep counts at term level or pool them into classes.
    #[arg(long, value_enum, default_value_t = GroupingArg::Grouped)]
    pub grouping: GroupingArg,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory (defaults to $CES_OUT_DIR).
    #[arg(long, env = "CES_OUT_DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Parser)]
#[command(name = "ces", version, about = "Temporal bipartite co-occurrence analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate an event file and write aggregated daily counts.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sum counts over the window into a labeled weight matrix.
    BuildNetwork {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// The five global network statistics, as JSON.
    NetworkStats {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Modularity search restarts.
        #[arg(long, default_value_t = 20)]
        restarts: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Per-node push/pull and nested rank, as CSV.
    NodeStats {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Higher-order SVD: factor matrices, scree, leading outer products.
    Hosvd {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Subtract the tensor mean first.
        #[arg(long)]
        center: bool,
        /// Divide each day slice by its total first.
        #[arg(long)]
        normalize_days: bool,
        /// Factor columns to export per mode.
        #[arg(long, default_value_t = 10)]
        components: usize,
        /// Also render the leading outer product as an SVG heatmap.
        #[arg(long)]
        svg: bool,
    },
    /// Morlet wavelet spectrum of a daily series.
    Wavelet {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Restrict the series to one feature class (grouped cells).
        #[arg(long, requires = "activity_class")]
        feature_class: Option<String>,
        /// Restrict the series to one activity class (grouped cells).
        #[arg(long, requires = "feature_class")]
        activity_class: Option<String>,
        /// Significance level.
        #[arg(long, default_value_t = 0.95)]
        alpha: f64,
        /// ln(1+x) the series first.
        #[arg(long)]
        log1p: bool,
        /// Also render an SVG spectrogram.
        #[arg(long)]
        svg: bool,
    },
    /// Cross-wavelet of a daily series against median stringency.
    Xwt {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// OxCGRT-style stringency CSV.
        #[arg(long)]
        stringency: PathBuf,
        /// Comma-separated country codes (default GB,US,CA,AU,NZ,IE).
        #[arg(long)]
        countries: Option<String>,
        /// Which daily series to compare against stringency.
        #[arg(long, value_enum, default_value_t = XwtSeriesArg::Tweets)]
        series: XwtSeriesArg,
        /// Warmup for the new-users series: `auto`, `none`, or START:END.
        #[arg(long, default_value = "auto")]
        warmup: String,
        #[arg(long, default_value_t = 0.95)]
        alpha: f64,
        #[arg(long)]
        log1p: bool,
        #[arg(long)]
        svg: bool,
    },
    /// Daily new-user ratios.
    Turnover {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// `auto` (all records before the window), `none`, or START:END.
        #[arg(long, default_value = "auto")]
        warmup: String,
        /// Restrict scope to one feature class.
        #[arg(long, requires = "activity_class")]
        feature_class: Option<String>,
        /// Restrict scope to one activity class.
        #[arg(long, requires = "feature_class")]
        activity_class: Option<String>,
    },
    /// Reduce a per-country stringency table to its daily median.
    Stringency {
        /// OxCGRT-style stringency CSV.
        #[arg(long)]
        table: PathBuf,
        /// Comma-separated country codes (default GB,US,CA,AU,NZ,IE).
        #[arg(long)]
        countries: Option<String>,
        /// Clip and gap-fill to this window.
        #[arg(long, value_parser = parse_window)]
        window: Option<DayRange>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Generate a synthetic event stream from a TOML config.
    Synth {
        /// Generator config; omit together with --init to use defaults.
        #[arg(long, required_unless_present = "init")]
        config: Option<PathBuf>,
        /// Taxonomy to generate over (defaults to the built-in example).
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write a starter config and the example taxonomy, then exit.
        #[arg(long)]
        init: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the full analysis chain and emit a summary.
    Pipeline {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Optional OxCGRT-style stringency CSV for coherency analysis.
        #[arg(long)]
        stringency: Option<PathBuf>,
        #[arg(long)]
        countries: Option<String>,
        #[arg(long, default_value_t = 20)]
        restarts: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.95)]
        alpha: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum XwtSeriesArg {
    /// Daily event counts.
    Tweets,
    /// Daily new-user ratio.
    NewUsers,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { input, output } => commands::ingest(&input, &output),
        Command::BuildNetwork { input, output } => commands::build_network(&input, &output),
        Command::NetworkStats {
            input,
            output,
            restarts,
            seed,
        } => commands::network_stats_cmd(&input, &output, restarts, seed),
        Command::NodeStats { input, output } => commands::node_stats(&input, &output),
        Command::Hosvd {
            input,
            output,
            center,
            normalize_days,
            components,
            svg,
        } => commands::hosvd(&input, &output, center, normalize_days, components, svg),
        Command::Wavelet {
            input,
            output,
            feature_class,
            activity_class,
            alpha,
            log1p,
            svg,
        } => commands::wavelet(
            &input,
            &output,
            feature_class.as_deref(),
            activity_class.as_deref(),
            alpha,
            log1p,
            svg,
        ),
        Command::Xwt {
            input,
            output,
            stringency,
            countries,
            series,
            warmup,
            alpha,
            log1p,
            svg,
        } => commands::xwt(
            &input,
            &output,
            &stringency,
            countries.as_deref(),
            series,
            &warmup,
            alpha,
            log1p,
            svg,
        ),
        Command::Turnover {
            input,
            output,
            warmup,
            feature_class,
            activity_class,
        } => commands::turnover(
            &input,
            &output,
            &warmup,
            feature_class.as_deref(),
            activity_class.as_deref(),
        ),
        Command::Stringency {
            table,
            countries,
            window,
            output,
        } => commands::stringency(&table, countries.as_deref(), window, &output),
        Command::Synth {
            config,
            taxonomy,
            seed,
            init,
            output,
        } => commands::synth(config.as_deref(), taxonomy.as_deref(), seed, init, &output),
        Command::Pipeline {
            input,
            output,
            stringency,
            countries,
            restarts,
            seed,
            alpha,
        } => pipeline::run(
            &input,
            &output,
            stringency.as_deref(),
            countries.as_deref(),
            restarts,
            seed,
            alpha,
        ),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
