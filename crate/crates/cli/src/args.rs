use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thir_core::{Magnification, RangePolicy};

#[derive(Debug, Parser)]
#[command(
    name = "thir",
    version,
    about = "Topological image retrieval",
    propagate_version = true
)]
pub struct Cli {
    /// Log level; overrides THIR_LOG.
    #[arg(long, global = true, value_enum)]
    pub log_level: Option<LogLevel>,

    /// Extraction worker threads (default: all cores).
    #[arg(long, short = 'j', global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

impl LogLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            LogLevel::Error => "error",
            LogLevel::Warn => "warn",
            LogLevel::Info => "info",
            LogLevel::Debug => "debug",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Describe every image under a dataset directory and write an index.
    Extract(ExtractArgs),
    /// Rank an index against one query image.
    Query(QueryArgs),
    /// Split a dataset, index the train part and score top-K majority votes.
    Evaluate(EvaluateArgs),
    /// Dump the Betti curves (and optionally diagrams) of one image as CSV.
    Curves(CurvesArgs),
    /// Serve an index over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RangeArg {
    /// Curve range from each channel's smallest birth to largest death.
    PerImage,
    /// Curve range fixed to [0, 255].
    Full,
}

impl From<RangeArg> for RangePolicy {
    fn from(r: RangeArg) -> Self {
        match r {
            RangeArg::PerImage => RangePolicy::PerChannelMinMax,
            RangeArg::Full => RangePolicy::FixedFullScale,
        }
    }
}

#[derive(Debug, Args)]
pub struct DescriptorArgs {
    /// Betti-curve samples per channel.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u16).range(1..))]
    pub resolution: u16,

    #[arg(long, value_enum, default_value_t = RangeArg::PerImage)]
    pub range: RangeArg,

    /// Resize width before extraction.
    #[arg(long, default_value_t = 240, value_parser = clap::value_parser!(u16).range(1..))]
    pub width: u16,

    /// Resize height before extraction.
    #[arg(long, default_value_t = 240, value_parser = clap::value_parser!(u16).range(1..))]
    pub height: u16,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub data: PathBuf,

    /// CSV with a `path,label,magnification` header; rows override what is parsed from paths.
    #[arg(long)]
    pub manifest: Option<PathBuf>,

    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub descriptor: DescriptorArgs,

    /// Skip images that fail to load instead of aborting.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryFormat {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,

    #[arg(long)]
    pub image: PathBuf,

    #[arg(long, short, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub k: u32,

    #[arg(long, value_enum, default_value_t = QueryFormat::Table)]
    pub format: QueryFormat,

    /// Compare L2-normalized descriptors.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormatArg {
    Csv,
    Markdown,
    Json,
}

impl From<ReportFormatArg> for thir_core::ReportFormat {
    fn from(f: ReportFormatArg) -> Self {
        match f {
            ReportFormatArg::Csv => Self::Csv,
            ReportFormatArg::Markdown => Self::Markdown,
            ReportFormatArg::Json => Self::Json,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long)]
    pub manifest: Option<PathBuf>,

    /// Comma-separated K values.
    #[arg(long, value_delimiter = ',', default_value = "3,5", value_parser = clap::value_parser!(u32).range(1..))]
    pub k: Vec<u32>,

    /// Train fraction of each label, strictly between 0 and 1.
    #[arg(long, default_value_t = 0.8, value_parser = parse_fraction)]
    pub split: f64,

    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    /// `40`, `100`, `200`, `400`, or `all` (each magnification separately).
    #[arg(long, default_value = "all")]
    pub magnification: MagnificationFilter,

    #[command(flatten)]
    pub descriptor: DescriptorArgs,

    /// Also write the report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = ReportFormatArg::Csv)]
    pub format: ReportFormatArg,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[arg(long)]
    pub image: PathBuf,

    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u16).range(1..))]
    pub resolution: u16,

    #[arg(long, value_enum, default_value_t = RangeArg::PerImage)]
    pub range: RangeArg,

    /// Resize before extraction (both or neither); native size otherwise.
    #[arg(long, requires = "height", value_parser = clap::value_parser!(u32).range(1..))]
    pub width: Option<u32>,

    #[arg(long, requires = "width", value_parser = clap::value_parser!(u32).range(1..))]
    pub height: Option<u32>,

    /// Curve CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Also write the persistence diagrams of the three channels here.
    #[arg(long)]
    pub diagram: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub index: PathBuf,

    /// Directory the index paths are relative to.
    #[arg(long)]
    pub data_root: PathBuf,

    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,

    /// Built query console to serve under `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let f: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if f > 0.0 && f < 1.0 {
        Ok(f)
    } else {
        Err(format!("{f} is not strictly between 0 and 1"))
    }
}

/// One known magnification, or every magnification present (`None`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MagnificationFilter(pub Option<Magnification>);

impl std::str::FromStr for MagnificationFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Self(None));
        }
        match s.parse::<Magnification>()? {
            Magnification::Unspecified => Err(format!("unknown magnification {s:?}")),
            m => Ok(Self(Some(m))),
        }
    }
}
