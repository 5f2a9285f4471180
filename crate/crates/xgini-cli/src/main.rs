//! `xgini`: economic-complexity and export-inequality pipeline over
//! long-form trade and Gini tables.
//!
//! Exit codes: 0 success, 2 configuration error, 3 input error, 4 numerical
//! error (degenerate spectrum, non-convergence, disconnected matrix),
//! 5 internal error.

mod config;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::manifest::{StageFailure, Workspace};
use crate::stages::{
    cmd_pipeline, cmd_treemap, select_years, stage_eci, stage_ingest, stage_pgi,
    stage_product_space, stage_proximity, stage_rca, stage_report, stage_xgini, Ctx, Method,
};
use xgini_core::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "xgini", version, about = "Economic complexity and Xgini pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Workspace directory (default: $XGINI_WORKSPACE, then the config's
    /// output_dir, then ./xgini_workspace).
    #[arg(long, global = true, value_name = "DIR")]
    workspace: Option<PathBuf>,

    /// Inclusive year range A:B, or a single year.
    #[arg(long, global = true, value_name = "A:B")]
    years: Option<String>,

    /// Specialization cutoff on the Balassa index.
    #[arg(long = "rca-threshold", global = true, value_name = "F")]
    rca_threshold: Option<f64>,

    /// Minimum proximity for non-backbone product-space edges.
    #[arg(long = "edge-threshold", global = true, value_name = "F")]
    edge_threshold: Option<f64>,

    /// ECI solver route.
    #[arg(long, global = true, value_enum)]
    method: Option<Method>,

    /// Solver convergence tolerance override.
    #[arg(long, global = true, value_name = "F")]
    tol: Option<f64>,

    /// Region rosters file (GROUP: CODE,CODE,...).
    #[arg(long, global = true, value_name = "PATH")]
    regions: Option<PathBuf>,

    /// Worker pool size for per-year stages (default: available cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage end to end with caching.
    Pipeline,
    /// Load, validate and canonicalize the input tables.
    Ingest,
    /// Per-year shares, Balassa RCA and the specialization matrix.
    Rca,
    /// ECI/PCI scores from the specialization matrix.
    Eci,
    /// Pairwise product proximity.
    Proximity,
    /// Product-space graph: MST backbone plus threshold edges.
    ProductSpace,
    /// Product Gini Index per product.
    Pgi,
    /// Xgini per country.
    Xgini,
    /// Rankings, regional series, treemaps, overlays and time series.
    Report,
    /// Treemap for one scope (roster group name or comma list of codes).
    Treemap {
        #[arg(long)]
        scope: String,
        #[arg(long)]
        year: i32,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (stage, class, code) = classify(&err);
            let report = serde_json::json!({
                "stage": stage,
                "class": class,
                "error": format!("{err:#}"),
            });
            eprintln!("{report}");
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = cli.rca_threshold {
        config.rca_threshold = v;
    }
    if let Some(v) = cli.edge_threshold {
        config.edge_threshold = v;
    }
    if let Some(p) = &cli.regions {
        config.regions_file = Some(p.clone());
    }
    config.validate()?;

    let root = cli
        .workspace
        .clone()
        .or_else(|| std::env::var_os("XGINI_WORKSPACE").map(PathBuf::from))
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("xgini_workspace"));
    let years = cli.years.as_deref().map(parse_years).transpose()?;
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let method = cli.method.unwrap_or(Method::Eigen);

    let ctx = Ctx::new(config, method, cli.tol, jobs)?;
    let mut ws = Workspace::open(&root)?;

    match cli.command {
        Command::Pipeline => cmd_pipeline(&mut ws, &ctx, years),
        Command::Ingest => stage_ingest(&mut ws, &ctx),
        Command::Rca => {
            let ys = select_years(&ws, &ctx, years)?;
            stage_rca(&mut ws, &ctx, &ys)
        }
        Command::Eci => {
            let ys = select_years(&ws, &ctx, years)?;
            stage_eci(&mut ws, &ctx, &ys)
        }
        Command::Proximity => {
            let ys = select_years(&ws, &ctx, years)?;
            stage_proximity(&mut ws, &ctx, &ys)
        }
        Command::ProductSpace => {
            let ys = select_years(&ws, &ctx, years)?;
            stage_product_space(&mut ws, &ctx, &ys)
        }
        Command::Pgi => {
            let ys = select_years(&ws, &ctx, years)?;
            stage_pgi(&mut ws, &ctx, &ys)
        }
        Command::Xgini => {
            let ys = select_years(&ws, &ctx, years)?;
            stage_xgini(&mut ws, &ctx, &ys)
        }
        Command::Report => {
            let ys = select_years(&ws, &ctx, years)?;
            stage_report(&mut ws, &ctx, &ys)
        }
        Command::Treemap { scope, year } => cmd_treemap(&mut ws, &ctx, &scope, year),
    }
}

fn parse_years(s: &str) -> Result<(i32, i32)> {
    let (a, b) = s.split_once(':').unwrap_or((s, s));
    let parse = |v: &str| {
        v.trim()
            .parse::<i32>()
            .map_err(|_| Error::Config(format!("bad year `{v}` in --years {s}")))
    };
    let (lo, hi) = (parse(a)?, parse(b)?);
    if lo > hi {
        return Err(Error::Config(format!("empty year range {lo}:{hi}")).into());
    }
    Ok((lo, hi))
}

fn classify(err: &anyhow::Error) -> (String, &'static str, u8) {
    let (stage, core) = match err.downcast_ref::<StageFailure>() {
        Some(failure) => (failure.stage.clone(), failure.source.downcast_ref::<Error>()),
        None => ("cli".to_string(), err.downcast_ref::<Error>()),
    };
    let (class, code) = match core.map(Error::class) {
        Some(ErrorClass::Config) => ("config", 2),
        Some(ErrorClass::Input) => ("input", 3),
        Some(ErrorClass::Numerical) => ("numerical", 4),
        Some(ErrorClass::Internal) | None => ("internal", 5),
    };
    (stage, class, code)
}
