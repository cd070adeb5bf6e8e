//! `shelflife` command-line pipeline.

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shelflife::clustering::ClusterMethod;
use shelflife::pipeline::PipelineConfig;
use shelflife::retrieval::Method;

#[derive(Debug, Parser)]
#[command(name = "shelflife", version, about = "Learned temporal decay for knowledge-graph retrieval")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// JSON configuration file; missing keys take their defaults.
    #[arg(long, global = true, env = "SHELFLIFE_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `paths.out_dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Overrides `paths.edges`.
    #[arg(long, global = true)]
    edges: Option<PathBuf>,
    /// Overrides `paths.truth`.
    #[arg(long, global = true)]
    truth: Option<PathBuf>,
    /// Overrides the default supersession threshold.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic edge stream and its ground truth.
    Generate,
    /// Extract lifetime records from the edge stream.
    Extract,
    /// Cluster predicates by their temporal signature.
    Cluster {
        #[arg(long, value_parser = parse_cluster_method)]
        method: Option<ClusterMethod>,
    },
    /// Fit the three-level decay hierarchy.
    Fit,
    /// Run the retrieval benchmark over generated temporal queries.
    Evaluate {
        #[arg(long)]
        n_queries: Option<usize>,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Option<Vec<Method>>,
    },
    /// Rank one subject's edges at a query time.
    Query {
        #[arg(long)]
        subject: Option<String>,
        #[arg(long)]
        predicate: String,
        /// Query time in days.
        #[arg(long)]
        at: f64,
        #[arg(long, default_value = "level123", value_parser = parse_method)]
        method: Method,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Write the consolidated text report.
    Report,
    /// Re-run the pipeline across supersession thresholds.
    Sweep {
        /// Comma-separated thresholds.
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: shelflife::Error| e.to_string())
}

fn parse_cluster_method(s: &str) -> Result<ClusterMethod, String> {
    match s {
        "density" => Ok(ClusterMethod::Density),
        "dpmixture" => Ok(ClusterMethod::Dpmixture),
        _ => Err(format!("unknown clustering method '{s}' (density, dpmixture)")),
    }
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Data(String),
    /// Artifacts were written but some fit did not converge.
    NonConvergence(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::NonConvergence(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::NonConvergence(m) => write!(f, "non-convergence: {m}"),
        }
    }
}

impl From<shelflife::Error> for Failure {
    fn from(e: shelflife::Error) -> Self {
        match e {
            shelflife::Error::Config(m) => Failure::Config(m),
            other => Failure::Data(other.to_string()),
        }
    }
}

fn load_config(g: &Global) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &g.config {
        Some(p) => {
            let s = std::fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
            PipelineConfig::from_json(&s)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.generator.seed = s;
        cfg.clustering.seed = s;
        cfg.eval.seed = s;
    }
    if let Some(p) = &g.out_dir {
        cfg.paths.out_dir = p.clone();
    }
    if let Some(p) = &g.edges {
        cfg.paths.edges = p.clone();
    }
    if let Some(p) = &g.truth {
        cfg.paths.truth = p.clone();
    }
    if let Some(e) = g.epsilon {
        cfg.signals.epsilon = e;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Generate => {
            cfg.validate()?;
            commands::generate(&cfg)
        }
        Command::Extract => {
            cfg.validate()?;
            commands::extract(&cfg)
        }
        Command::Cluster { method } => {
            if let Some(m) = method {
                cfg.clustering.method = m;
            }
            cfg.validate()?;
            commands::cluster(&cfg)
        }
        Command::Fit => {
            cfg.validate()?;
            commands::fit(&cfg)
        }
        Command::Evaluate { n_queries, methods } => {
            if let Some(n) = n_queries {
                cfg.eval.n_queries = n;
            }
            if let Some(m) = methods {
                cfg.eval.methods = m;
            }
            cfg.validate()?;
            commands::evaluate(&cfg)
        }
        Command::Query { subject, predicate, at, method, top } => {
            cfg.validate()?;
            commands::query(&cfg, subject.as_deref(), &predicate, at, method, top)
        }
        Command::Report => {
            cfg.validate()?;
            commands::report(&cfg)
        }
        Command::Sweep { epsilons } => {
            if let Some(e) = epsilons {
                cfg.eval.sweep_epsilons = e;
            }
            cfg.validate()?;
            commands::sweep(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("shelflife: {f}");
            ExitCode::from(f.code())
        }
    }
}
