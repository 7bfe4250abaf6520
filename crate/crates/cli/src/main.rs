//! `dbsbm` command-line front end. Every subcommand except `sweep` and
//! `sample-graph` prints its result as JSON on stdout.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use dbsbm::bp::{bp_run, BpConfig};
use dbsbm::channel::{ChannelEvaluator, Method};
use dbsbm::io::{read_graph, read_side_info, write_graph, ModelConfig};
use dbsbm::linalg::{PsdMatrix, SymMatrix};
use dbsbm::model::{ProbVector, SbmModel, SideInfo, WhitenedSupport};
use dbsbm::oracle::{dpi_check, exact_posterior, prop1_check, prop2_check, universality_gap, DataIntegrator};
use dbsbm::potential::{CccpOptions, PotentialProblem, SolveOptions};
use dbsbm::sweep::{figure1_defaults, run_sweep, Figure1Variant, SweepConfig};

#[derive(Parser)]
#[command(name = "dbsbm", version, about = "Degree-balanced SBM: potential bounds, belief propagation and exact oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Quadrature,
    Mc,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Integration method for the scalar channel.
    #[arg(long, value_enum, default_value = "quadrature")]
    method: MethodArg,
    /// Gauss–Hermite nodes per dimension (quadrature).
    #[arg(long)]
    nodes: Option<usize>,
    /// Noise samples (Monte Carlo).
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
    /// Noise bank seed (Monte Carlo).
    #[arg(long, default_value_t = 0)]
    mc_seed: u64,
}

impl EvalArgs {
    fn method(&self, dim: usize) -> Method {
        match self.method {
            MethodArg::Quadrature => match self.nodes {
                Some(nodes_per_dim) => Method::Quadrature { nodes_per_dim },
                None => Method::default_quadrature(dim),
            },
            MethodArg::Mc => Method::MonteCarlo { samples: self.samples, seed: self.mc_seed },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleMode {
    Posterior,
    PropCheck,
    Dpi,
    Universality,
}

#[derive(Subcommand)]
enum Command {
    /// Mutual information I_X(S) and MMSE matrix M_X(S) of the scalar channel.
    SnrEval {
        /// Community proportions, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        /// SNR matrix S, row-major and comma separated.
        #[arg(long = "S", value_delimiter = ',', required = true)]
        s: Vec<f64>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Minimize the potential and report the weak-recovery verdict and bounds.
    SolvePotential {
        #[arg(long)]
        config: PathBuf,
        /// Side-information SNR matrix, row-major; overrides `S` in the config.
        #[arg(long = "S", value_delimiter = ',')]
        s: Option<Vec<f64>>,
        /// CCCP damping.
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, default_value_t = 20_000)]
        max_iter: usize,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Sample a labeled graph (and side information when the config has `S`).
    SampleGraph {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        side_info_out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run belief propagation on a graph file.
    Bp {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Side-information file; requires `S` in the config.
        #[arg(long)]
        side_info: Option<PathBuf>,
        #[arg(long, default_value_t = 15)]
        inits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.2)]
        damping: f64,
        #[arg(long, default_value_t = 300)]
        max_sweeps: usize,
        #[arg(long, default_value_t = 1e-5)]
        msg_tol: f64,
        /// Include the per-node marginals in the output.
        #[arg(long)]
        marginals: bool,
    },
    /// Exact computations by enumeration on small instances.
    Oracle {
        #[arg(long, value_enum)]
        mode: OracleMode,
        #[arg(long)]
        config: PathBuf,
        /// Graph file (posterior mode).
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Side-information file (posterior mode).
        #[arg(long)]
        side_info: Option<PathBuf>,
        /// Average degrees (universality mode).
        #[arg(long, value_delimiter = ',', default_value = "1.5,3")]
        d_grid: Vec<f64>,
        #[arg(long, default_value_t = 20_000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Phase-diagram sweep writing a schema-1 CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; defaults to `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep rows already in `<out>.partial`.
        #[arg(long)]
        resume: bool,
    },
    /// Print the default sweep config for one of the two phase diagrams.
    SweepConfig {
        #[arg(long, default_value = "a")]
        figure: String,
        #[arg(long, default_value_t = 9)]
        points: usize,
        /// Graph size; 100000 matches the original experiment.
        #[arg(long)]
        n: Option<usize>,
    },
}

fn square(values: &[f64]) -> Result<SymMatrix> {
    let dim = (values.len() as f64).sqrt().round() as usize;
    if dim * dim != values.len() {
        bail!("matrix needs a square number of entries, got {}", values.len());
    }
    Ok(SymMatrix::from_row_major(dim, values.to_vec())?)
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn print(value: serde_json::Value) -> Result<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(&value)?))
}

fn load_model(path: &Path) -> Result<(ModelConfig, SbmModel)> {
    let cfg = ModelConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    let model = cfg.build()?;
    Ok((cfg, model))
}

fn side_info(cfg: &ModelConfig, model: &SbmModel, path: Option<&PathBuf>) -> Result<Option<SideInfo>> {
    let Some(path) = path else { return Ok(None) };
    let s = cfg.s_matrix()?.context("side information needs `S` in the model config")?;
    let y = read_side_info(path, model.support.dim())?;
    Ok(Some(SideInfo { s, y, seed: 0 }))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SnrEval { p, s, eval } => {
            let support = WhitenedSupport::new(&ProbVector::new(p)?);
            let dim = support.dim();
            let s = PsdMatrix::new(square(&s)?)?;
            let out = ChannelEvaluator::new(support, eval.method(dim))?.evaluate(&s)?;
            print(json!({
                "info": out.info,
                "info_error": out.info_error,
                "mmse": out.mmse,
                "mmse_error": out.mmse_error,
            }))
        }
        Command::SolvePotential { config, s, eps, max_iter, eval } => {
            let (cfg, model) = load_model(&config)?;
            let s = match s {
                Some(v) => Some(PsdMatrix::new(square(&v)?)?),
                None => cfg.s_matrix()?,
            };
            let dim = model.support.dim();
            let evaluator = ChannelEvaluator::new(model.support.clone(), eval.method(dim))?;
            let problem = match s {
                Some(s) => PotentialProblem::new(evaluator, model.r.clone(), s)?,
                None => PotentialProblem::without_side_info(evaluator, model.r.clone())?,
            };
            let opts = SolveOptions { cccp: CccpOptions { eps, max_iter, ..Default::default() }, ..Default::default() };
            let sol = problem.solve_with(&opts)?;
            print(json!({ "valid": model.valid, "solution": sol }))
        }
        Command::SampleGraph { config, out, side_info_out, seed } => {
            let (cfg, model) = load_model(&config)?;
            let seed = seed.unwrap_or(cfg.seed);
            let graph = model.sample_graph(seed)?;
            write_graph(&out, &graph)?;
            if let Some(path) = side_info_out {
                let s = cfg.s_matrix()?.context("side information needs `S` in the model config")?;
                let info = model.sample_side_info(&graph.labels, &s, seed.wrapping_add(1))?;
                std::fs::write(&path, dbsbm::io::format_side_info(&info.y))?;
            }
            eprintln!("wrote {} nodes, {} edges to {}", graph.n, graph.edges.len(), out.display());
            Ok(())
        }
        Command::Bp { graph, config, side_info: side_path, inits, seed, damping, max_sweeps, msg_tol, marginals } => {
            let (cfg, model) = load_model(&config)?;
            let graph = read_graph(&graph)?;
            let side = side_info(&cfg, &model, side_path.as_ref())?;
            let bp = BpConfig { n_inits: inits, seed, damping, max_sweeps, msg_tol, ..Default::default() };
            let result = bp_run(&graph, &model, &bp, side.as_ref())?;
            let mut value = serde_json::to_value(&result)?;
            if marginals {
                value["marginals"] = serde_json::to_value(&result.marginals)?;
            }
            print(value)
        }
        Command::Oracle { mode, config, graph, side_info: side_path, d_grid, mc_samples, seed } => {
            let (cfg, model) = load_model(&config)?;
            match mode {
                OracleMode::Posterior => {
                    let path = graph.context("posterior mode needs --graph")?;
                    let graph = read_graph(&path)?;
                    let side = side_info(&cfg, &model, side_path.as_ref())?;
                    print(serde_json::to_value(exact_posterior(&model, &graph, side.as_ref())?)?)
                }
                OracleMode::PropCheck => {
                    let s = cfg.s_matrix()?;
                    let integrator = DataIntegrator::new(&model, s.as_ref());
                    print(json!({ "prop1": prop1_check(&integrator)?, "prop2": prop2_check(&integrator)? }))
                }
                OracleMode::Dpi => {
                    let s = cfg.s_matrix()?.context("dpi mode needs `S` in the model config")?;
                    print(serde_json::to_value(dpi_check(&model, &s)?)?)
                }
                OracleMode::Universality => {
                    let probe = universality_gap(&cfg.prob()?, &cfg.r_matrix()?, cfg.n, &d_grid, mc_samples, seed)?;
                    print(serde_json::to_value(probe)?)
                }
            }
        }
        Command::Sweep { config, out, resume } => {
            let cfg = SweepConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            let out = out.or_else(|| cfg.output.clone()).context("no output path: pass --out or set `output`")?;
            let rows = run_sweep(&cfg, &out, resume)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::SweepConfig { figure, points, n } => {
            let variant: Figure1Variant = figure.parse()?;
            let mut cfg = figure1_defaults(variant, points);
            cfg.n = n.unwrap_or(cfg.n);
            cfg.validate()?;
            emit(&cfg.to_toml())
        }
    }
}

fn main() -> Result<()> {
    run(Cli::parse())
}
