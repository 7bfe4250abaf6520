//! Phase-diagram sweeps over `R = diag(λ₁, λ₂)` for three communities.
//!
//! Every grid point gets a theory part (potential minimization) and an
//! empirical part (`trials` sampled graphs, each decoded with BP). Rows are
//! appended to `<out>.partial` as points finish so an interrupted sweep can be
//! resumed; the final table is sorted by `(λ₁, λ₂)`.
//!
//! CSV layout (schema 1): a `#schema=1` line, then the header
//! `lambda1, lambda2, valid, status, f_min, weak_recovery, trace_mmse_ub,
//! interaction_lb, delta_star_00, delta_star_01, delta_star_11, bp_mse_median,
//! bp_mse_t1 … bp_mse_t<trials>, seed, runtime_s`. Missing values are empty.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::{bp_run, BpConfig};
use crate::channel::{ChannelEvaluator, Method};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::model::{ProbVector, SbmModel};
use crate::potential::{CccpOptions, PotentialProblem, PotentialSolution, SolveOptions, Verdict};

pub const SCHEMA_VERSION: u32 = 1;
pub const SCHEMA_LINE: &str = "#schema=1";
/// Smallest graph accepted when BP trials are requested.
pub const MIN_BP_N: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub eps: f64,
    pub max_iter: usize,
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self { eps: d.cccp.eps, max_iter: d.cccp.max_iter, random_starts: d.random_starts, seed: d.seed }
    }
}

impl SolverSettings {
    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            cccp: CccpOptions { eps: self.eps, max_iter: self.max_iter, ..Default::default() },
            random_starts: self.random_starts,
            seed: self.seed,
            parallel: true,
        }
    }
}

fn default_trials() -> usize {
    8
}

fn default_evaluator() -> Method {
    Method::default_quadrature(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub p: Vec<f64>,
    pub lambda1_grid: Vec<f64>,
    pub lambda2_grid: Vec<f64>,
    pub n: usize,
    pub d: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Fill the `runtime_s` column. Off by default so repeated runs produce
    /// identical files.
    #[serde(default)]
    pub record_runtime: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub bp: BpConfig,
    #[serde(default = "default_evaluator")]
    pub evaluator: Method,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.len() != 3 {
            return Err(Error::Config(format!("R = diag(λ₁, λ₂) needs three communities, p has {}", self.p.len())));
        }
        ProbVector::new(self.p.clone())?;
        for (name, grid) in [("lambda1_grid", &self.lambda1_grid), ("lambda2_grid", &self.lambda2_grid)] {
            if grid.is_empty() {
                return Err(Error::Config(format!("{name} is empty")));
            }
            if grid.iter().any(|l| !l.is_finite() || *l == 0.0) {
                return Err(Error::Config(format!("{name} must contain finite nonzero values")));
            }
        }
        if !(self.d > 0.0 && self.d < self.n as f64) {
            return Err(Error::DegreeOutOfRange { d: self.d, n: self.n });
        }
        if self.trials > 0 && self.n < MIN_BP_N {
            return Err(Error::Config(format!("BP sweeps need n ≥ {MIN_BP_N}, got {}", self.n)));
        }
        self.bp.validate()
    }

    /// Grid points in row-major order of `(lambda1_grid, lambda2_grid)`.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.lambda1_grid.iter().flat_map(|&a| self.lambda2_grid.iter().map(move |&b| (a, b))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure1Variant {
    /// Uniform prior.
    A,
    /// `p = (0.6, 0.3, 0.1)`.
    B,
}

impl std::str::FromStr for Figure1Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            other => Err(Error::Config(format!("unknown figure variant {other:?}, expected a or b"))),
        }
    }
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect(),
    }
}

/// Desk-scale settings for the two phase diagrams: `d = 30`, `n = 10⁴`, 8 trials
/// of 15 BP initializations, and a `points × points` grid. Variant A spans
/// `[0.4, 1.6]`; variant B spans `[0.35, 2.75]`, which with 9 points has step
/// 0.3 and contains 0.95.
pub fn figure1_defaults(variant: Figure1Variant, points: usize) -> SweepConfig {
    let (p, grid) = match variant {
        Figure1Variant::A => (vec![1.0 / 3.0; 3], linspace(0.4, 1.6, points)),
        Figure1Variant::B => (vec![0.6, 0.3, 0.1], linspace(0.35, 2.75, points)),
    };
    SweepConfig {
        p,
        lambda1_grid: grid.clone(),
        lambda2_grid: grid,
        n: 10_000,
        d: 30.0,
        trials: 8,
        master_seed: 0,
        record_runtime: false,
        output: None,
        bp: BpConfig { n_inits: 15, ..Default::default() },
        evaluator: default_evaluator(),
        solver: SolverSettings::default(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub valid: bool,
    pub status: String,
    pub f_min: Option<f64>,
    pub weak_recovery: Option<Verdict>,
    pub trace_mmse_ub: Option<f64>,
    pub interaction_lb: Option<f64>,
    /// Entries `(0,0), (0,1), (1,1)` of `Δ*`.
    pub delta_star: Option<[f64; 3]>,
    pub bp_mse_median: Option<f64>,
    pub bp_mse_per_trial: Vec<Option<f64>>,
    pub seed: u64,
    pub runtime_s: Option<f64>,
}

pub fn header(trials: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "lambda1",
        "lambda2",
        "valid",
        "status",
        "f_min",
        "weak_recovery",
        "trace_mmse_ub",
        "interaction_lb",
        "delta_star_00",
        "delta_star_01",
        "delta_star_11",
        "bp_mse_median",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=trials).map(|t| format!("bp_mse_t{t}")));
    h.push("seed".into());
    h.push("runtime_s".into());
    h
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str, col: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Parse(format!("column {col}: invalid number {s:?}")))
}

fn parse_verdict(s: &str) -> Result<Option<Verdict>> {
    Ok(match s {
        "" => None,
        "possible" => Some(Verdict::Possible),
        "impossible" => Some(Verdict::Impossible),
        "undetermined" => Some(Verdict::Undetermined),
        other => return Err(Error::Parse(format!("unknown verdict {other:?}"))),
    })
}

impl SweepRow {
    pub fn to_record(&self) -> Vec<String> {
        let mut r = vec![
            self.lambda1.to_string(),
            self.lambda2.to_string(),
            self.valid.to_string(),
            self.status.clone(),
            cell(self.f_min),
            self.weak_recovery.map(|v| v.to_string()).unwrap_or_default(),
            cell(self.trace_mmse_ub),
            cell(self.interaction_lb),
        ];
        for i in 0..3 {
            r.push(cell(self.delta_star.map(|d| d[i])));
        }
        r.push(cell(self.bp_mse_median));
        r.extend(self.bp_mse_per_trial.iter().map(|&v| cell(v)));
        r.push(self.seed.to_string());
        r.push(self.runtime_s.map(|t| format!("{t:.3}")).unwrap_or_default());
        r
    }

    pub fn from_record(rec: &csv::StringRecord, trials: usize) -> Result<Self> {
        let expected = 14 + trials;
        if rec.len() != expected {
            return Err(Error::Parse(format!("row has {} columns, expected {expected}", rec.len())));
        }
        let num = |i: usize, col: &str| -> Result<f64> {
            parse_opt(&rec[i], col)?.ok_or_else(|| Error::Parse(format!("column {col} is empty")))
        };
        let delta = [parse_opt(&rec[8], "delta_star_00")?, parse_opt(&rec[9], "delta_star_01")?, parse_opt(&rec[10], "delta_star_11")?];
        Ok(Self {
            lambda1: num(0, "lambda1")?,
            lambda2: num(1, "lambda2")?,
            valid: rec[2].parse().map_err(|_| Error::Parse(format!("column valid: {:?}", &rec[2])))?,
            status: rec[3].to_string(),
            f_min: parse_opt(&rec[4], "f_min")?,
            weak_recovery: parse_verdict(&rec[5])?,
            trace_mmse_ub: parse_opt(&rec[6], "trace_mmse_ub")?,
            interaction_lb: parse_opt(&rec[7], "interaction_lb")?,
            delta_star: match delta {
                [Some(a), Some(b), Some(c)] => Some([a, b, c]),
                _ => None,
            },
            bp_mse_median: parse_opt(&rec[11], "bp_mse_median")?,
            bp_mse_per_trial: (0..trials).map(|t| parse_opt(&rec[12 + t], "bp_mse_t")).collect::<Result<_>>()?,
            seed: rec[12 + trials].parse().map_err(|_| Error::Parse("column seed".into()))?,
            runtime_s: parse_opt(&rec[13 + trials], "runtime_s")?,
        })
    }

    fn key(&self) -> (u64, u64) {
        (self.lambda1.to_bits(), self.lambda2.to_bits())
    }
}

/// Reads a schema-1 table, checking the version line and header.
pub fn read_rows(path: &Path) -> Result<(usize, Vec<SweepRow>)> {
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or_default();
    if first.trim() != SCHEMA_LINE {
        return Err(Error::Parse(format!("{}: expected {SCHEMA_LINE:?} on the first line", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let hdr = reader.headers()?.clone();
    let trials = hdr.len().checked_sub(14).ok_or_else(|| Error::Parse("header too short".into()))?;
    if hdr.iter().collect::<Vec<_>>() != header(trials) {
        return Err(Error::Parse(format!("{}: unexpected header", path.display())));
    }
    let rows = reader.records().map(|r| SweepRow::from_record(&r?, trials)).collect::<Result<Vec<_>>>()?;
    Ok((trials, rows))
}

fn write_table(path: &Path, trials: usize, rows: &[SweepRow]) -> Result<()> {
    let mut file = File::create(path)?;
    writeln!(file, "{SCHEMA_LINE}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header(trials))?;
    for row in rows {
        w.write_record(row.to_record())?;
    }
    w.flush()?;
    Ok(())
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[m] } else { 0.5 * (values[m - 1] + values[m]) })
}

/// Seed of grid point `index`: the first word of stream `index` of a ChaCha8
/// generator keyed by the master seed.
pub fn point_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// `(graph seed, BP seed)` of one trial at a point.
pub fn trial_seeds(point_seed: u64, trial: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(point_seed);
    rng.set_stream(trial as u64);
    (rng.next_u64(), rng.next_u64())
}

fn theory(config: &SweepConfig, model: &SbmModel) -> Result<PotentialSolution> {
    let evaluator = ChannelEvaluator::new(model.support.clone(), config.evaluator)?;
    PotentialProblem::without_side_info(evaluator, model.r.clone())?.solve_with(&config.solver.options())
}

/// Computes a single grid point.
pub fn run_point(config: &SweepConfig, index: usize, lambda1: f64, lambda2: f64) -> SweepRow {
    let start = Instant::now();
    let seed = point_seed(config.master_seed, index);
    let mut row = SweepRow {
        lambda1,
        lambda2,
        valid: false,
        status: "ok".into(),
        f_min: None,
        weak_recovery: None,
        trace_mmse_ub: None,
        interaction_lb: None,
        delta_star: None,
        bp_mse_median: None,
        bp_mse_per_trial: vec![None; config.trials],
        seed,
        runtime_s: None,
    };
    let model = match ProbVector::new(config.p.clone())
        .and_then(|p| SbmModel::new(config.n, config.d, &p, SymMatrix::diag(&[lambda1, lambda2])))
    {
        Ok(m) => m,
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    };
    row.valid = model.valid;
    let mut notes: Vec<String> = Vec::new();
    match theory(config, &model) {
        Ok(sol) => {
            row.f_min = Some(sol.f_min);
            row.weak_recovery = Some(sol.weak_recovery);
            row.trace_mmse_ub = Some(sol.mmse_ub.trace());
            row.interaction_lb = Some(sol.interaction_lb);
            let d = sol.delta_star.as_sym();
            row.delta_star = Some([d.get(0, 0), d.get(0, 1), d.get(1, 1)]);
            if !sol.converged {
                notes.push("not_converged".into());
            }
        }
        Err(e) => notes.push(format!("theory_error: {e}")),
    }
    if !model.valid {
        notes.insert(0, "invalid_model".into());
    } else if config.trials > 0 {
        let results: Vec<Result<f64>> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let (graph_seed, bp_seed) = trial_seeds(seed, t);
                let graph = model.sample_graph(graph_seed)?;
                let bp = BpConfig { seed: bp_seed, ..config.bp };
                Ok(bp_run(&graph, &model, &bp, None)?.empirical_mse_trace)
            })
            .collect();
        let mut ok = Vec::new();
        for (t, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) => {
                    row.bp_mse_per_trial[t] = Some(v);
                    ok.push(v);
                }
                Err(e) => notes.push(format!("bp_error(t{}): {e}", t + 1)),
            }
        }
        row.bp_mse_median = median(&mut ok);
    }
    if !notes.is_empty() {
        row.status = notes.join("; ");
    }
    if config.record_runtime {
        row.runtime_s = Some(start.elapsed().as_secs_f64());
    }
    row
}

pub fn partial_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".partial");
    PathBuf::from(name)
}

/// Runs the sweep and writes the sorted table to `out`. With `resume`, points
/// already present in `<out>.partial` are kept instead of recomputed.
pub fn run_sweep(config: &SweepConfig, out: &Path, resume: bool) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let partial = partial_path(out);
    let mut done: Vec<SweepRow> = Vec::new();
    if resume && partial.exists() {
        let (trials, rows) = read_rows(&partial)?;
        if trials != config.trials {
            return Err(Error::Config(format!("{} was written with {trials} trials, config has {}", partial.display(), config.trials)));
        }
        done = rows;
    } else {
        write_table(&partial, config.trials, &[])?;
    }
    let finished: HashSet<(u64, u64)> = done.iter().map(SweepRow::key).collect();
    let pending: Vec<(usize, (f64, f64))> = config
        .points()
        .into_iter()
        .enumerate()
        .filter(|(_, (a, b))| !finished.contains(&(a.to_bits(), b.to_bits())))
        .collect();

    let writer = Mutex::new(csv::Writer::from_writer(OpenOptions::new().append(true).open(&partial)?));
    let fresh: Vec<Result<SweepRow>> = pending
        .par_iter()
        .map(|&(index, (a, b))| {
            let row = run_point(config, index, a, b);
            let mut w = writer.lock().expect("writer lock");
            w.write_record(row.to_record())?;
            w.flush()?;
            Ok(row)
        })
        .collect();
    drop(writer);
    for row in fresh {
        done.push(row?);
    }

    let mut seen = HashSet::new();
    done.retain(|r| seen.insert(r.key()));
    done.sort_by(|x, y| {
        x.lambda1.partial_cmp(&y.lambda1).expect("finite").then(x.lambda2.partial_cmp(&y.lambda2).expect("finite"))
    });
    write_table(out, config.trials, &done)?;
    std::fs::remove_file(&partial)?;
    Ok(done)
}
