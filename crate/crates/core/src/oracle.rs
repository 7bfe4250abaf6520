//! Exact posterior computations on tiny instances by enumerating all `k^n`
//! label assignments, and where needed all `2^{n(n−1)/2}` graphs.
//!
//! Used to validate belief propagation, the two representations of the MMSE
//! matrix, the χ² and L² identities for the information gain, the
//! data-processing ordering under side information, and the closeness of the
//! graph and Gaussian observation channels for `W = n^{-1/2} X R Xᵀ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{log_sum_exp, tensor_hermite};
use crate::error::{Error, Result};
use crate::linalg::{self, PsdMatrix, SymMatrix};
use crate::model::{SbmModel, SideChannel, SideInfo};

pub const MAX_ORACLE_N: usize = 14;
pub const MAX_ASSIGNMENTS: usize = 10_000_000;
/// Graph-space enumeration is limited to `n ≤ 6` (32768 graphs).
pub const MAX_GRAPH_N: usize = 6;
pub const MAX_UNIVERSALITY_N: usize = 8;
/// Loewner tolerance of [`dpi_check`].
pub const DPI_TOL: f64 = 1e-10;

/// Which pairs enter the graph likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// Every pair contributes `Q` (edge) or `1 − Q` (non-edge).
    Full,
    /// Only observed edges contribute `Q`; the likelihood BP computes when the
    /// external field is switched off.
    EdgesOnly,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactPosterior {
    pub n: usize,
    pub k: usize,
    /// Normalized log posterior weight of every assignment, in mixed-radix
    /// order with node 0 as the most significant digit.
    #[serde(skip)]
    pub log_weights: Vec<f64>,
    /// `log` of the total unnormalized weight. Under [`Likelihood::Full`]
    /// without side information this is `log P(G)`.
    pub log_evidence: f64,
    pub marginals: Vec<Vec<f64>>,
    /// `(1/n) Σ_i cov(e_{X_i} | data)` in the one-hot basis, `k × k`.
    pub mmse_matrix_std: SymMatrix,
    /// `(1/n) Σ_i cov(μ_{X_i} | data)` in the whitened basis.
    pub mmse_matrix_white: SymMatrix,
}

fn assignment_count(n: usize, k: usize) -> Result<usize> {
    if n > MAX_ORACLE_N {
        return Err(Error::TooLargeForEnumeration(format!("n = {n} exceeds {MAX_ORACLE_N}")));
    }
    match k.checked_pow(n as u32) {
        Some(t) if t <= MAX_ASSIGNMENTS => Ok(t),
        _ => Err(Error::TooLargeForEnumeration(format!("{k}^{n} assignments exceed {MAX_ASSIGNMENTS}"))),
    }
}

fn decode(mut index: usize, k: usize, digits: &mut [usize]) {
    for d in digits.iter_mut().rev() {
        *d = index % k;
        index /= k;
    }
}

/// Log-likelihood factor of one node pair.
struct PairTerm {
    i: usize,
    j: usize,
    /// `k × k` table of `log Q_ab` or `log(1 − Q_ab)`.
    table: usize,
}

struct GraphTerms {
    tables: [Vec<f64>; 2],
    pairs: Vec<PairTerm>,
}

impl GraphTerms {
    fn new(model: &SbmModel, edges: &[(usize, usize)], likelihood: Likelihood) -> Result<Self> {
        if !model.valid {
            return Err(Error::InvalidModel);
        }
        let k = model.k();
        let n = model.n;
        let log_q: Vec<f64> = (0..k * k).map(|ab| model.q[(ab / k, ab % k)].ln()).collect();
        let log_1mq: Vec<f64> = (0..k * k).map(|ab| (-model.q[(ab / k, ab % k)]).ln_1p()).collect();
        let mut is_edge = vec![false; n * n];
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::GraphMismatch(format!("edge ({i}, {j}) invalid for n = {n}")));
            }
            is_edge[i.min(j) * n + i.max(j)] = true;
        }
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let edge = is_edge[i * n + j];
                match (likelihood, edge) {
                    (_, true) => pairs.push(PairTerm { i, j, table: 1 }),
                    (Likelihood::Full, false) => pairs.push(PairTerm { i, j, table: 0 }),
                    (Likelihood::EdgesOnly, false) => {}
                }
            }
        }
        Ok(Self { tables: [log_1mq, log_q], pairs })
    }

    fn log_likelihood(&self, x: &[usize], k: usize) -> f64 {
        self.pairs.iter().map(|p| self.tables[p.table][x[p.i] * k + x[p.j]]).sum()
    }
}

impl ExactPosterior {
    /// Posterior of the labels given the edges of `graph` (labels ignored) and
    /// optional side information.
    pub fn compute(
        model: &SbmModel,
        edges: &[(usize, usize)],
        side_info: Option<&SideInfo>,
        likelihood: Likelihood,
    ) -> Result<Self> {
        let node_lp = model.node_log_priors(side_info)?;
        let terms = GraphTerms::new(model, edges, likelihood)?;
        Self::from_terms(model, &node_lp, &terms)
    }

    fn from_terms(model: &SbmModel, node_lp: &[f64], terms: &GraphTerms) -> Result<Self> {
        let n = model.n;
        let k = model.k();
        let total = assignment_count(n, k)?;
        let mut log_weights = vec![0.0; total];
        const CHUNK: usize = 1 << 14;
        log_weights.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let mut x = vec![0; n];
            for (off, w) in chunk.iter_mut().enumerate() {
                decode(c * CHUNK + off, k, &mut x);
                let prior: f64 = x.iter().enumerate().map(|(i, &a)| node_lp[i * k + a]).sum();
                *w = prior + terms.log_likelihood(&x, k);
            }
        });
        let log_evidence = log_sum_exp(&log_weights);
        if !log_evidence.is_finite() {
            return Err(Error::GraphMismatch("observed data has zero likelihood under the model".into()));
        }
        log_weights.iter_mut().for_each(|w| *w -= log_evidence);

        let mut marginals = vec![vec![0.0; k]; n];
        let mut x = vec![0; n];
        for (index, &lw) in log_weights.iter().enumerate() {
            let w = lw.exp();
            decode(index, k, &mut x);
            for (i, &a) in x.iter().enumerate() {
                marginals[i][a] += w;
            }
        }
        let (std, white) = mmse_from_marginals(model, &marginals);
        Ok(Self { n, k, log_weights, log_evidence, marginals, mmse_matrix_std: std, mmse_matrix_white: white })
    }

    /// `E[μ_{X_i}ᵀ μ_{X_j} | data] − m_iᵀ m_j`, the trace of the posterior
    /// cross-covariance of two nodes in the whitened basis.
    pub fn cross_covariance_trace(&self, model: &SbmModel, i: usize, j: usize) -> f64 {
        let support = &model.support;
        let mut x = vec![0; self.n];
        let mut joint = 0.0;
        for (index, &lw) in self.log_weights.iter().enumerate() {
            decode(index, self.k, &mut x);
            joint += lw.exp() * linalg::dot(support.point(x[i]), support.point(x[j]));
        }
        let mean = |b: &[f64]| -> Vec<f64> {
            (0..support.dim()).map(|r| b.iter().enumerate().map(|(a, w)| w * support.point(a)[r]).sum()).collect()
        };
        joint - linalg::dot(&mean(&self.marginals[i]), &mean(&self.marginals[j]))
    }

    /// `(1/n) Σ_i ‖P_{X_i | data} − p‖²`
    pub fn l2_gain(&self, p: &[f64]) -> f64 {
        self.marginals.iter().map(|b| b.iter().zip(p).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).sum::<f64>()
            / self.n as f64
    }

    /// `(1/n) Σ_i χ²(P_{X_i | data} ‖ p) = (1/n) Σ_i Σ_a b_ia²/p_a − 1`
    pub fn chi_square_gain(&self, p: &[f64]) -> f64 {
        self.marginals.iter().map(|b| b.iter().zip(p).map(|(x, y)| x * x / y).sum::<f64>() - 1.0).sum::<f64>()
            / self.n as f64
    }
}

/// Standard-basis and whitened MMSE matrices implied by per-node marginals.
fn mmse_from_marginals(model: &SbmModel, marginals: &[Vec<f64>]) -> (SymMatrix, SymMatrix) {
    let k = model.k();
    let dim = model.support.dim();
    let n = marginals.len().max(1) as f64;
    let mut std = vec![0.0; k * k];
    let mut white = vec![0.0; dim * dim];
    for b in marginals {
        for a in 0..k {
            std[a * k + a] += b[a];
            for c in 0..k {
                std[a * k + c] -= b[a] * b[c];
            }
        }
        let mut mean = vec![0.0; dim];
        for (a, &w) in b.iter().enumerate() {
            let mu = model.support.point(a);
            for r in 0..dim {
                mean[r] += w * mu[r];
                for c in 0..dim {
                    white[r * dim + c] += w * mu[r] * mu[c];
                }
            }
        }
        for r in 0..dim {
            for c in 0..dim {
                white[r * dim + c] -= mean[r] * mean[c];
            }
        }
    }
    (
        SymMatrix::from_fn(k, |a, c| std[a * k + c] / n),
        SymMatrix::from_fn(dim, |r, c| white[r * dim + c] / n),
    )
}

/// Posterior of `graph`'s labels given its edges.
pub fn exact_posterior(model: &SbmModel, graph: &crate::model::LabeledGraph, side_info: Option<&SideInfo>) -> Result<ExactPosterior> {
    if graph.n != model.n || graph.k != model.k() {
        return Err(Error::GraphMismatch(format!("graph (n = {}, k = {}) does not match model", graph.n, graph.k)));
    }
    ExactPosterior::compute(model, &graph.edges, side_info, Likelihood::Full)
}

/// Edge sets of all graphs on `n` nodes, as bitmasks over the pairs
/// `(0,1), (0,2), …, (n−2,n−1)`.
fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

fn edges_of(mask: u64, pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
    pairs.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &e)| e).collect()
}

fn graph_count(n: usize) -> Result<u64> {
    if n > MAX_GRAPH_N {
        return Err(Error::TooLargeForEnumeration(format!("graph space for n = {n} exceeds n = {MAX_GRAPH_N}")));
    }
    Ok(1u64 << (n * (n - 1) / 2))
}

/// Integration over the data distribution: every graph exactly, and side
/// information by tensor Gauss–Hermite quadrature around each true assignment.
#[derive(Debug, Clone, Copy)]
pub struct DataIntegrator<'a> {
    pub model: &'a SbmModel,
    pub s: Option<&'a PsdMatrix>,
    /// Quadrature nodes per noise coordinate.
    pub nodes_per_dim: usize,
}

/// Largest tensor quadrature (total noise coordinates `n·ℓ`) accepted.
pub const MAX_NOISE_DIM: usize = 4;

impl<'a> DataIntegrator<'a> {
    pub fn new(model: &'a SbmModel, s: Option<&'a PsdMatrix>) -> Self {
        let noise_dim = model.n * model.support.dim();
        let nodes_per_dim = match noise_dim {
            0..=2 => 40,
            3 => 24,
            _ => 12,
        };
        Self { model, s, nodes_per_dim }
    }

    /// `E[f(posterior)]` over graphs and side information, accumulated in a
    /// fixed order.
    pub fn expect(&self, f: impl Fn(&ExactPosterior) -> Vec<f64> + Sync) -> Result<Vec<f64>> {
        let model = self.model;
        let n = model.n;
        let k = model.k();
        let pairs = all_pairs(n);
        let graphs = graph_count(n)?;
        let total = assignment_count(n, k)?;
        let side = match self.s {
            Some(s) if s.as_sym().frobenius_norm() > 0.0 => Some(SideChannel::new(&model.support, s)?),
            _ => None,
        };
        let per_graph: Vec<Result<Vec<f64>>> = (0..graphs)
            .into_par_iter()
            .map(|mask| {
                let edges = edges_of(mask, &pairs);
                let terms = GraphTerms::new(model, &edges, Likelihood::Full)?;
                let mut acc: Vec<f64> = Vec::new();
                match &side {
                    None => {
                        let node_lp = model.node_log_priors(None)?;
                        let post = ExactPosterior::from_terms(model, &node_lp, &terms)?;
                        let w = post.log_evidence.exp();
                        accumulate(&mut acc, w, f(&post));
                    }
                    Some(channel) => {
                        let dim = model.support.dim();
                        let noise_dim = n * dim;
                        if noise_dim > MAX_NOISE_DIM {
                            return Err(Error::TooLargeForEnumeration(format!(
                                "side-information quadrature over {noise_dim} coordinates exceeds {MAX_NOISE_DIM}"
                            )));
                        }
                        let rule = tensor_hermite(noise_dim, self.nodes_per_dim);
                        let log_p: Vec<f64> = model.support.p().iter().map(|p| p.ln()).collect();
                        let mut x = vec![0; n];
                        let mut node_lp = vec![0.0; n * k];
                        let mut y = vec![0.0; dim];
                        for truth in 0..total {
                            decode(truth, k, &mut x);
                            let log_joint: f64 =
                                x.iter().map(|&a| log_p[a]).sum::<f64>() + terms.log_likelihood(&x, k);
                            let p_truth = log_joint.exp();
                            if p_truth == 0.0 {
                                continue;
                            }
                            for (q, &wq) in rule.weights.iter().enumerate() {
                                let z = &rule.nodes[q * noise_dim..(q + 1) * noise_dim];
                                for i in 0..n {
                                    for r in 0..dim {
                                        y[r] = channel.mean(x[i])[r] + z[i * dim + r];
                                    }
                                    for a in 0..k {
                                        node_lp[i * k + a] = log_p[a] + channel.log_likelihood(&y, a);
                                    }
                                }
                                let post = ExactPosterior::from_terms(model, &node_lp, &terms)?;
                                accumulate(&mut acc, p_truth * wq, f(&post));
                            }
                        }
                    }
                }
                Ok(acc)
            })
            .collect();
        let mut out = Vec::new();
        for part in per_graph {
            accumulate(&mut out, 1.0, part?);
        }
        Ok(out)
    }
}

fn accumulate(acc: &mut Vec<f64>, weight: f64, values: Vec<f64>) {
    if acc.len() < values.len() {
        acc.resize(values.len(), 0.0);
    }
    for (a, v) in acc.iter_mut().zip(values) {
        *a += weight * v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl PropCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, residual: (lhs - rhs).abs() }
    }
}

/// `tr(MMSE(X) − MMSE(X | data)) = (1/n) Σ_i E‖P_{X_i|data} − P_{X_i}‖²` in the
/// one-hot basis, with the expectation taken over all data.
pub fn prop1_check(integrator: &DataIntegrator<'_>) -> Result<PropCheck> {
    let p = integrator.model.support.p().to_vec();
    let prior_tr = 1.0 - linalg::dot(&p, &p);
    let v = integrator.expect(|post| vec![post.mmse_matrix_std.trace(), post.l2_gain(&p)])?;
    Ok(PropCheck::new(prior_tr - v[0], v[1]))
}

/// `tr(I − MMSE(X | data)) = (1/n) Σ_i χ²(P_{X_i, data} ‖ P_{X_i} P_data)` in the
/// whitened basis.
pub fn prop2_check(integrator: &DataIntegrator<'_>) -> Result<PropCheck> {
    let p = integrator.model.support.p().to_vec();
    let dim = integrator.model.support.dim() as f64;
    let v = integrator.expect(|post| vec![post.mmse_matrix_white.trace(), post.chi_square_gain(&p)])?;
    Ok(PropCheck::new(dim - v[0], v[1]))
}

/// Both identities for a single observed data set: the left-hand sides use the
/// per-realization posterior covariance, so they agree only in expectation,
/// except for uninformative data where both vanish.
pub fn pointwise_gains(post: &ExactPosterior, model: &SbmModel) -> [f64; 4] {
    let p = model.support.p();
    let prior_tr = 1.0 - linalg::dot(p, p);
    [
        prior_tr - post.mmse_matrix_std.trace(),
        post.l2_gain(p),
        model.support.dim() as f64 - post.mmse_matrix_white.trace(),
        post.chi_square_gain(p),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct DpiCheck {
    pub holds: bool,
    pub mmse_graph: SymMatrix,
    pub mmse_graph_side: SymMatrix,
    /// Smallest eigenvalue of `MMSE(X|G) − MMSE(X|G,Y)`.
    pub min_gap_eigenvalue: f64,
}

/// Expected whitened MMSE matrix `E[cov(X|G)]` and `E[cov(X|G,Y)]`; the check
/// holds when the second is below the first within [`DPI_TOL`].
pub fn dpi_check(model: &SbmModel, s: &PsdMatrix) -> Result<DpiCheck> {
    let dim = model.support.dim();
    let expect_matrix = |integrator: DataIntegrator<'_>| -> Result<SymMatrix> {
        let out = integrator.expect(|post| post.mmse_matrix_white.to_row_major())?;
        Ok(SymMatrix::symmetrize(&linalg::Matrix::from_row_major(dim, dim, out)?))
    };
    let without = expect_matrix(DataIntegrator::new(model, None))?;
    let with = expect_matrix(DataIntegrator::new(model, Some(s)))?;
    let gap = without.sub(&with);
    let min_gap_eigenvalue = *linalg::eig(&gap).eigenvalues.last().expect("nonempty");
    Ok(DpiCheck { holds: min_gap_eigenvalue >= -DPI_TOL, mmse_graph: without, mmse_graph_side: with, min_gap_eigenvalue })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniversalityPoint {
    pub d: f64,
    /// `(1/n) I(W; G)`, exact.
    pub info_graph: f64,
    pub info_graph_se: f64,
    /// `(1/n) I(W; Z)` by Monte Carlo.
    pub info_gauss: f64,
    pub info_gauss_se: f64,
    pub gap: f64,
    pub gap_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniversalityProbe {
    pub n: usize,
    pub p: Vec<f64>,
    pub r: SymMatrix,
    /// Signal strength of the Gaussian channel, fixed at 1.
    pub t: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub points: Vec<UniversalityPoint>,
}

/// Compares the graph channel `G_ij ~ Bern(d/n + √(d/n(1 − d/n)) W_ij)` with
/// the Gaussian channel `Z = W + ξ` for `W = n^{-1/2} X R Xᵀ`, `ξ` a standard
/// Wigner matrix, at every `d` in `d_grid`.
pub fn universality_gap(
    prob: &crate::model::ProbVector,
    r: &SymMatrix,
    n: usize,
    d_grid: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<UniversalityProbe> {
    if !(2..=MAX_UNIVERSALITY_N).contains(&n) {
        return Err(Error::TooLargeForEnumeration(format!("universality probe needs 2 ≤ n ≤ {MAX_UNIVERSALITY_N}, got {n}")));
    }
    if mc_samples < 2 {
        return Err(Error::Config("mc_samples must be at least 2".into()));
    }
    let k = prob.k();
    let total = assignment_count(n, k)?;
    let pairs = all_pairs(n);
    let graphs = 1u64 << pairs.len();
    if (graphs as f64) * (total as f64) > 5e8 {
        return Err(Error::TooLargeForEnumeration(format!("2^{} graphs × {total} assignments", pairs.len())));
    }

    let mut points = Vec::with_capacity(d_grid.len());
    for (di, &d) in d_grid.iter().enumerate() {
        let model = SbmModel::new(n, d, prob, r.clone())?;
        if !model.valid {
            let bad = model.q.as_slice().iter().copied().find(|q| !(0.0..=1.0).contains(q)).unwrap_or(f64::NAN);
            return Err(Error::BernoulliOutOfRange(bad));
        }
        let nf = n as f64;
        let info_graph = graph_information(&model, &pairs)? / nf;
        let (info_gauss, se) = gauss_information(&model, mc_samples, seed, di as u64)?;
        let (info_gauss, se) = (info_gauss / nf, se / nf);
        points.push(UniversalityPoint {
            d,
            info_graph,
            info_graph_se: 0.0,
            info_gauss,
            info_gauss_se: se,
            gap: (info_graph - info_gauss).abs(),
            gap_se: se,
        });
    }
    Ok(UniversalityProbe { n, p: prob.as_slice().to_vec(), r: r.clone(), t: 1.0, mc_samples, seed, points })
}

/// `I(X; G) = Σ_x P(x) Σ_G P(G|x) log(P(G|x) / P(G))`, which equals `I(W; G)`
/// because `G` depends on `X` only through `W`.
fn graph_information(model: &SbmModel, pairs: &[(usize, usize)]) -> Result<f64> {
    let n = model.n;
    let k = model.k();
    let total = assignment_count(n, k)?;
    let log_p: Vec<f64> = model.support.p().iter().map(|p| p.ln()).collect();
    let mut x = vec![0; n];
    let mut log_prior = Vec::with_capacity(total);
    // per assignment, the block index of every pair
    let mut blocks = Vec::with_capacity(total * pairs.len());
    for index in 0..total {
        decode(index, k, &mut x);
        log_prior.push(x.iter().map(|&a| log_p[a]).sum::<f64>());
        blocks.extend(pairs.iter().map(|&(i, j)| x[i] * k + x[j]));
    }
    let log_q: Vec<f64> = (0..k * k).map(|ab| model.q[(ab / k, ab % k)].ln()).collect();
    let log_1mq: Vec<f64> = (0..k * k).map(|ab| (-model.q[(ab / k, ab % k)]).ln_1p()).collect();
    let m = pairs.len();
    let parts: Vec<f64> = (0..1u64 << m)
        .into_par_iter()
        .map(|mask| {
            let cond: Vec<f64> = (0..total)
                .map(|xi| {
                    blocks[xi * m..(xi + 1) * m]
                        .iter()
                        .enumerate()
                        .map(|(b, &ab)| if mask >> b & 1 == 1 { log_q[ab] } else { log_1mq[ab] })
                        .sum()
                })
                .collect();
            let joint: Vec<f64> = cond.iter().zip(&log_prior).map(|(c, p)| c + p).collect();
            let log_g = log_sum_exp(&joint);
            joint
                .iter()
                .zip(&cond)
                .map(|(&j, &c)| if j == f64::NEG_INFINITY { 0.0 } else { j.exp() * (c - log_g) })
                .sum::<f64>()
        })
        .collect();
    Ok(parts.iter().sum())
}

/// Monte Carlo estimate of `I(X; Z) = E[log P(Z|X) − log P(Z)]` with the inner
/// sum over assignments done exactly. Returns the estimate and its standard
/// error.
fn gauss_information(model: &SbmModel, samples: usize, seed: u64, stream: u64) -> Result<(f64, f64)> {
    let n = model.n;
    let k = model.k();
    let total = assignment_count(n, k)?;
    let nf = n as f64;
    let scale = 1.0 / nf.sqrt();
    let support = &model.support;
    let log_p: Vec<f64> = support.p().iter().map(|p| p.ln()).collect();
    let mut x = vec![0; n];
    let mut w_all = Vec::with_capacity(total * n * n);
    let mut log_prior = Vec::with_capacity(total);
    for index in 0..total {
        decode(index, k, &mut x);
        log_prior.push(x.iter().map(|&a| log_p[a]).sum::<f64>());
        for i in 0..n {
            for j in 0..n {
                w_all.push(scale * model.r.quad_form(support.point(x[i]), support.point(x[j])));
            }
        }
    }
    // log P(Z | W) up to constants: off-diagonal variance 1, diagonal variance 2
    let log_lik = |z: &[f64], w: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            s -= 0.25 * (z[i * n + i] - w[i * n + i]).powi(2);
            for j in i + 1..n {
                s -= 0.5 * (z[i * n + j] - w[i * n + j]).powi(2);
            }
        }
        s
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let prior = rand::distributions::WeightedIndex::new(support.p()).expect("validated probabilities");
    let mut z = vec![0.0; n * n];
    let mut joint = vec![0.0; total];
    let mut values = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut truth = 0;
        for _ in 0..n {
            truth = truth * k + prior.sample(&mut rng);
        }
        let w = &w_all[truth * n * n..(truth + 1) * n * n];
        for i in 0..n {
            let g: f64 = StandardNormal.sample(&mut rng);
            z[i * n + i] = w[i * n + i] + std::f64::consts::SQRT_2 * g;
            for j in i + 1..n {
                let g: f64 = StandardNormal.sample(&mut rng);
                z[i * n + j] = w[i * n + j] + g;
                z[j * n + i] = z[i * n + j];
            }
        }
        for (xi, slot) in joint.iter_mut().enumerate() {
            *slot = log_prior[xi] + log_lik(&z, &w_all[xi * n * n..(xi + 1) * n * n]);
        }
        values.push(log_lik(&z, w) - log_sum_exp(&joint));
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok((mean, (var / m).sqrt()))
}
