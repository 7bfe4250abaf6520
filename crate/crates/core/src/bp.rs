//! Belief propagation for the sparse SBM.
//!
//! Messages live on directed edges; updates are combined in the log domain. Non-edges
//! are summarized by a per-community external field
//! `h_a = Σ_k Σ_b Q_ab ψ^k_b`, updated after every node and recomputed from
//! scratch at the end of each sweep. Nodes are visited
//! asynchronously in a fresh random order every sweep.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::model::{LabeledGraph, SbmModel, SideInfo, WhitenedSupport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpConfig {
    pub n_inits: usize,
    /// Weight of the previous message in each update.
    pub damping: f64,
    pub max_sweeps: usize,
    /// Convergence threshold on the largest message change in a sweep.
    pub msg_tol: f64,
    pub seed: u64,
    /// Include the non-edge factors through the external field. Without it the
    /// likelihood only involves observed edges, for which BP is exact on trees.
    pub non_edge_field: bool,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self { n_inits: 15, damping: 0.2, max_sweeps: 300, msg_tol: 1e-5, seed: 0, non_edge_field: true }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_inits == 0 {
            return Err(Error::Config("n_inits must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        if self.msg_tol.is_nan() || self.msg_tol <= 0.0 {
            return Err(Error::Config("msg_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Converged (or last) state of a single BP run.
#[derive(Debug, Clone)]
pub struct BpState {
    k: usize,
    /// `offsets[i]..offsets[i + 1]` are the outgoing slots of node `i`.
    offsets: Vec<usize>,
    targets: Vec<usize>,
    /// Message `i → targets[e]` stored at `messages[e * k..(e + 1) * k]`.
    messages: Vec<f64>,
    pub external_field: Vec<f64>,
    /// Row-major `n × k` marginals.
    marginals: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

impl BpState {
    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn marginal(&self, i: usize) -> &[f64] {
        &self.marginals[i * self.k..(i + 1) * self.k]
    }

    pub fn marginals(&self) -> Vec<Vec<f64>> {
        self.marginals.chunks(self.k).map(|c| c.to_vec()).collect()
    }

    /// Message from `i` to `j`, if `(i, j)` is an edge.
    pub fn message(&self, i: usize, j: usize) -> Option<&[f64]> {
        (self.offsets[i]..self.offsets[i + 1])
            .find(|&e| self.targets[e] == j)
            .map(|e| &self.messages[e * self.k..(e + 1) * self.k])
    }

    pub fn num_messages(&self) -> usize {
        self.targets.len()
    }

    pub fn all_messages(&self) -> impl Iterator<Item = &[f64]> {
        self.messages.chunks(self.k)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BpResult {
    pub chosen_init: usize,
    pub predicted_mse: f64,
    pub empirical_mse_trace: f64,
    pub empirical_mse_matrix: SymMatrix,
    pub converged: bool,
    pub sweeps_used: usize,
    /// Predicted MSE of every initialization, in order.
    pub init_predicted_mse: Vec<f64>,
    #[serde(skip)]
    pub marginals: Vec<Vec<f64>>,
}

fn check_graph(graph: &LabeledGraph, model: &SbmModel) -> Result<()> {
    if graph.n != model.n {
        return Err(Error::GraphMismatch(format!("graph has n = {}, model has n = {}", graph.n, model.n)));
    }
    if graph.k != model.k() {
        return Err(Error::GraphMismatch(format!("graph has k = {}, model has k = {}", graph.k, model.k())));
    }
    graph.validate()
}

fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    x.iter_mut().for_each(|v| *v /= total);
}

fn dirichlet_one(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut total = 0.0;
    for x in out.iter_mut() {
        let e: f64 = Exp1.sample(rng);
        *x = e;
        total += e;
    }
    for x in out.iter_mut() {
        *x /= total;
    }
}

/// Runs BP once from a Dirichlet(1) initialization drawn from `rng`.
pub fn bp_single(
    graph: &LabeledGraph,
    model: &SbmModel,
    config: &BpConfig,
    side_info: Option<&SideInfo>,
    rng: &mut ChaCha8Rng,
) -> Result<BpState> {
    config.validate()?;
    check_graph(graph, model)?;
    let n = graph.n;
    let k = model.k();
    let prior = model.node_log_priors(side_info)?;

    let adj = graph.adjacency();
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for nb in &adj {
        offsets.push(offsets.last().unwrap() + nb.len());
    }
    let targets: Vec<usize> = adj.iter().flatten().copied().collect();
    let mut reverse = vec![0; targets.len()];
    for i in 0..n {
        for e in offsets[i]..offsets[i + 1] {
            let j = targets[e];
            reverse[e] = (offsets[j]..offsets[j + 1]).find(|&f| targets[f] == i).expect("symmetric adjacency");
        }
    }

    let nf = n as f64;
    let c: Vec<f64> = (0..k * k).map(|ab| nf * model.q[(ab / k, ab % k)]).collect();
    let q: Vec<f64> = (0..k * k).map(|ab| model.q[(ab / k, ab % k)]).collect();

    let mut messages = vec![0.0; targets.len() * k];
    for m in messages.chunks_mut(k) {
        dirichlet_one(rng, m);
    }
    let mut marginals = vec![0.0; n * k];
    for m in marginals.chunks_mut(k) {
        dirichlet_one(rng, m);
    }

    let compute_field = |marginals: &[f64]| -> Vec<f64> {
        let mut totals = vec![0.0; k];
        for m in marginals.chunks(k) {
            for (t, v) in totals.iter_mut().zip(m) {
                *t += v;
            }
        }
        (0..k).map(|a| (0..k).map(|b| q[a * k + b] * totals[b]).sum()).collect()
    };
    let mut field = if config.non_edge_field { compute_field(&marginals) } else { vec![0.0; k] };

    let mut order: Vec<usize> = (0..n).collect();
    let mut scratch_in: Vec<f64> = Vec::new();
    let mut prefix: Vec<f64> = Vec::new();
    let mut suffix: Vec<f64> = Vec::new();
    let mut out = vec![0.0; k];
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < config.max_sweeps {
        sweeps += 1;
        order.shuffle(rng);
        let mut max_change: f64 = 0.0;
        for &i in &order {
            let (lo, hi) = (offsets[i], offsets[i + 1]);
            let deg = hi - lo;
            // log Σ_b c_ab ψ^{j→i}_b for every neighbor j
            scratch_in.clear();
            for e in lo..hi {
                let incoming = &messages[reverse[e] * k..(reverse[e] + 1) * k];
                for a in 0..k {
                    let row = &c[a * k..(a + 1) * k];
                    scratch_in.push(row.iter().zip(incoming).map(|(c, m)| c * m).sum::<f64>().ln());
                }
            }
            prefix.clear();
            prefix.resize((deg + 1) * k, 0.0);
            suffix.clear();
            suffix.resize((deg + 1) * k, 0.0);
            for s in 0..deg {
                for a in 0..k {
                    prefix[(s + 1) * k + a] = prefix[s * k + a] + scratch_in[s * k + a];
                }
            }
            for s in (0..deg).rev() {
                for a in 0..k {
                    suffix[s * k + a] = suffix[(s + 1) * k + a] + scratch_in[s * k + a];
                }
            }
            let base: Vec<f64> = (0..k).map(|a| prior[i * k + a] - field[a]).collect();
            for s in 0..deg {
                for a in 0..k {
                    out[a] = base[a] + prefix[s * k + a] + suffix[(s + 1) * k + a];
                }
                softmax_in_place(&mut out);
                let slot = &mut messages[(lo + s) * k..(lo + s + 1) * k];
                for a in 0..k {
                    let new = (1.0 - config.damping) * out[a] + config.damping * slot[a];
                    max_change = max_change.max((new - slot[a]).abs());
                    slot[a] = new;
                }
                let total: f64 = slot.iter().sum();
                slot.iter_mut().for_each(|x| *x /= total);
            }
            for a in 0..k {
                out[a] = base[a] + prefix[deg * k + a];
            }
            softmax_in_place(&mut out);
            if config.non_edge_field {
                for a in 0..k {
                    field[a] += (0..k).map(|b| q[a * k + b] * (out[b] - marginals[i * k + b])).sum::<f64>();
                }
            }
            marginals[i * k..(i + 1) * k].copy_from_slice(&out);
        }
        if config.non_edge_field {
            // resynchronize to keep rounding drift out of the running field
            field = compute_field(&marginals);
        }
        if max_change < config.msg_tol {
            converged = true;
            break;
        }
    }

    Ok(BpState { k, offsets, targets, messages, external_field: field, marginals, converged, sweeps })
}

/// Runs `n_inits` random initializations and keeps the one with the lowest
/// predicted MSE. The empirical MSE is measured against `graph.labels`.
pub fn bp_run(graph: &LabeledGraph, model: &SbmModel, config: &BpConfig, side_info: Option<&SideInfo>) -> Result<BpResult> {
    config.validate()?;
    check_graph(graph, model)?;
    let states: Vec<BpState> = (0..config.n_inits)
        .into_par_iter()
        .map(|init| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(init as u64);
            bp_single(graph, model, config, side_info, &mut rng)
        })
        .collect::<Result<_>>()?;
    let predicted: Vec<f64> = states.iter().map(|s| predicted_mse(&s.marginals(), &model.support)).collect();
    let chosen = predicted
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v < predicted[best] { i } else { best });
    let state = &states[chosen];
    let marginals = state.marginals();
    let (trace, matrix) = empirical_mse(&marginals, &graph.labels, model)?;
    Ok(BpResult {
        chosen_init: chosen,
        predicted_mse: predicted[chosen],
        empirical_mse_trace: trace,
        empirical_mse_matrix: matrix,
        converged: state.converged,
        sweeps_used: state.sweeps,
        init_predicted_mse: predicted,
        marginals,
    })
}

/// `(1/n) Σ_i [Σ_a b_ia ‖μ_a‖² − ‖Σ_a b_ia μ_a‖²]`, the posterior variance the
/// marginals imply about themselves.
pub fn predicted_mse(marginals: &[Vec<f64>], support: &WhitenedSupport) -> f64 {
    let norms: Vec<f64> = support.points().iter().map(|mu| linalg::dot(mu, mu)).collect();
    let dim = support.dim();
    let total: f64 = marginals
        .iter()
        .map(|b| {
            let mut mean = vec![0.0; dim];
            let mut second = 0.0;
            for (a, &w) in b.iter().enumerate() {
                second += w * norms[a];
                for (m, x) in mean.iter_mut().zip(support.point(a)) {
                    *m += w * x;
                }
            }
            second - linalg::dot(&mean, &mean)
        })
        .sum();
    total / marginals.len().max(1) as f64
}

/// Label permutations preserving both `p` and `Q`.
pub fn admissible_permutations(model: &SbmModel) -> Vec<Vec<usize>> {
    let k = model.k();
    let p = model.support.p();
    let scale = model.q.max_abs().max(f64::MIN_POSITIVE);
    let close = |x: f64, y: f64, s: f64| (x - y).abs() <= 1e-9 * s;
    let mut out = Vec::new();
    let mut perm = Vec::with_capacity(k);
    let mut used = vec![false; k];
    fn extend(
        perm: &mut Vec<usize>,
        used: &mut [bool],
        out: &mut Vec<Vec<usize>>,
        ok: &dyn Fn(&[usize], usize) -> bool,
        k: usize,
    ) {
        if perm.len() == k {
            out.push(perm.clone());
            return;
        }
        for c in 0..k {
            if !used[c] && ok(perm, c) {
                used[c] = true;
                perm.push(c);
                extend(perm, used, out, ok, k);
                perm.pop();
                used[c] = false;
            }
        }
    }
    let ok = |perm: &[usize], c: usize| -> bool {
        let a = perm.len();
        close(p[c], p[a], 1.0)
            && close(model.q[(c, c)], model.q[(a, a)], scale)
            && perm.iter().enumerate().all(|(b, &pb)| close(model.q[(c, pb)], model.q[(a, b)], scale))
    };
    extend(&mut perm, &mut used, &mut out, &ok, k);
    out
}

/// Whitened-basis MSE matrix `(1/n) Σ e_i e_iᵀ` with
/// `e_i = μ_{x_i} − Σ_a b_{i,π(a)} μ_a`, minimized in trace over admissible
/// permutations `π`.
pub fn empirical_mse(marginals: &[Vec<f64>], labels: &[usize], model: &SbmModel) -> Result<(f64, SymMatrix)> {
    if marginals.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: marginals.len() });
    }
    let support = &model.support;
    let k = support.k();
    let dim = support.dim();
    if let Some(b) = marginals.iter().find(|b| b.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, got: b.len() });
    }
    let mut best: Option<(f64, SymMatrix)> = None;
    for perm in admissible_permutations(model) {
        let mut acc = vec![0.0; dim * dim];
        for (b, &x) in marginals.iter().zip(labels) {
            let mut e = support.point(x).to_vec();
            for (a, &w) in b.iter().enumerate() {
                for (ei, m) in e.iter_mut().zip(support.point(perm[a])) {
                    *ei -= w * m;
                }
            }
            for r in 0..dim {
                for c in 0..dim {
                    acc[r * dim + c] += e[r] * e[c];
                }
            }
        }
        let nf = labels.len().max(1) as f64;
        let m = SymMatrix::from_fn(dim, |r, c| acc[r * dim + c] / nf);
        let tr = m.trace();
        if best.as_ref().is_none_or(|(t, _)| tr < *t) {
            best = Some((tr, m));
        }
    }
    Ok(best.expect("identity permutation is always admissible"))
}
