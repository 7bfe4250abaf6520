//! Whitened label geometry, the `(n, d, p, R)` parameterization of the
//! degree-balanced SBM, and samplers for graphs and Gaussian side information.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, dot, Matrix, PsdMatrix, SymMatrix, MAX_DIM};

/// Smallest |eigenvalue| of `R` accepted as nonsingular.
pub const R_SINGULAR_TOL: f64 = 1e-12;

/// A distribution over `k ≥ 2` communities with strictly positive entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::InvalidProbability(format!("need at least 2 entries, got {}", p.len())));
        }
        if p.len() > MAX_DIM {
            return Err(Error::DimensionTooLarge(p.len()));
        }
        if let Some(bad) = p.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::InvalidProbability(format!("entry {bad} is not strictly positive")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProbability(format!("entries sum to {sum}")));
        }
        Ok(Self(p))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// The `k` points `μ_1, …, μ_k ∈ ℝ^{k-1}` with zero mean and identity
/// covariance under `p`.
///
/// Built by Gram–Schmidt on `{√p, e_1, …, e_{k-1}}`; the resulting basis is
/// `[√p, B]` and `μ_a = Bᵀ diag(p)^{-1/2} e_a`. Each `μ_a` (a < k) lies in the
/// span of the first `a` coordinate vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedSupport {
    prob: ProbVector,
    points: Vec<Vec<f64>>,
    basis: Matrix,
}

impl WhitenedSupport {
    pub fn new(prob: &ProbVector) -> Self {
        let k = prob.k();
        let p = prob.as_slice();
        let norm = p.iter().sum::<f64>().sqrt();
        let mut ortho: Vec<Vec<f64>> = vec![p.iter().map(|x| x.sqrt() / norm).collect()];
        for j in 0..k - 1 {
            let mut v = vec![0.0; k];
            v[j] = 1.0;
            // modified Gram–Schmidt, applied twice for orthogonality to roundoff
            for _ in 0..2 {
                for u in &ortho {
                    let c = dot(u, &v);
                    v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= c * ui);
                }
            }
            for x in v.iter_mut().take(j) {
                *x = 0.0;
            }
            let len = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= len);
            ortho.push(v);
        }
        let basis = Matrix::from_fn(k, k - 1, |i, j| ortho[j + 1][i]);
        let points = (0..k).map(|a| basis.row(a).iter().map(|b| b / p[a].sqrt()).collect()).collect();
        Self { prob: prob.clone(), points, basis }
    }

    pub fn k(&self) -> usize {
        self.prob.k()
    }

    /// Dimension of the embedding, `k - 1`.
    pub fn dim(&self) -> usize {
        self.prob.k() - 1
    }

    pub fn prob(&self) -> &ProbVector {
        &self.prob
    }

    pub fn p(&self) -> &[f64] {
        self.prob.as_slice()
    }

    pub fn point(&self, a: usize) -> &[f64] {
        &self.points[a]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// The `k × (k-1)` matrix `B`.
    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    /// Maps a whitened vector back to the standard basis: `p + P^{1/2} B μ`.
    pub fn to_standard(&self, mu: &[f64]) -> Vec<f64> {
        let bm = self.basis.mul_vec(mu);
        self.p().iter().zip(bm).map(|(p, b)| p + p.sqrt() * b).collect()
    }

    /// Maps a standard-basis vector to whitened coordinates: `Bᵀ P^{-1/2} x`.
    pub fn to_whitened(&self, x: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = x.iter().zip(self.p()).map(|(x, p)| x / p.sqrt()).collect();
        self.basis.transpose().mul_vec(&scaled)
    }

    /// Transforms a `k × k` standard-basis covariance into whitened coordinates:
    /// `Bᵀ P^{-1/2} C P^{-1/2} B`.
    pub fn covariance_to_whitened(&self, c: &SymMatrix) -> SymMatrix {
        let p = self.p();
        let t = Matrix::from_fn(self.dim(), self.k(), |i, a| self.basis[(a, i)] / p[a].sqrt());
        SymMatrix::symmetrize(&t.matmul(c.as_matrix()).matmul(&t.transpose()))
    }
}

/// Degree-balanced SBM parameterized by `(n, d, p, R)`.
#[derive(Debug, Clone)]
pub struct SbmModel {
    pub n: usize,
    pub d: f64,
    pub r: SymMatrix,
    pub support: WhitenedSupport,
    /// Edge probabilities, `k × k`.
    pub q: Matrix,
    /// All entries of `q` lie in `[0, 1]`.
    pub valid: bool,
}

impl SbmModel {
    /// `Q_ab = d/n + √(d(1 − d/n))/n · μ_aᵀ R μ_b`.
    pub fn new(n: usize, d: f64, prob: &ProbVector, r: SymMatrix) -> Result<Self> {
        if !(d > 0.0 && d < n as f64) {
            return Err(Error::DegreeOutOfRange { d, n });
        }
        let support = WhitenedSupport::new(prob);
        if r.dim() != support.dim() {
            return Err(Error::DimensionMismatch { expected: support.dim(), got: r.dim() });
        }
        let smallest = linalg::eig(&r).eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
        if smallest <= R_SINGULAR_TOL {
            return Err(Error::SingularR(smallest));
        }
        let nf = n as f64;
        let base = d / nf;
        let amp = (d * (1.0 - d / nf)).sqrt() / nf;
        let k = support.k();
        let q = Matrix::from_fn(k, k, |a, b| base + amp * r.quad_form(support.point(a), support.point(b)));
        // μ_aᵀRμ_b is symmetric only up to roundoff in the matrix-vector product
        let q = SymMatrix::symmetrize(&q).as_matrix().clone();
        let valid = q.as_slice().iter().all(|&x| (0.0..=1.0).contains(&x));
        Ok(Self { n, d, r, support, q, valid })
    }

    pub fn k(&self) -> usize {
        self.support.k()
    }

    pub fn prob(&self) -> &ProbVector {
        self.support.prob()
    }

    fn require_valid(&self) -> Result<()> {
        if self.valid {
            Ok(())
        } else {
            Err(Error::InvalidModel)
        }
    }

    /// Draws i.i.d. labels from `p`.
    pub fn sample_labels(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let dist = WeightedIndex::new(self.support.p()).expect("validated probabilities");
        (0..self.n).map(|_| dist.sample(rng)).collect()
    }

    /// Samples labels and a graph. For every block pair the edge count is drawn
    /// from a binomial and that many distinct node pairs are chosen, which is
    /// equivalent to independent Bernoulli edges.
    pub fn sample_graph(&self, seed: u64) -> Result<LabeledGraph> {
        self.require_valid()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = self.sample_labels(&mut rng);
        let k = self.k();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &a) in labels.iter().enumerate() {
            members[a].push(i);
        }
        let mut edges = Vec::new();
        for a in 0..k {
            for b in a..k {
                let (na, nb) = (members[a].len() as u64, members[b].len() as u64);
                let pairs = if a == b { na * na.saturating_sub(1) / 2 } else { na * nb };
                if pairs == 0 {
                    continue;
                }
                let prob = self.q[(a, b)];
                let count = if prob >= 1.0 {
                    pairs
                } else {
                    Binomial::new(pairs, prob).expect("probability in [0, 1]").sample(&mut rng)
                };
                if count == 0 {
                    continue;
                }
                let picked = rand::seq::index::sample(&mut rng, pairs as usize, count as usize);
                for idx in picked.iter() {
                    let (u, v) = if a == b {
                        let (i, j) = triangular_pair(idx as u64);
                        (members[a][i], members[a][j])
                    } else {
                        let idx = idx as u64;
                        (members[a][(idx / nb) as usize], members[b][(idx % nb) as usize])
                    };
                    edges.push((u.min(v), u.max(v)));
                }
            }
        }
        edges.sort_unstable();
        Ok(LabeledGraph { n: self.n, k, edges, labels, seed })
    }

    /// Reference sampler that flips one coin per node pair. O(n²); intended for
    /// small `n` as an oracle for [`SbmModel::sample_graph`].
    pub fn sample_graph_bernoulli(&self, seed: u64) -> Result<LabeledGraph> {
        self.require_valid()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = self.sample_labels(&mut rng);
        let mut edges = Vec::new();
        for j in 0..self.n {
            for i in 0..j {
                if rand::Rng::gen_bool(&mut rng, self.q[(labels[i], labels[j])]) {
                    edges.push((i, j));
                }
            }
        }
        Ok(LabeledGraph { n: self.n, k: self.k(), edges, labels, seed })
    }

    /// Gaussian side information `Y_i = S^{1/2} μ_{x_i} + N_i`.
    pub fn sample_side_info(&self, labels: &[usize], s: &PsdMatrix, seed: u64) -> Result<SideInfo> {
        if s.dim() != self.support.dim() {
            return Err(Error::DimensionMismatch { expected: self.support.dim(), got: s.dim() });
        }
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: labels.len() });
        }
        let root = linalg::psd_sqrt(s);
        let means: Vec<Vec<f64>> = self.support.points().iter().map(|mu| root.as_sym().mul_vec(mu)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = labels
            .iter()
            .map(|&a| {
                means[a]
                    .iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + z
                    })
                    .collect()
            })
            .collect();
        Ok(SideInfo { s: s.clone(), y, seed })
    }
}

/// Inverse of `idx = j(j-1)/2 + i` for `i < j`.
fn triangular_pair(idx: u64) -> (usize, usize) {
    let mut j = ((1.0 + (1.0 + 8.0 * idx as f64).sqrt()) / 2.0) as u64;
    while j * (j - 1) / 2 > idx {
        j -= 1;
    }
    while (j + 1) * j / 2 <= idx {
        j += 1;
    }
    let i = idx - j * (j - 1) / 2;
    (i as usize, j as usize)
}

/// A simple undirected graph together with the community labels (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    pub n: usize,
    pub k: usize,
    /// Sorted pairs `(i, j)` with `i < j`.
    pub edges: Vec<(usize, usize)>,
    pub labels: Vec<usize>,
    pub seed: u64,
}

impl LabeledGraph {
    /// Checks the simple-graph and label-range invariants.
    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.n {
            return Err(Error::GraphMismatch(format!("{} labels for {} nodes", self.labels.len(), self.n)));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= self.k) {
            return Err(Error::GraphMismatch(format!("label {} out of range for k = {}", l + 1, self.k)));
        }
        let mut seen = std::collections::HashSet::with_capacity(self.edges.len());
        for &(i, j) in &self.edges {
            if i >= j || j >= self.n {
                return Err(Error::GraphMismatch(format!("bad edge ({i}, {j})")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::GraphMismatch(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(())
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.n as f64
    }
}

/// Side information `Y = X S^{1/2} + N`, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SideInfo {
    pub s: PsdMatrix,
    pub y: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Per-community terms of the side-information likelihood:
/// `log φ(y − S^{1/2}μ_a) = yᵀS^{1/2}μ_a − ½μ_aᵀSμ_a + (terms free of a)`.
#[derive(Debug, Clone)]
pub struct SideChannel {
    means: Vec<Vec<f64>>,
    energy: Vec<f64>,
}

impl SideChannel {
    pub fn new(support: &WhitenedSupport, s: &PsdMatrix) -> Result<Self> {
        if s.dim() != support.dim() {
            return Err(Error::DimensionMismatch { expected: support.dim(), got: s.dim() });
        }
        let root = linalg::psd_sqrt(s);
        let means = support.points().iter().map(|mu| root.as_sym().mul_vec(mu)).collect();
        let energy = support.points().iter().map(|mu| 0.5 * s.as_sym().quad_form(mu, mu)).collect();
        Ok(Self { means, energy })
    }

    /// `S^{1/2}μ_a`, the noiseless observation of community `a`.
    pub fn mean(&self, a: usize) -> &[f64] {
        &self.means[a]
    }

    /// `yᵀS^{1/2}μ_a − ½μ_aᵀSμ_a`.
    pub fn log_likelihood(&self, y: &[f64], a: usize) -> f64 {
        dot(y, &self.means[a]) - self.energy[a]
    }
}

impl SbmModel {
    /// Row-major `n × k` table of `log p_a`, plus the side-information
    /// likelihood when present.
    pub fn node_log_priors(&self, side_info: Option<&SideInfo>) -> Result<Vec<f64>> {
        let k = self.k();
        let log_p: Vec<f64> = self.support.p().iter().map(|p| p.ln()).collect();
        let mut out = Vec::with_capacity(self.n * k);
        match side_info {
            None => (0..self.n).for_each(|_| out.extend_from_slice(&log_p)),
            Some(si) => {
                let channel = SideChannel::new(&self.support, &si.s)?;
                if si.y.len() != self.n {
                    return Err(Error::GraphMismatch(format!("side information has {} rows, expected {}", si.y.len(), self.n)));
                }
                for y in &si.y {
                    if y.len() != self.support.dim() {
                        return Err(Error::DimensionMismatch { expected: self.support.dim(), got: y.len() });
                    }
                    out.extend((0..k).map(|a| log_p[a] + channel.log_likelihood(y, a)));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn check_moments(ws: &WhitenedSupport, tol: f64) {
        let dim = ws.dim();
        let mut mean = vec![0.0; dim];
        let mut cov = Matrix::zeros(dim, dim);
        for (a, &pa) in ws.p().iter().enumerate() {
            let mu = ws.point(a);
            for i in 0..dim {
                mean[i] += pa * mu[i];
                for j in 0..dim {
                    cov[(i, j)] += pa * mu[i] * mu[j];
                }
            }
        }
        assert!(mean.iter().all(|m| m.abs() < tol), "mean {mean:?}");
        assert!(cov.sub(&Matrix::identity(dim)).max_abs() < tol, "cov {cov:?}");
        for a in 0..dim {
            for c in (a + 1)..dim {
                assert!(ws.point(a)[c].abs() < tol);
            }
        }
    }

    #[test]
    fn binary_uniform_is_plus_minus_one() {
        let ws = WhitenedSupport::new(&ProbVector::uniform(2).unwrap());
        assert!((ws.point(0)[0] - 1.0).abs() < 1e-15);
        assert!((ws.point(1)[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn three_community_span_property() {
        let ws = WhitenedSupport::new(&ProbVector::new(vec![0.6, 0.3, 0.1]).unwrap());
        check_moments(&ws, 1e-12);
        assert_eq!(ws.point(0)[1], 0.0);
        assert!(ws.point(0)[0] > 0.0);
    }

    #[test]
    fn round_trip_to_standard_basis() {
        let ws = WhitenedSupport::new(&ProbVector::new(vec![0.5, 0.2, 0.2, 0.1]).unwrap());
        for a in 0..4 {
            let e = ws.to_standard(ws.point(a));
            for (b, x) in e.iter().enumerate() {
                assert!((x - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
            let back = ws.to_whitened(&e);
            assert!(back.iter().zip(ws.point(a)).all(|(x, y)| (x - y).abs() < 1e-10));
        }
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.5, 0.0]).is_err());
        assert!(ProbVector::new(vec![0.7, 0.7]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 0.5]).is_err());
    }

    #[test]
    fn model_rejects_singular_r_and_bad_degree() {
        let p = ProbVector::uniform(3).unwrap();
        assert!(matches!(SbmModel::new(100, 5.0, &p, SymMatrix::zeros(2)), Err(Error::SingularR(_))));
        assert!(matches!(SbmModel::new(100, 0.0, &p, SymMatrix::identity(2)), Err(Error::DegreeOutOfRange { .. })));
        assert!(matches!(SbmModel::new(100, 100.0, &p, SymMatrix::identity(2)), Err(Error::DegreeOutOfRange { .. })));
        assert!(SbmModel::new(100, 5.0, &p, SymMatrix::identity(3)).is_err());
    }

    #[test]
    fn tiny_signal_is_erdos_renyi() {
        let p = ProbVector::uniform(3).unwrap();
        let m = SbmModel::new(1000, 10.0, &p, SymMatrix::identity(2).scale(1e-6)).unwrap();
        assert!(m.q.as_slice().iter().all(|q| (q - 0.01).abs() < 1e-8), "{:?}", m.q);
    }

    #[test]
    fn binary_q_entries() {
        let (n, d, lam) = (1000usize, 20.0, 1.3);
        let p = ProbVector::uniform(2).unwrap();
        let m = SbmModel::new(n, d, &p, SymMatrix::diag(&[lam])).unwrap();
        let amp = (d * (1.0 - d / n as f64)).sqrt() * lam / n as f64;
        assert!((m.q[(0, 0)] - (d / n as f64 + amp)).abs() < 1e-15);
        assert!((m.q[(0, 1)] - (d / n as f64 - amp)).abs() < 1e-15);
        assert!(m.valid);
    }

    #[test]
    fn skewed_prior_has_invalid_region() {
        let p = ProbVector::new(vec![0.6, 0.3, 0.1]).unwrap();
        let ok = SbmModel::new(100_000, 30.0, &p, SymMatrix::diag(&[1.0, 1.0])).unwrap();
        assert!(ok.valid);
        let bad = SbmModel::new(100_000, 30.0, &p, SymMatrix::diag(&[0.5, 2.8])).unwrap();
        assert!(!bad.valid);
        assert!(matches!(bad.sample_graph(1), Err(Error::InvalidModel)));
    }

    #[test]
    fn tiny_complete_block_rejected_as_invalid() {
        // n = 2 with d close to n pushes the within-block probability past 1
        let p = ProbVector::uniform(2).unwrap();
        let m = SbmModel::new(2, 1.5, &p, SymMatrix::diag(&[3.0])).unwrap();
        assert!(!m.valid);
        assert!(m.sample_graph(0).is_err());
    }

    #[test]
    fn triangular_decoding() {
        let mut idx = 0u64;
        for j in 1..200usize {
            for i in 0..j {
                assert_eq!(triangular_pair(idx), (i, j));
                idx += 1;
            }
        }
    }

    #[test]
    fn same_seed_same_graph() {
        let p = ProbVector::uniform(3).unwrap();
        let m = SbmModel::new(2000, 10.0, &p, SymMatrix::diag(&[1.2, 0.8])).unwrap();
        let g1 = m.sample_graph(42).unwrap();
        let g2 = m.sample_graph(42).unwrap();
        assert_eq!(g1, g2);
        g1.validate().unwrap();
        assert_ne!(g1, m.sample_graph(43).unwrap());
    }

    #[test]
    fn mean_degree_concentrates() {
        let p = ProbVector::new(vec![0.6, 0.3, 0.1]).unwrap();
        let (n, d) = (10_000usize, 30.0);
        let m = SbmModel::new(n, d, &p, SymMatrix::diag(&[0.9, 0.95])).unwrap();
        for seed in 0..3 {
            let g = m.sample_graph(seed).unwrap();
            // binomial concentration: 3·√(d/n)·√n
            assert!((g.mean_degree() - d).abs() < 3.0 * (d / n as f64).sqrt() * (n as f64).sqrt());
        }
    }

    #[test]
    fn side_info_zero_snr_is_noise_and_deterministic() {
        let p = ProbVector::uniform(3).unwrap();
        let m = SbmModel::new(500, 10.0, &p, SymMatrix::identity(2)).unwrap();
        let g = m.sample_graph(1).unwrap();
        let s0 = m.sample_side_info(&g.labels, &PsdMatrix::zeros(2), 9).unwrap();
        let s0b = m.sample_side_info(&g.labels, &PsdMatrix::zeros(2), 9).unwrap();
        assert_eq!(s0, s0b);
        let mean: f64 = s0.y.iter().map(|r| r[0]).sum::<f64>() / 500.0;
        let var: f64 = s0.y.iter().map(|r| r[0] * r[0]).sum::<f64>() / 500.0;
        assert!(mean.abs() < 4.0 / 500f64.sqrt());
        assert!((var - 1.0).abs() < 0.3);
        assert!(m.sample_side_info(&g.labels, &PsdMatrix::zeros(3), 9).is_err());
    }

    #[test]
    fn strong_side_info_decodes_labels() {
        let p = ProbVector::uniform(3).unwrap();
        let m = SbmModel::new(2000, 10.0, &p, SymMatrix::identity(2)).unwrap();
        let g = m.sample_graph(2).unwrap();
        let mut prev = 1.0;
        for s in [1.0, 16.0, 400.0] {
            let si = m.sample_side_info(&g.labels, &PsdMatrix::scaled_identity(2, s), 3).unwrap();
            let root = s.sqrt();
            let errors = si
                .y
                .iter()
                .zip(&g.labels)
                .filter(|(y, &l)| {
                    let best = (0..3)
                        .min_by(|&a, &b| {
                            let da: f64 = y.iter().zip(m.support.point(a)).map(|(y, u)| (y - root * u).powi(2)).sum();
                            let db: f64 = y.iter().zip(m.support.point(b)).map(|(y, u)| (y - root * u).powi(2)).sum();
                            da.partial_cmp(&db).unwrap()
                        })
                        .unwrap();
                    best != l
                })
                .count() as f64
                / 2000.0;
            assert!(errors <= prev);
            prev = errors;
        }
        assert!(prev < 1e-3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn whitened_moments(raw in proptest::collection::vec(0.01f64..1.0, 2..=6)) {
                let s: f64 = raw.iter().sum();
                let mut p: Vec<f64> = raw.iter().map(|x| x / s).collect();
                let last = 1.0 - p[..p.len() - 1].iter().sum::<f64>();
                *p.last_mut().unwrap() = last;
                let ws = WhitenedSupport::new(&ProbVector::new(p).unwrap());
                check_moments(&ws, 1e-10);
            }

            #[test]
            fn degree_balance(l1 in -2.0f64..2.0, l2 in -2.0f64..2.0, off in -1.0f64..1.0, d in 1.0f64..50.0) {
                prop_assume!(l1.abs() > 0.05 && l2.abs() > 0.05);
                let p = ProbVector::new(vec![0.5, 0.3, 0.2]).unwrap();
                let r = SymMatrix::from_row_major(2, vec![l1, off, off, l2]).unwrap();
                prop_assume!(r.inverse(1e-6).is_ok());
                let m = SbmModel::new(1000, d, &p, r).unwrap();
                let qp = m.q.mul_vec(p.as_slice());
                for x in qp {
                    prop_assert!((x - d / 1000.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn block_edge_frequencies_match_q() {
        let p = ProbVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let n = 500usize;
        let m = SbmModel::new(n, 20.0, &p, SymMatrix::diag(&[1.5, -1.2])).unwrap();
        assert!(m.valid);
        let k = 3;
        let mut edges = Matrix::zeros(k, k);
        let mut pairs = Matrix::zeros(k, k);
        for seed in 0..200 {
            let g = m.sample_graph(1000 + seed).unwrap();
            let mut counts = vec![0f64; k];
            g.labels.iter().for_each(|&l| counts[l] += 1.0);
            for a in 0..k {
                for b in a..k {
                    pairs[(a, b)] += if a == b { counts[a] * (counts[a] - 1.0) / 2.0 } else { counts[a] * counts[b] };
                }
            }
            for &(i, j) in &g.edges {
                let (a, b) = (g.labels[i].min(g.labels[j]), g.labels[i].max(g.labels[j]));
                edges[(a, b)] += 1.0;
            }
        }
        for a in 0..k {
            for b in a..k {
                let q = m.q[(a, b)];
                let expected = pairs[(a, b)] * q;
                let sd = (pairs[(a, b)] * q * (1.0 - q)).sqrt();
                assert!((edges[(a, b)] - expected).abs() < 4.0 * sd, "block ({a},{b})");
            }
        }
    }

    #[test]
    fn fast_and_naive_samplers_agree_in_distribution() {
        let p = ProbVector::uniform(2).unwrap();
        let m = SbmModel::new(300, 8.0, &p, SymMatrix::diag(&[1.5])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (mut fast, mut slow) = (0.0, 0.0);
        let trials = 100;
        for _ in 0..trials {
            let s: u64 = rng.gen();
            fast += m.sample_graph(s).unwrap().edges.len() as f64;
            slow += m.sample_graph_bernoulli(s).unwrap().edges.len() as f64;
        }
        let expected = 8.0 * 300.0 / 2.0;
        let sd = (expected / trials as f64).sqrt() * 3.0;
        assert!((fast / trials as f64 - expected).abs() < 4.0 * sd);
        assert!((slow / trials as f64 - expected).abs() < 4.0 * sd);
    }
}
