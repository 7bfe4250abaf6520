//! The decoupled scalar channel `Y = S^{1/2} X + N` with `X` drawn from the
//! whitened support.
//!
//! [`ChannelEvaluator`] computes the mutual information `I_X(S) = I(X; Y)` and
//! the MMSE matrix `M_X(S) = E[cov(X | Y)]`. Expectations over the label are
//! exact sums weighted by `p`; the Gaussian noise is integrated either with a
//! tensor Gauss–Hermite rule or with a fixed bank of Monte Carlo draws that is
//! reused for every `S` (common random numbers).

use std::num::NonZeroUsize;

use gauss_quad::GaussHermite;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot, PsdMatrix, SymMatrix};
use crate::model::WhitenedSupport;

pub const MIN_QUADRATURE_NODES: usize = 20;
pub const MIN_MC_SAMPLES: usize = 10_000;
pub const MAX_QUADRATURE_DIM: usize = 3;

/// How the Gaussian expectation is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    Quadrature { nodes_per_dim: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Method {
    /// 40 nodes per dimension up to dimension 2, 24 in dimension 3.
    pub fn default_quadrature(dim: usize) -> Self {
        Method::Quadrature { nodes_per_dim: if dim <= 2 { 40 } else { 24 } }
    }
}

/// An estimate together with its standard error (Monte Carlo) or a
/// quadrature truncation estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelOutput<T> {
    pub value: T,
    pub error: f64,
}

/// Everything one pass over the noise bank produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEval {
    pub info: f64,
    /// `M_X(S)`, symmetrized and projected onto the PSD cone.
    pub mmse: SymMatrix,
    /// `E[m mᵀ] = I − M_X(S)` where `m` is the posterior mean.
    pub gain: SymMatrix,
    pub info_error: f64,
    pub mmse_error: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Rule {
    /// Noise vectors, `dim` consecutive entries each.
    pub(crate) nodes: Vec<f64>,
    pub(crate) weights: Vec<f64>,
}

struct Moments {
    info: f64,
    gain: SymMatrix,
    info_se: f64,
    gain_se: f64,
}

#[derive(Debug, Clone)]
pub struct ChannelEvaluator {
    support: WhitenedSupport,
    method: Method,
    rule: Rule,
    /// Coarser quadrature rule; the difference to `rule` is the reported
    /// truncation estimate.
    coarse: Option<Rule>,
}

impl ChannelEvaluator {
    pub fn new(support: WhitenedSupport, method: Method) -> Result<Self> {
        let dim = support.dim();
        let (rule, coarse) = match method {
            Method::Quadrature { nodes_per_dim } => {
                if dim > MAX_QUADRATURE_DIM {
                    return Err(Error::QuadratureDimension(dim));
                }
                if nodes_per_dim < MIN_QUADRATURE_NODES {
                    return Err(Error::InvalidEvaluator(format!(
                        "quadrature needs at least {MIN_QUADRATURE_NODES} nodes per dimension, got {nodes_per_dim}"
                    )));
                }
                let coarse = (3 * nodes_per_dim).div_ceil(4);
                (tensor_hermite(dim, nodes_per_dim), Some(tensor_hermite(dim, coarse)))
            }
            Method::MonteCarlo { samples, seed } => {
                if samples < MIN_MC_SAMPLES {
                    return Err(Error::InvalidEvaluator(format!(
                        "Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let nodes = (0..samples * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                (Rule { nodes, weights: vec![1.0 / samples as f64; samples] }, None)
            }
        };
        Ok(Self { support, method, rule, coarse })
    }

    /// Quadrature with the default node count for the support's dimension.
    pub fn quadrature(support: WhitenedSupport) -> Result<Self> {
        let method = Method::default_quadrature(support.dim());
        Self::new(support, method)
    }

    pub fn support(&self) -> &WhitenedSupport {
        &self.support
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self.method, Method::MonteCarlo { .. })
    }

    fn check_dim(&self, s: &PsdMatrix) -> Result<()> {
        if s.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: s.dim() });
        }
        Ok(())
    }

    /// `E[X | Y = y]` for the channel with SNR matrix `s`.
    pub fn posterior_mean(&self, s: &PsdMatrix, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(s)?;
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: y.len() });
        }
        let root = linalg::psd_sqrt(s);
        let ws = &self.support;
        let logits: Vec<f64> = (0..ws.k())
            .map(|b| {
                let smu = root.as_sym().mul_vec(ws.point(b));
                ws.p()[b].ln() + dot(y, &smu) - 0.5 * dot(&smu, &smu)
            })
            .collect();
        let w = softmax(&logits);
        let mut m = vec![0.0; self.dim()];
        for (b, wb) in w.iter().enumerate() {
            m.iter_mut().zip(ws.point(b)).for_each(|(mi, u)| *mi += wb * u);
        }
        Ok(m)
    }

    pub fn mutual_information(&self, s: &PsdMatrix) -> Result<ChannelOutput<f64>> {
        let e = self.evaluate(s)?;
        Ok(ChannelOutput { value: e.info, error: e.info_error })
    }

    pub fn mmse_matrix(&self, s: &PsdMatrix) -> Result<ChannelOutput<SymMatrix>> {
        let e = self.evaluate(s)?;
        Ok(ChannelOutput { value: e.mmse, error: e.mmse_error })
    }

    /// Computes `I_X(S)` and `M_X(S)` in a single pass, with error estimates.
    pub fn evaluate(&self, s: &PsdMatrix) -> Result<ChannelEval> {
        self.check_dim(s)?;
        let fine = self.moments(s, &self.rule);
        let (info_error, mmse_error) = match &self.coarse {
            Some(coarse) => {
                let c = self.moments(s, coarse);
                ((fine.info - c.info).abs(), fine.gain.max_abs_diff(&c.gain))
            }
            None => (fine.info_se, fine.gain_se),
        };
        Ok(self.finish(fine, info_error, mmse_error))
    }

    /// Like [`evaluate`](Self::evaluate) but skips the quadrature truncation
    /// estimate (reported as zero). Monte Carlo standard errors are kept.
    pub fn evaluate_fast(&self, s: &PsdMatrix) -> Result<ChannelEval> {
        self.check_dim(s)?;
        let fine = self.moments(s, &self.rule);
        let (ie, me) = (fine.info_se, fine.gain_se);
        Ok(self.finish(fine, ie, me))
    }

    fn finish(&self, m: Moments, info_error: f64, mmse_error: f64) -> ChannelEval {
        let dim = self.dim();
        // law of total variance: cov(X) = I in whitened coordinates
        let mmse = PsdMatrix::project(&SymMatrix::identity(dim).sub(&m.gain)).into_sym();
        ChannelEval { info: m.info.max(0.0), mmse, gain: m.gain, info_error, mmse_error }
    }

    fn moments(&self, s: &PsdMatrix, rule: &Rule) -> Moments {
        let ws = &self.support;
        let (k, dim) = (ws.k(), ws.dim());
        let p = ws.p();
        let root = linalg::psd_sqrt(s);
        let smu: Vec<Vec<f64>> = ws.points().iter().map(|mu| root.as_sym().mul_vec(mu)).collect();

        // Per true label a and candidate b the log weight is
        //   ln p_b − zᵀ(s μ_a − s μ_b) − ½‖s μ_a − s μ_b‖²
        let mut shift = vec![vec![0.0; dim]; k * k];
        let mut offset = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                let v: Vec<f64> = smu[a].iter().zip(&smu[b]).map(|(x, y)| x - y).collect();
                offset[a * k + b] = p[b].ln() - 0.5 * dot(&v, &v);
                shift[a * k + b] = v;
            }
        }

        let mc = self.is_monte_carlo();
        let mut info = 0.0;
        let mut info_sq = 0.0;
        let mut gain = vec![0.0; dim * dim];
        let mut gain_sq = vec![0.0; dim * dim];
        let mut logits = vec![0.0; k];
        let mut m = vec![0.0; dim];
        let mut sample_gain = vec![0.0; dim * dim];

        for (z, &w) in rule.nodes.chunks_exact(dim).zip(&rule.weights) {
            let mut sample_info = 0.0;
            sample_gain.iter_mut().for_each(|x| *x = 0.0);
            for a in 0..k {
                for b in 0..k {
                    logits[b] = offset[a * k + b] - dot(z, &shift[a * k + b]);
                }
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for l in logits.iter_mut() {
                    *l = (*l - max).exp();
                    total += *l;
                }
                sample_info -= p[a] * (max + total.ln());
                m.iter_mut().for_each(|x| *x = 0.0);
                for b in 0..k {
                    let wb = logits[b] / total;
                    m.iter_mut().zip(ws.point(b)).for_each(|(mi, u)| *mi += wb * u);
                }
                for i in 0..dim {
                    for j in 0..dim {
                        sample_gain[i * dim + j] += p[a] * m[i] * m[j];
                    }
                }
            }
            info += w * sample_info;
            for (g, sg) in gain.iter_mut().zip(&sample_gain) {
                *g += w * sg;
            }
            if mc {
                info_sq += w * sample_info * sample_info;
                for (g, sg) in gain_sq.iter_mut().zip(&sample_gain) {
                    *g += w * sg * sg;
                }
            }
        }

        let (info_se, gain_se) = if mc {
            let n = rule.weights.len() as f64;
            let info_se = ((info_sq - info * info).max(0.0) / (n - 1.0)).sqrt();
            let gain_se = gain
                .iter()
                .zip(&gain_sq)
                .map(|(g, g2)| ((g2 - g * g).max(0.0) / (n - 1.0)).sqrt())
                .fold(0.0, f64::max);
            (info_se, gain_se)
        } else {
            (0.0, 0.0)
        };
        let gain = SymMatrix::symmetrize(&linalg::Matrix::from_row_major(dim, dim, gain).expect("square"));
        Moments { info, gain, info_se, gain_se }
    }

    /// Central finite differences of `I_X` along each symmetric coordinate of
    /// `S`, compared against `½ M_X(S)`. Returns the largest discrepancy.
    pub fn gradient_check(&self, s: &PsdMatrix, h: f64) -> Result<f64> {
        self.check_dim(s)?;
        let min_eig = s.min_eigenvalue();
        if min_eig <= 10.0 * h {
            return Err(Error::ConeBoundary { step: h, min_eig });
        }
        let dim = self.dim();
        let mmse = self.evaluate_fast(s)?.mmse;
        let mut worst = 0.0_f64;
        for i in 0..dim {
            for j in 0..=i {
                let dir = SymMatrix::from_fn(dim, |a, b| if (a, b) == (i, j) || (a, b) == (j, i) { 1.0 } else { 0.0 });
                let plus = PsdMatrix::new(s.as_sym().lincomb(1.0, &dir, h))?;
                let minus = PsdMatrix::new(s.as_sym().lincomb(1.0, &dir, -h))?;
                let fd = (self.evaluate_fast(&plus)?.info - self.evaluate_fast(&minus)?.info) / (2.0 * h);
                // dI = ½ tr(M dS); an off-diagonal coordinate moves two entries
                let expected = if i == j { 0.5 * mmse.get(i, i) } else { mmse.get(i, j) };
                worst = worst.max((fd - expected).abs());
            }
        }
        Ok(worst)
    }

    /// Second difference of `I_X` along direction `dir`:
    /// `(I(S + h D) − 2 I(S) + I(S − h D)) / h²`.
    pub fn directional_curvature(&self, s: &PsdMatrix, dir: &SymMatrix, h: f64) -> Result<f64> {
        let plus = PsdMatrix::new(s.as_sym().lincomb(1.0, dir, h))?;
        let minus = PsdMatrix::new(s.as_sym().lincomb(1.0, dir, -h))?;
        let mid = self.evaluate_fast(s)?.info;
        Ok((self.evaluate_fast(&plus)?.info - 2.0 * mid + self.evaluate_fast(&minus)?.info) / (h * h))
    }
}

/// Tensor nodes lighter than this are dropped; their total mass is below
/// 1e−17 for every rule in use.
const NEGLIGIBLE_WEIGHT: f64 = 1e-20;

pub(crate) fn tensor_hermite(dim: usize, per_dim: usize) -> Rule {
    let rule = GaussHermite::new(NonZeroUsize::new(per_dim).expect("nonzero node count"));
    // ∫ e^{-x²} f(x) dx  →  E[f(Z)] with Z = √2 x, weight w / √π
    let one_d: Vec<(f64, f64)> = rule
        .iter()
        .map(|(x, w)| (x * std::f64::consts::SQRT_2, w / std::f64::consts::PI.sqrt()))
        .collect();
    let total = one_d.len().pow(dim as u32);
    let mut nodes = Vec::with_capacity(total * dim);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        let mut w = 1.0;
        for &i in &idx {
            w *= one_d[i].1;
        }
        if w >= NEGLIGIBLE_WEIGHT {
            nodes.extend(idx.iter().map(|&i| one_d[i].0));
            weights.push(w);
        }
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < per_dim {
                break;
            }
            *slot = 0;
        }
    }
    Rule { nodes, weights }
}

pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(x);
    x.iter().map(|v| (v - lse).exp()).collect()
}
