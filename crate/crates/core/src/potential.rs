//! Minimization of the potential function
//!
//! ```text
//! F(Δ, S) = I_X(S + Δ) + ¼ tr((R − R⁻¹Δ)²),   Δ ⪰ 0
//! ```
//!
//! whose stationary points solve `M_X(S + Δ) = I − R⁻¹ΔR⁻¹`. The minimizer is
//! located with the damped concave-convex iteration
//! `Δ ← (1 − ε)(R² − R M_X(S + Δ) R) + εΔ` started from several points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{ChannelEval, ChannelEvaluator};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, PsdMatrix, SymMatrix};
use crate::model::R_SINGULAR_TOL;

/// Stopping threshold on `‖Δ^{t+1} − Δ^t‖_F`.
pub const CCCP_TOL: f64 = 1e-8;
pub const DEFAULT_EPS: f64 = 0.5;
pub const DEFAULT_MAX_ITER: usize = 20_000;
pub const DEFAULT_STALL_WINDOW: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Possible,
    Impossible,
    Undetermined,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Possible => "possible",
            Verdict::Impossible => "impossible",
            Verdict::Undetermined => "undetermined",
        })
    }
}

#[derive(Debug, Clone)]
pub struct PotentialProblem {
    r: SymMatrix,
    r_inv: SymMatrix,
    r_sq: SymMatrix,
    s: PsdMatrix,
    evaluator: ChannelEvaluator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CccpOptions {
    /// Damping `ε ∈ [0, 1)`.
    pub eps: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Every `stall_window` iterations the observed step contraction is
    /// extrapolated geometrically; if even that rate cannot reach `tol` within
    /// `max_iter`, the run stops early as not converged. `0` disables the check.
    pub stall_window: usize,
}

impl Default for CccpOptions {
    fn default() -> Self {
        Self { eps: DEFAULT_EPS, max_iter: DEFAULT_MAX_ITER, tol: CCCP_TOL, stall_window: DEFAULT_STALL_WINDOW }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CccpStep {
    /// `F` at the iterate before the step.
    pub f: f64,
    /// `‖Δ^{t+1} − Δ^t‖_F`
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct CccpRun {
    pub delta: PsdMatrix,
    pub trace: Vec<CccpStep>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub cccp: CccpOptions,
    /// Random starting points drawn in `[0, R²]` besides `0`, `R²` and `½R²`.
    pub random_starts: usize,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { cccp: CccpOptions::default(), random_starts: 3, seed: 0x5eed, parallel: true }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalMinimum {
    pub delta: PsdMatrix,
    pub f: f64,
    pub f_error: f64,
    pub residual: f64,
    /// Index of the first start that reached this point.
    pub start: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PotentialSolution {
    pub delta_star: PsdMatrix,
    pub f_min: f64,
    pub f_error: f64,
    pub fixed_point_residual: f64,
    /// Distinct converged stationary points, sorted by `F` then trace. Zero is
    /// excluded when the Hessian test shows it is not a local minimum.
    pub all_local_minima: Vec<LocalMinimum>,
    pub hessian_unstable_at_zero: bool,
    pub weak_recovery: Verdict,
    /// `M_X(S + Δ*)`, the asymptotic upper bound on the MMSE matrix.
    pub mmse_ub: SymMatrix,
    /// `tr(R² − R⁻²Δ*²)`, the lower bound on the pairwise-interaction error.
    pub interaction_lb: f64,
    /// The interaction bound is evaluated at `delta_star` only, not minimized
    /// over every global minimizer.
    pub interaction_lb_scope: &'static str,
    pub iterations: usize,
    pub converged: bool,
}

impl PotentialProblem {
    pub fn new(evaluator: ChannelEvaluator, r: SymMatrix, s: PsdMatrix) -> Result<Self> {
        let dim = evaluator.dim();
        for got in [r.dim(), s.dim()] {
            if got != dim {
                return Err(Error::DimensionMismatch { expected: dim, got });
            }
        }
        let r_inv = r.inverse(R_SINGULAR_TOL)?;
        let r_sq = SymMatrix::symmetrize(&r.matmul(&r));
        Ok(Self { r, r_inv, r_sq, s, evaluator })
    }

    pub fn without_side_info(evaluator: ChannelEvaluator, r: SymMatrix) -> Result<Self> {
        let dim = evaluator.dim();
        Self::new(evaluator, r, PsdMatrix::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.r.dim()
    }

    pub fn r(&self) -> &SymMatrix {
        &self.r
    }

    pub fn r_squared(&self) -> &SymMatrix {
        &self.r_sq
    }

    pub fn side_info(&self) -> &PsdMatrix {
        &self.s
    }

    pub fn evaluator(&self) -> &ChannelEvaluator {
        &self.evaluator
    }

    fn has_side_info(&self) -> bool {
        self.s.as_sym().frobenius_norm() > 0.0
    }

    fn channel(&self, delta: &PsdMatrix, with_error: bool) -> Result<ChannelEval> {
        let snr = if self.has_side_info() { self.s.add(delta) } else { delta.clone() };
        if with_error {
            self.evaluator.evaluate(&snr)
        } else {
            self.evaluator.evaluate_fast(&snr)
        }
    }

    /// `¼ tr((R − R⁻¹Δ)²)`
    fn coupling_term(&self, delta: &PsdMatrix) -> f64 {
        let x = self.r.as_matrix().sub(&self.r_inv.matmul(delta.as_sym()));
        0.25 * x.matmul(&x).trace()
    }

    /// `F(Δ, S)`.
    pub fn potential_value(&self, delta: &PsdMatrix) -> Result<f64> {
        self.check(delta)?;
        Ok(self.channel(delta, false)?.info + self.coupling_term(delta))
    }

    /// `F(Δ, S)` with the channel's error estimate.
    pub fn potential_with_error(&self, delta: &PsdMatrix) -> Result<(f64, f64)> {
        self.check(delta)?;
        let ch = self.channel(delta, true)?;
        Ok((ch.info + self.coupling_term(delta), ch.info_error))
    }

    fn check(&self, delta: &PsdMatrix) -> Result<()> {
        if delta.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: delta.dim() });
        }
        Ok(())
    }

    /// `‖M_X(S + Δ) − (I − R⁻¹ΔR⁻¹)‖_F`
    pub fn fixed_point_residual(&self, delta: &PsdMatrix) -> Result<f64> {
        self.check(delta)?;
        let mmse = self.channel(delta, false)?.mmse;
        Ok(self.residual_from(&mmse, delta))
    }

    fn residual_from(&self, mmse: &SymMatrix, delta: &PsdMatrix) -> f64 {
        let target = SymMatrix::identity(self.dim()).sub(&self.r_inv.sandwich(delta.as_sym()));
        mmse.sub(&target).frobenius_norm()
    }

    /// Damped concave-convex iteration from `delta0`.
    pub fn cccp_solve(&self, delta0: &PsdMatrix, opts: &CccpOptions) -> Result<CccpRun> {
        self.check(delta0)?;
        if !(0.0..1.0).contains(&opts.eps) {
            return Err(Error::Config(format!("damping must lie in [0, 1), got {}", opts.eps)));
        }
        let limit = 10.0 * self.r_sq.frobenius_norm();
        let mut delta = delta0.clone();
        let mut trace = Vec::new();
        for iteration in 1..=opts.max_iter {
            let ch = self.channel(&delta, false)?;
            // R² − R M R computed as R (I − M) R with I − M = E[m mᵀ]
            let mapped = self.r.sandwich(&ch.gain);
            let next = PsdMatrix::project(&mapped.lincomb(1.0 - opts.eps, delta.as_sym(), opts.eps));
            let step = next.as_sym().sub(delta.as_sym()).frobenius_norm();
            trace.push(CccpStep { f: ch.info + self.coupling_term(&delta), step });
            delta = next;
            let norm = delta.as_sym().frobenius_norm();
            if !norm.is_finite() || norm > limit {
                return Err(Error::Diverged { iteration, norm });
            }
            if step < opts.tol {
                return Ok(CccpRun { delta, trace, iterations: iteration, converged: true });
            }
            if opts.stall_window > 0 && iteration >= 2 * opts.stall_window && iteration % opts.stall_window == 0 {
                let earlier = trace[iteration - 1 - opts.stall_window].step;
                let rate = (step / earlier).powf(1.0 / opts.stall_window as f64);
                if rate < 1.0 && (opts.tol / step).ln() / rate.ln() > (opts.max_iter - iteration) as f64 {
                    return Ok(CccpRun { delta, trace, iterations: iteration, converged: false });
                }
            }
        }
        Ok(CccpRun { delta, iterations: opts.max_iter, trace, converged: false })
    }

    /// True when `Δ = 0` fails to be a local minimizer of `F(·)`:
    /// `max_i λ_i(R)² > 1`.
    pub fn hessian_test(&self) -> bool {
        linalg::eig(&self.r_sq).eigenvalues[0] > 1.0 + 1e-12
    }

    /// Starting points: `0`, `R²`, `½R²`, then random `R A R` with `0 ⪯ A ⪯ I`.
    pub fn starting_points(&self, random: usize, seed: u64) -> Vec<PsdMatrix> {
        let dim = self.dim();
        let mut starts = vec![
            PsdMatrix::zeros(dim),
            PsdMatrix::project(&self.r_sq),
            PsdMatrix::project(&self.r_sq.scale(0.5)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..random {
            let g = SymMatrix::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            let basis = linalg::eig(&g).eigenvectors;
            let scales: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
            let a = SymMatrix::from_fn(dim, |i, j| (0..dim).map(|l| basis[(i, l)] * scales[l] * basis[(j, l)]).sum());
            starts.push(PsdMatrix::project(&self.r.sandwich(&a)));
        }
        starts
    }

    pub fn solve(&self) -> Result<PotentialSolution> {
        self.solve_with(&SolveOptions::default())
    }

    pub fn solve_with(&self, opts: &SolveOptions) -> Result<PotentialSolution> {
        let starts = self.starting_points(opts.random_starts, opts.seed);
        let runs: Vec<Result<CccpRun>> = if opts.parallel {
            starts.par_iter().map(|d0| self.cccp_solve(d0, &opts.cccp)).collect()
        } else {
            starts.iter().map(|d0| self.cccp_solve(d0, &opts.cccp)).collect()
        };
        let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

        let scale = self.r_sq.frobenius_norm();
        let tol_nonzero = 1e-4 * scale;
        let merge_tol = 1e-5 * scale.max(1.0);
        let hessian_unstable = self.hessian_test();
        let side_info = self.has_side_info();

        let mut candidates: Vec<LocalMinimum> = Vec::new();
        let mut stragglers: Vec<(f64, f64)> = Vec::new();
        for (start, run) in runs.iter().enumerate() {
            let (f, f_error) = self.potential_with_error(&run.delta)?;
            if !run.converged {
                stragglers.push((f, f_error));
                continue;
            }
            if candidates
                .iter()
                .any(|c| c.delta.as_sym().sub(run.delta.as_sym()).frobenius_norm() < merge_tol)
            {
                continue;
            }
            let residual = self.fixed_point_residual(&run.delta)?;
            candidates.push(LocalMinimum { delta: run.delta.clone(), f, f_error, residual, start });
        }
        let is_zero = |d: &PsdMatrix| d.as_sym().frobenius_norm() <= tol_nonzero;
        // Δ = 0 is a saddle above the threshold; it is stationary but not a minimum.
        if !side_info && hessian_unstable {
            candidates.retain(|c| !is_zero(&c.delta));
        }
        candidates.sort_by(|a, b| {
            a.f.partial_cmp(&b.f)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.delta.as_sym().trace().partial_cmp(&b.delta.as_sym().trace()).unwrap_or(std::cmp::Ordering::Equal))
        });

        let converged = !candidates.is_empty();
        let tie = |e1: f64, e2: f64| (5.0 * e1.max(e2)).max(1e-9);

        // global minimizer: lowest F, ties broken by smallest trace
        let chosen: Option<&LocalMinimum> = candidates.first().map(|best| {
            candidates
                .iter()
                .filter(|c| (c.f - best.f).abs() < tie(c.f_error, best.f_error))
                .min_by(|a, b| a.delta.as_sym().trace().partial_cmp(&b.delta.as_sym().trace()).unwrap())
                .unwrap_or(best)
        });
        let (delta_star, f_min, f_error, residual, iterations) = match chosen {
            Some(c) => (c.delta.clone(), c.f, c.f_error, c.residual, runs[c.start].iterations),
            None => {
                // nothing converged: report the lowest final iterate
                let (i, run) = runs
                    .iter()
                    .enumerate()
                    .min_by(|a, b| stragglers_f(&stragglers, a.0).partial_cmp(&stragglers_f(&stragglers, b.0)).unwrap())
                    .expect("at least one start");
                let (f, e) = stragglers[i];
                let residual = self.fixed_point_residual(&run.delta)?;
                (run.delta.clone(), f, e, residual, run.iterations)
            }
        };

        let zero = candidates.iter().find(|c| is_zero(&c.delta));
        let best_nonzero = candidates.iter().find(|c| !is_zero(&c.delta));
        let mut verdict = match (zero, best_nonzero) {
            (_, None) => Verdict::Impossible,
            (None, Some(_)) => Verdict::Possible,
            (Some(z), Some(nz)) => {
                if (z.f - nz.f).abs() < tie(z.f_error, nz.f_error) {
                    Verdict::Undetermined
                } else if nz.f < z.f {
                    Verdict::Possible
                } else {
                    Verdict::Impossible
                }
            }
        };
        // a start that did not settle but already sits below every certified
        // minimum leaves the outcome open
        if converged && verdict != Verdict::Undetermined {
            let best = candidates[0].f;
            if stragglers.iter().any(|&(f, e)| f < best - tie(e, candidates[0].f_error)) {
                verdict = Verdict::Undetermined;
            }
        }
        if !converged {
            verdict = Verdict::Undetermined;
        }

        let mmse_ub = self.channel(&delta_star, false)?.mmse;
        let r_inv_sq = self.r_inv.matmul(&self.r_inv);
        let d2 = delta_star.as_sym().matmul(delta_star.as_sym());
        let interaction_lb = self.r_sq.trace() - r_inv_sq.matmul(&d2).trace();

        Ok(PotentialSolution {
            delta_star,
            f_min,
            f_error,
            fixed_point_residual: residual,
            all_local_minima: candidates,
            hessian_unstable_at_zero: hessian_unstable,
            weak_recovery: verdict,
            mmse_ub,
            interaction_lb,
            interaction_lb_scope: "evaluated at delta_star only",
            iterations,
            converged,
        })
    }

    /// Both sides of the stationarity identity behind the two interaction
    /// bounds: `tr(R²(I − M_X(Δ*))²)` and `tr(R²) − interaction_lb`, which
    /// coincide whenever `Δ* = R(I − M_X(Δ*))R`.
    pub fn bound_sandwich(&self, sol: &PotentialSolution) -> (f64, f64) {
        let gap: Matrix = SymMatrix::identity(self.dim()).sub(&sol.mmse_ub).as_matrix().clone();
        let lhs = self.r_sq.as_matrix().matmul(&gap).matmul(&gap).trace();
        (lhs, self.r_sq.trace() - sol.interaction_lb)
    }
}

fn stragglers_f(stragglers: &[(f64, f64)], i: usize) -> f64 {
    stragglers.get(i).map(|s| s.0).unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ProbVector, WhitenedSupport};

    fn problem(p: Vec<f64>, r: SymMatrix) -> PotentialProblem {
        let ev = ChannelEvaluator::quadrature(WhitenedSupport::new(&ProbVector::new(p).unwrap())).unwrap();
        PotentialProblem::without_side_info(ev, r).unwrap()
    }

    fn uniform3(l1: f64, l2: f64) -> PotentialProblem {
        problem(vec![1.0 / 3.0; 3], SymMatrix::diag(&[l1, l2]))
    }

    /// Brute-force scan of F over Δ ∈ [0, λ²] for k = 2.
    fn grid_scan(pr: &PotentialProblem, lambda: f64, steps: usize) -> (f64, f64) {
        (0..=steps)
            .map(|i| {
                let d = lambda * lambda * i as f64 / steps as f64;
                (d, pr.potential_value(&PsdMatrix::scaled_identity(1, d)).unwrap())
            })
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
    }

    #[test]
    fn potential_at_zero_and_r_squared() {
        let r = SymMatrix::from_row_major(2, vec![1.2, 0.3, 0.3, -0.8]).unwrap();
        let pr = problem(vec![0.5, 0.3, 0.2], r.clone());
        let quarter_tr = 0.25 * r.matmul(&r).trace();
        assert!((pr.potential_value(&PsdMatrix::zeros(2)).unwrap() - quarter_tr).abs() < 1e-12);
        let r2 = PsdMatrix::project(pr.r_squared());
        let info = pr.evaluator().evaluate_fast(&r2).unwrap().info;
        assert!((pr.potential_value(&r2).unwrap() - info).abs() < 1e-12);
    }

    #[test]
    fn zero_is_stationary_without_side_info() {
        let pr = uniform3(1.5, 0.7);
        assert!(pr.fixed_point_residual(&PsdMatrix::zeros(2)).unwrap() < 1e-12);
        let run = pr.cccp_solve(&PsdMatrix::zeros(2), &CccpOptions::default()).unwrap();
        assert!(run.converged);
        assert_eq!(run.iterations, 1);
        assert!(run.delta.as_sym().frobenius_norm() < 1e-14);
        assert!(pr.fixed_point_residual(&PsdMatrix::scaled_identity(2, 0.3)).unwrap() > 1e-3);
    }

    #[test]
    fn below_threshold_converges_to_zero() {
        let pr = uniform3(0.5, 0.5);
        let run = pr.cccp_solve(&PsdMatrix::project(pr.r_squared()), &CccpOptions::default()).unwrap();
        assert!(run.converged);
        assert!(run.delta.as_sym().frobenius_norm() < 1e-7);
    }

    #[test]
    fn above_threshold_converges_to_informative_point() {
        let pr = uniform3(1.5, 1.5);
        let run = pr.cccp_solve(&PsdMatrix::project(pr.r_squared()), &CccpOptions::default()).unwrap();
        assert!(run.converged);
        assert!(pr.fixed_point_residual(&run.delta).unwrap() < 1e-6);
        let f0 = pr.potential_value(&PsdMatrix::zeros(2)).unwrap();
        assert!(pr.potential_value(&run.delta).unwrap() < f0);
        assert!(run.trace.windows(2).all(|w| w[1].f <= w[0].f + 1e-10), "CCCP should not increase F");
    }

    #[test]
    fn rejects_bad_damping() {
        let pr = uniform3(1.5, 1.5);
        let opts = CccpOptions { eps: 1.0, ..Default::default() };
        assert!(pr.cccp_solve(&PsdMatrix::zeros(2), &opts).is_err());
    }

    #[test]
    fn binary_below_threshold_solution() {
        let lambda = 0.9;
        let pr = problem(vec![0.5, 0.5], SymMatrix::diag(&[lambda]));
        let sol = pr.solve().unwrap();
        assert_eq!(sol.weak_recovery, Verdict::Impossible);
        assert!(sol.delta_star.as_sym().frobenius_norm() < 1e-6);
        assert!((sol.f_min - 0.25 * lambda * lambda).abs() < 1e-9);
        let (d, _) = grid_scan(&pr, lambda, 400);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn binary_above_threshold_beats_grid_scan() {
        let lambda = 1.5;
        let pr = problem(vec![0.5, 0.5], SymMatrix::diag(&[lambda]));
        let sol = pr.solve().unwrap();
        assert_eq!(sol.weak_recovery, Verdict::Possible);
        let (d_grid, f_grid) = grid_scan(&pr, lambda, 2000);
        assert!(sol.f_min <= f_grid + 1e-9);
        assert!((sol.delta_star.as_sym().get(0, 0) - d_grid).abs() < 2.0 * lambda * lambda / 2000.0);
        let f0 = pr.potential_value(&PsdMatrix::zeros(1)).unwrap();
        let fr2 = pr.potential_value(&PsdMatrix::scaled_identity(1, lambda * lambda)).unwrap();
        assert!(sol.f_min < f0.min(fr2));
    }

    #[test]
    fn binary_verdict_flips_at_one() {
        for (lambda, expected) in [(0.8, Verdict::Impossible), (0.9, Verdict::Impossible), (1.1, Verdict::Possible), (1.2, Verdict::Possible)] {
            let sol = problem(vec![0.5, 0.5], SymMatrix::diag(&[lambda])).solve().unwrap();
            assert_eq!(sol.weak_recovery, expected, "lambda = {lambda}");
        }
    }

    #[test]
    fn stall_check_stops_sublinear_runs() {
        // at λ = 1 the approach to zero is sublinear and cannot meet the tolerance
        let pr = problem(vec![0.5, 0.5], SymMatrix::diag(&[1.0]));
        let start = PsdMatrix::project(pr.r_squared());
        let opts = CccpOptions { max_iter: 3000, stall_window: 500, ..Default::default() };
        let run = pr.cccp_solve(&start, &opts).unwrap();
        assert!(!run.converged && run.iterations < 3000, "{}", run.iterations);
        let full = pr.cccp_solve(&start, &CccpOptions { stall_window: 0, ..opts }).unwrap();
        assert!(!full.converged && full.iterations == 3000);
        // geometric convergence is never cut short
        let fast = problem(vec![0.5, 0.5], SymMatrix::diag(&[1.5]));
        assert!(fast.cccp_solve(&start, &opts).unwrap().converged);
    }

    #[test]
    fn hessian_test_boundary() {
        assert!(uniform3(1.5, 0.5).hessian_test());
        assert!(!uniform3(0.9, 0.9).hessian_test());
        assert!(!uniform3(1.0, 1.0).hessian_test());
        assert!(uniform3(-1.2, 0.5).hessian_test());
    }

    #[test]
    fn uniform_three_communities() {
        let sol = uniform3(1.5, 1.5).solve().unwrap();
        assert_eq!(sol.weak_recovery, Verdict::Possible);
        assert!(sol.converged);
        assert!(sol.fixed_point_residual < 1e-6);
        assert!(sol.hessian_unstable_at_zero);
        let sol = uniform3(0.5, 0.5).solve().unwrap();
        assert_eq!(sol.weak_recovery, Verdict::Impossible);
        assert!(sol.delta_star.as_sym().frobenius_norm() < 1e-6);
    }

    #[test]
    fn skewed_prior_detects_below_one() {
        let sol = problem(vec![0.6, 0.3, 0.1], SymMatrix::diag(&[0.95, 0.95])).solve().unwrap();
        assert!(!sol.hessian_unstable_at_zero);
        assert_eq!(sol.weak_recovery, Verdict::Possible);
        assert!(sol.delta_star.as_sym().frobenius_norm() > 1e-2);
        assert!(sol.all_local_minima.len() >= 2);
    }

    #[test]
    fn solutions_stay_in_range_and_sandwich_holds() {
        for (l1, l2) in [(1.5, 1.2), (1.3, -1.1), (-1.6, 0.6)] {
            let pr = uniform3(l1, l2);
            let sol = pr.solve().unwrap();
            for m in &sol.all_local_minima {
                assert!(linalg::loewner_leq(&SymMatrix::zeros(2), m.delta.as_sym(), 0.0).unwrap());
                let upper = pr.r_squared().add(&SymMatrix::identity(2).scale(1e-8));
                assert!(linalg::loewner_leq(m.delta.as_sym(), &upper, 0.0).unwrap());
                assert!(m.residual < 1e-6);
            }
            let (lhs, rhs) = pr.bound_sandwich(&sol);
            assert!((lhs - rhs).abs() < 1e-6, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn side_info_shrinks_mmse_bound() {
        let ev = ChannelEvaluator::quadrature(WhitenedSupport::new(&ProbVector::new(vec![0.5, 0.3, 0.2]).unwrap())).unwrap();
        let r = SymMatrix::diag(&[1.4, 1.2]);
        let mut prev: Option<SymMatrix> = None;
        for s in [0.05, 0.2, 0.6] {
            let pr = PotentialProblem::new(ev.clone(), r.clone(), PsdMatrix::scaled_identity(2, s)).unwrap();
            let sol = pr.solve().unwrap();
            assert!(sol.converged);
            assert!(sol.fixed_point_residual < 1e-6);
            if let Some(p) = &prev {
                assert!(linalg::loewner_leq(&sol.mmse_ub, p, 1e-8).unwrap());
            }
            prev = Some(sol.mmse_ub);
        }
    }

    #[test]
    fn monte_carlo_mode_solves() {
        let ws = WhitenedSupport::new(&ProbVector::uniform(3).unwrap());
        let ev = ChannelEvaluator::new(ws, crate::channel::Method::MonteCarlo { samples: 20_000, seed: 4 }).unwrap();
        let pr = PotentialProblem::without_side_info(ev, SymMatrix::diag(&[1.5, 1.5])).unwrap();
        let sol = pr.solve().unwrap();
        assert_eq!(sol.weak_recovery, Verdict::Possible);
        let qsol = uniform3(1.5, 1.5).solve().unwrap();
        assert!((sol.mmse_ub.trace() - qsol.mmse_ub.trace()).abs() < 0.05);
    }

    #[test]
    fn singular_r_rejected() {
        let ev = ChannelEvaluator::quadrature(WhitenedSupport::new(&ProbVector::uniform(3).unwrap())).unwrap();
        assert!(matches!(
            PotentialProblem::without_side_info(ev, SymMatrix::diag(&[1.0, 0.0])),
            Err(Error::SingularR(_))
        ));
    }
}
