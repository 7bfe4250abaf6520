//! Acceptance suite: every headline criterion at its stated tolerance and
//! runtime budget. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dbsbm::bp::{bp_single, BpConfig};
use dbsbm::channel::ChannelEvaluator;
use dbsbm::linalg::{PsdMatrix, SymMatrix};
use dbsbm::model::{LabeledGraph, ProbVector, SbmModel, WhitenedSupport};
use dbsbm::oracle::{dpi_check, prop1_check, prop2_check, universality_gap, DataIntegrator, ExactPosterior, Likelihood, DPI_TOL};
use dbsbm::potential::{PotentialProblem, PotentialSolution, Verdict};
use dbsbm::sweep::{figure1_defaults, run_point, run_sweep, Figure1Variant, SweepConfig, SweepRow};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_prob(rng: &mut ChaCha8Rng, k: usize, floor: f64) -> ProbVector {
    let raw: Vec<f64> = (0..k).map(|_| floor + rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    ProbVector::new(raw.iter().map(|x| x / total).collect()).unwrap()
}

fn random_psd(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> PsdMatrix {
    let g = SymMatrix::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
    let basis = dbsbm::linalg::eig(&g).eigenvectors;
    let scales: Vec<f64> = (0..dim).map(|_| rng.gen_range(lo..hi)).collect();
    PsdMatrix::new(SymMatrix::from_fn(dim, |i, j| (0..dim).map(|l| basis[(i, l)] * scales[l] * basis[(j, l)]).sum())).unwrap()
}

fn uniform3_problem(l1: f64, l2: f64) -> PotentialProblem {
    let ev = ChannelEvaluator::quadrature(WhitenedSupport::new(&ProbVector::uniform(3).unwrap())).unwrap();
    PotentialProblem::without_side_info(ev, SymMatrix::diag(&[l1, l2])).unwrap()
}

fn skewed_problem(l1: f64, l2: f64) -> PotentialProblem {
    let ev = ChannelEvaluator::quadrature(WhitenedSupport::new(&ProbVector::new(vec![0.6, 0.3, 0.1]).unwrap())).unwrap();
    PotentialProblem::without_side_info(ev, SymMatrix::diag(&[l1, l2])).unwrap()
}

/// Ten above-threshold instances, both priors.
fn above_threshold_solutions() -> Vec<(String, PotentialProblem, PotentialSolution)> {
    let points = [(1.2, 1.2), (1.5, 1.5), (1.6, 0.4), (1.3, 0.9), (2.0, 1.1)];
    let mut out = Vec::new();
    for &(a, b) in &points {
        for (name, pr) in [("uniform", uniform3_problem(a, b)), ("skewed", skewed_problem(a, b))] {
            let sol = pr.solve().unwrap();
            out.push((format!("{name} ({a}, {b})"), pr, sol));
        }
    }
    out
}

fn whitened_moments() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.gen_range(2..=6);
        let prob = random_prob(&mut rng, k, 0.05);
        let ws = WhitenedSupport::new(&prob);
        let dim = ws.dim();
        let p = ws.p();
        for i in 0..dim {
            let mean: f64 = (0..k).map(|a| p[a] * ws.point(a)[i]).sum();
            worst = worst.max(mean.abs());
            for j in 0..dim {
                let second: f64 = (0..k).map(|a| p[a] * ws.point(a)[i] * ws.point(a)[j]).sum();
                worst = worst.max((second - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    outcome(worst < 1e-10, format!("max deviation {worst:.2e} (tol 1e-10)"))
}

fn immse_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let k = rng.gen_range(2..=3);
        let ev = ChannelEvaluator::quadrature(WhitenedSupport::new(&random_prob(&mut rng, k, 0.2))).unwrap();
        let s = random_psd(&mut rng, k - 1, 0.2, 2.0);
        worst = worst.max(ev.gradient_check(&s, 1e-4).unwrap());
    }
    outcome(worst < 1e-3, format!("max entry error {worst:.2e} over 20 S (tol 1e-3)"))
}

fn mmse_at_zero() -> Outcome {
    let priors: Vec<Vec<f64>> = vec![
        vec![0.5, 0.5],
        vec![0.7, 0.3],
        vec![1.0 / 3.0; 3],
        vec![0.6, 0.3, 0.1],
        vec![0.25; 4],
        vec![0.4, 0.3, 0.2, 0.1],
    ];
    let mut worst: f64 = 0.0;
    for p in priors {
        let ev = ChannelEvaluator::quadrature(WhitenedSupport::new(&ProbVector::new(p).unwrap())).unwrap();
        let dim = ev.dim();
        let m = ev.mmse_matrix(&PsdMatrix::zeros(dim)).unwrap().value;
        worst = worst.max(m.sub(&SymMatrix::identity(dim)).frobenius_norm());
    }
    outcome(worst < 1e-6, format!("max ‖M_X(0) − I‖_F {worst:.2e} (tol 1e-6)"))
}

fn fixed_point_residual(solutions: &[(String, PotentialProblem, PotentialSolution)]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let below = [uniform3_problem(0.6, 0.8), skewed_problem(0.5, 0.5), uniform3_problem(0.9, 0.3)];
    let below_solutions: Vec<(&PotentialProblem, PotentialSolution)> = below.iter().map(|pr| (pr, pr.solve().unwrap())).collect();
    let all = solutions.iter().map(|(_, pr, sol)| (pr, sol)).chain(below_solutions.iter().map(|(pr, sol)| (*pr, sol)));
    for (pr, sol) in all {
        for min in &sol.all_local_minima {
            worst = worst.max(pr.fixed_point_residual(&min.delta).unwrap());
            count += 1;
        }
    }
    outcome(count > 0 && worst < 1e-6, format!("{count} converged minima, max residual {worst:.2e} (tol 1e-6)"))
}

fn theory_grid(variant: Figure1Variant) -> (Vec<SweepRow>, Duration, f64) {
    let mut cfg = figure1_defaults(variant, 9);
    cfg.trials = 0;
    let step = cfg.lambda1_grid[1] - cfg.lambda1_grid[0];
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let rows = run_sweep(&cfg, &dir.path().join("grid.csv"), false).unwrap();
    (rows, start.elapsed(), step)
}

fn threshold_placement() -> Outcome {
    let (rows, elapsed, step) = theory_grid(Figure1Variant::A);
    let mut bad = Vec::new();
    for r in &rows {
        let m = r.lambda1.max(r.lambda2);
        let v = r.weak_recovery;
        let ok = if m <= 0.95 {
            v == Some(Verdict::Impossible)
        } else if m >= 1.05 {
            v == Some(Verdict::Possible)
        } else {
            true
        };
        // the boundary sits within one grid cell of max λ = 1
        let near = match v {
            Some(Verdict::Impossible) => m < 1.0 + step,
            Some(Verdict::Possible) => m > 1.0 - step,
            _ => (m - 1.0).abs() < step,
        };
        if !ok || !near {
            bad.push(format!("({:.2}, {:.2}) {:?}", r.lambda1, r.lambda2, v));
        }
    }
    let in_time = elapsed < Duration::from_secs(600);
    outcome(
        bad.is_empty() && in_time && rows.len() == 81,
        format!("{} grid points, {} misplaced {:?}, {:.0?} (limit 10 min)", rows.len(), bad.len(), bad, elapsed),
    )
}

fn sub_ks_detectability() -> Outcome {
    let (rows, elapsed, _) = theory_grid(Figure1Variant::B);
    let hits: Vec<String> = rows
        .iter()
        .filter(|r| r.lambda1.max(r.lambda2) < 1.0 && r.weak_recovery == Some(Verdict::Possible))
        .map(|r| format!("({:.2}, {:.2})", r.lambda1, r.lambda2))
        .collect();
    let in_time = elapsed < Duration::from_secs(600);
    outcome(!hits.is_empty() && in_time, format!("possible below max λ = 1 at {hits:?}, {elapsed:.0?} (limit 10 min)"))
}

fn bp_point(lambda: f64) -> (SweepRow, Duration) {
    let cfg = SweepConfig {
        lambda1_grid: vec![lambda],
        lambda2_grid: vec![lambda],
        master_seed: 2024,
        ..figure1_defaults(Figure1Variant::A, 1)
    };
    let start = Instant::now();
    let row = run_point(&cfg, 0, lambda, lambda);
    (row, start.elapsed())
}

fn bp_above_threshold() -> Outcome {
    let (row, elapsed) = bp_point(1.5);
    let (Some(bp), Some(theory)) = (row.bp_mse_median, row.trace_mmse_ub) else {
        return outcome(false, format!("missing values, status {}", row.status));
    };
    let gap = (bp - theory).abs();
    let pass = gap <= 0.1 && elapsed < Duration::from_secs(1200) && row.status == "ok";
    outcome(pass, format!("median BP MSE {bp:.4}, tr M_X(Δ*) {theory:.4}, gap {gap:.4} (tol 0.1), {elapsed:.0?} (limit 20 min)"))
}

fn bp_below_threshold() -> Outcome {
    let (row, elapsed) = bp_point(0.5);
    let Some(bp) = row.bp_mse_median else {
        return outcome(false, format!("missing values, status {}", row.status));
    };
    let gap = (bp - 2.0).abs();
    let pass = gap <= 0.1 && elapsed < Duration::from_secs(600) && row.status == "ok";
    outcome(pass, format!("median BP MSE {bp:.4}, distance to 2 {gap:.2e} (tol 0.1), {elapsed:.0?} (limit 10 min)"))
}

/// Random labeled tree: node `i > 0` attaches to a uniform earlier node.
fn random_tree(rng: &mut ChaCha8Rng, n: usize, k: usize) -> LabeledGraph {
    let edges = (1..n).map(|j| (rng.gen_range(0..j), j)).collect();
    let labels = (0..n).map(|_| rng.gen_range(0..k)).collect();
    LabeledGraph { n, k, edges, labels, seed: 0 }
}

fn random_valid_model(rng: &mut ChaCha8Rng, n: usize) -> SbmModel {
    loop {
        let k = rng.gen_range(2..=3);
        let prob = random_prob(rng, k, 0.3);
        let r = SymMatrix::diag(&(0..k - 1).map(|_| rng.gen_range(0.1..0.9)).collect::<Vec<_>>());
        let d = rng.gen_range(0.3..0.9) * n as f64;
        if let Ok(model) = SbmModel::new(n, d, &prob, r) {
            if model.valid {
                return model;
            }
        }
    }
}

fn bp_matches_enumeration_on_trees() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = BpConfig { n_inits: 1, damping: 0.0, max_sweeps: 500, msg_tol: 1e-14, seed: 0, non_edge_field: false };
    let mut worst: f64 = 0.0;
    let mut unconverged = 0;
    for _ in 0..50 {
        let n = rng.gen_range(2..=12);
        let model = random_valid_model(&mut rng, n);
        let tree = random_tree(&mut rng, n, model.k());
        let exact = ExactPosterior::compute(&model, &tree.edges, None, Likelihood::EdgesOnly).unwrap();
        let mut bp_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let state = bp_single(&tree, &model, &config, None, &mut bp_rng).unwrap();
        if !state.converged {
            unconverged += 1;
        }
        for i in 0..n {
            for (a, b) in state.marginal(i).iter().zip(&exact.marginals[i]) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-8 && unconverged == 0 && elapsed < Duration::from_secs(60),
        format!("50 trees, max marginal error {worst:.2e} (tol 1e-8), {unconverged} unconverged, {elapsed:.1?} (limit 1 min)"),
    )
}

fn proposition_identities() -> Outcome {
    let start = Instant::now();
    let instances: Vec<(usize, f64, Vec<f64>, SymMatrix)> = vec![
        (4, 2.0, vec![0.6, 0.4], SymMatrix::diag(&[0.8])),
        (3, 1.0, vec![0.6, 0.4], SymMatrix::diag(&[0.8])),
        (4, 1.5, vec![0.65, 0.35], SymMatrix::diag(&[0.9])),
        (4, 2.0, vec![0.4, 0.35, 0.25], SymMatrix::diag(&[0.4, 0.3])),
        (3, 1.0, vec![0.5, 0.3, 0.2], SymMatrix::diag(&[0.5, 0.3])),
        (4, 1.5, vec![0.45, 0.35, 0.2], SymMatrix::diag(&[0.6, 0.4])),
    ];
    let mut worst: f64 = 0.0;
    let mut smallest_gain = f64::INFINITY;
    for (n, d, p, r) in instances {
        let model = SbmModel::new(n, d, &ProbVector::new(p).unwrap(), r).unwrap();
        if !model.valid {
            return outcome(false, format!("instance n = {n}, d = {d} is not a valid model"));
        }
        let integrator = DataIntegrator::new(&model, None);
        for check in [prop1_check(&integrator).unwrap(), prop2_check(&integrator).unwrap()] {
            worst = worst.max(check.residual);
            smallest_gain = smallest_gain.min(check.lhs);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && smallest_gain > 1e-6 && elapsed < Duration::from_secs(120),
        format!("6 instances, max residual {worst:.2e} (tol 1e-10), smallest gain {smallest_gain:.2e}, {elapsed:.1?} (limit 2 min)"),
    )
}

fn dpi_ordering() -> Outcome {
    let start = Instant::now();
    let models = [
        SbmModel::new(3, 1.0, &ProbVector::new(vec![0.6, 0.4]).unwrap(), SymMatrix::diag(&[0.8])).unwrap(),
        SbmModel::new(2, 0.5, &ProbVector::new(vec![0.5, 0.3, 0.2]).unwrap(), SymMatrix::diag(&[0.4, 0.3])).unwrap(),
    ];
    let mut min_gap = f64::INFINITY;
    let mut all_hold = true;
    for model in &models {
        let dim = model.support.dim();
        for scale in [0.25, 1.0] {
            let check = dpi_check(model, &PsdMatrix::scaled_identity(dim, scale)).unwrap();
            all_hold &= check.holds;
            min_gap = min_gap.min(check.min_gap_eigenvalue);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        all_hold && min_gap >= -DPI_TOL && elapsed < Duration::from_secs(120),
        format!("4 instances, min eigenvalue of MMSE(X|G) − MMSE(X|G,Y) {min_gap:.3e} (tol −1e-10), {elapsed:.1?} (limit 2 min)"),
    )
}

fn universality() -> Outcome {
    let start = Instant::now();
    let probe = universality_gap(&ProbVector::uniform(2).unwrap(), &SymMatrix::diag(&[1.0]), 6, &[1.5, 3.0], 20_000, 11).unwrap();
    let (low, high) = (&probe.points[0], &probe.points[1]);
    let combined = (low.gap_se.powi(2) + high.gap_se.powi(2)).sqrt();
    let elapsed = start.elapsed();
    outcome(
        high.gap <= low.gap + 3.0 * combined && elapsed < Duration::from_secs(600),
        format!(
            "gap(d=3) {:.4e} vs gap(d=1.5) {:.4e} + 3×{:.2e}, {elapsed:.1?} (limit 10 min)",
            high.gap, low.gap, combined
        ),
    )
}

fn bound_sandwich(solutions: &[(String, PotentialProblem, PotentialSolution)]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut skipped = Vec::new();
    let mut used = 0;
    for (name, pr, sol) in solutions {
        if !sol.converged || sol.weak_recovery != Verdict::Possible {
            skipped.push(name.clone());
            continue;
        }
        let (lhs, rhs) = pr.bound_sandwich(sol);
        worst = worst.max((lhs - rhs).abs());
        used += 1;
    }
    outcome(used >= 10 && worst < 1e-6, format!("{used} converged points, max |difference| {worst:.2e} (tol 1e-6), skipped {skipped:?}"))
}

fn sweep_determinism() -> Outcome {
    let cfg = SweepConfig {
        lambda1_grid: vec![0.6, 1.4],
        lambda2_grid: vec![0.8, 1.3],
        n: 1000,
        d: 10.0,
        trials: 2,
        master_seed: 99,
        bp: BpConfig { n_inits: 2, ..Default::default() },
        ..figure1_defaults(Figure1Variant::B, 2)
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    run_sweep(&cfg, &a, false).unwrap();
    run_sweep(&cfg, &b, false).unwrap();
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    outcome(a == b, format!("two runs, {} and {} bytes, identical: {}", a.len(), b.len(), a == b))
}

fn main() -> ExitCode {
    let solutions = above_threshold_solutions();
    let criteria: Vec<(&str, Criterion<'_>)> = vec![
        ("whitened moments", Box::new(whitened_moments)),
        ("I-MMSE gradient", Box::new(immse_gradient)),
        ("M_X(0) = I", Box::new(mmse_at_zero)),
        ("fixed-point residual", Box::new(|| fixed_point_residual(&solutions))),
        ("bound sandwich", Box::new(|| bound_sandwich(&solutions))),
        ("BP matches enumeration on trees", Box::new(bp_matches_enumeration_on_trees)),
        ("proposition identities", Box::new(proposition_identities)),
        ("DPI ordering", Box::new(dpi_ordering)),
        ("universality probe", Box::new(universality)),
        ("sweep determinism", Box::new(sweep_determinism)),
        ("threshold placement, uniform prior", Box::new(threshold_placement)),
        ("detectability below max λ = 1, skewed prior", Box::new(sub_ks_detectability)),
        ("BP vs theory above threshold", Box::new(bp_above_threshold)),
        ("BP below threshold", Box::new(bp_below_threshold)),
    ];
    let mut failures = 0;
    for (name, run) in &criteria {
        let result = run();
        if !result.pass {
            failures += 1;
        }
        println!("{} {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
