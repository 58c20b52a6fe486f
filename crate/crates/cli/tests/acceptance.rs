//! End-to-end acceptance suite. Runs sequentially (no test harness) so the
//! timed criteria are not distorted by concurrent tests; prints exactly one
//! pass/fail line per criterion and exits nonzero if any fail.

use std::process::Command;
use std::time::Instant;

use mffbsde::checks::{
    check_adjoint, check_domination, check_lipschitz, check_monotonicity,
    check_no_linear_domination, BoxSampler,
};
use mffbsde::coefficients::{
    base_coefficients, lc_hamiltonian, lqic_hamiltonian, AdjointH, AssumptionConstants,
    GammaBuf, GammaFn, PerturbationData,
};
use mffbsde::control::{
    cost_lc, cost_lqic, extract_lc_controls, extract_lqic_controls, optimality_gap_check_lc,
    simulate_state, ControlQuartet,
};
use mffbsde::convex::{
    grad_inverse, project, weighted_inner, weighted_norm_of, ConvexFunction, ConvexSet,
    WeightedNorm,
};
use mffbsde::examples::{example_lc_data, scalar_lqic_instance};
use mffbsde::norms::m_norm;
use mffbsde::oracle::{
    brute_force_lqic, example_errors, example_reference, ito_isometry_cost, ExampleErrors,
};
use mffbsde::solver::{continuation_solve, picard_solve, stability_probe, SolverConfig};
use mffbsde::{make_grid, sample_brownian, Result, TripleProcess};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

struct Outcome {
    passed: bool,
    detail: String,
}

fn ok(detail: String) -> Result<Outcome> {
    Ok(Outcome { passed: true, detail })
}

fn fail(detail: String) -> Result<Outcome> {
    Ok(Outcome { passed: false, detail })
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("closed-form benchmark ladder", criterion_1),
        ("zero-control cost identity", criterion_2),
        ("optimality gap inequality", criterion_3),
        ("constrained LQ cross-validation", criterion_4),
        ("projection property suite", criterion_5),
        ("gradient-inverse property suite", criterion_6),
        ("assumption checkers", criterion_7),
        ("contraction and continuation agreement", criterion_8),
        ("stability probe", criterion_9),
        ("byte-identical determinism", criterion_10),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = f().unwrap_or_else(|e| Outcome {
            passed: false,
            detail: format!("errored: {e}"),
        });
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        println!("criterion {:2} {name}: {verdict} ({})", i + 1, outcome.detail);
        if !outcome.passed {
            failures += 1;
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}

fn solve_example(
    particles: usize,
    steps: usize,
    seed: u64,
) -> Result<(TripleProcess, TripleProcess, ControlQuartet, ExampleErrors, mffbsde::solver::SolveReport)>
{
    let lc = example_lc_data();
    let c = lc_hamiltonian(&lc)?;
    let c0 = base_coefficients(&c.structural)?;
    let grid = make_grid(lc.dynamics.horizon, steps)?;
    let noise = sample_brownian(&grid, particles, 1, seed)?;
    let cfg = SolverConfig::with_defaults(particles, steps, seed);
    let (v1, v2, rep) = continuation_solve(&c, &c0, &grid, &noise, &cfg)?;
    let q = extract_lc_controls(&lc, &v1, &v2, &grid)?;
    let reference = example_reference(&noise, &grid)?;
    let errors = example_errors(&v1, &v2, &q, &reference, &grid)?;
    Ok((v1, v2, q, errors, rep))
}

/// Solver errors vs the closed form at (4096, 64) are below 10% in each of
/// X, Y, Z, u, shrink monotonically over two joint refinements, and the
/// finest solve stays within its wall-clock budget.
fn criterion_1() -> Result<Outcome> {
    let ladder = [(256usize, 4usize), (1024, 16), (4096, 64)];
    let mut prev: Option<ExampleErrors> = None;
    let mut finest = ExampleErrors { x: [1.0; 2], y: [1.0; 2], z: [1.0; 2], u: [1.0; 2] };
    let mut elapsed = 0.0;
    for &(m, n) in &ladder {
        let t0 = Instant::now();
        let (_, _, _, errors, _) = solve_example(m, n, 42)?;
        elapsed = t0.elapsed().as_secs_f64();
        if let Some(p) = &prev {
            let pairs = [
                (errors.x, p.x),
                (errors.y, p.y),
                (errors.z, p.z),
                (errors.u, p.u),
            ];
            if pairs.iter().any(|(now, before)| {
                now.iter().zip(before).any(|(a, b)| a >= b)
            }) {
                return fail(format!(
                    "refinement to ({m}, {n}) did not reduce every error: {errors:?} vs {p:?}"
                ));
            }
        }
        prev = Some(errors.clone());
        finest = errors;
    }
    let worst = finest.worst();
    if worst > 0.10 {
        return fail(format!("worst relative error {worst:.4} exceeds 0.10"));
    }
    if elapsed > 120.0 {
        return fail(format!("finest solve took {elapsed:.1} s > 120 s"));
    }
    ok(format!(
        "worst error {worst:.4} <= 0.10, monotone over two refinements, finest solve {elapsed:.1} s"
    ))
}

/// Under zero controls the benchmark cost reduces to an Ito-isometry integral
/// with the closed-form value 1/2 - (1 - e^-2)/4.
fn criterion_2() -> Result<Outcome> {
    let lc = example_lc_data();
    let (particles, steps) = (100_000, 256);
    let t0 = Instant::now();
    let grid = make_grid(lc.dynamics.horizon, steps)?;
    let noise = sample_brownian(&grid, particles, 1, 42)?;
    let q = ControlQuartet::zero(lc.dynamics.dims, particles, grid.n_nodes());
    let (x1, x2) = simulate_state(&lc.dynamics, &q, &grid, &noise)?;
    let cost = cost_lc(&lc, &q, &x1, &x2, &grid)?;
    let elapsed = t0.elapsed().as_secs_f64();
    let exact = ito_isometry_cost();
    let rel = (cost.total - exact).abs() / exact;
    if rel > 0.01 {
        return fail(format!("cost {:.6} vs exact {exact:.6}, relative gap {rel:.4} > 0.01", cost.total));
    }
    if elapsed > 60.0 {
        return fail(format!("took {elapsed:.1} s > 60 s"));
    }
    ok(format!("cost {:.6} vs exact {exact:.6} (relative gap {rel:.4}), {elapsed:.1} s", cost.total))
}

/// Twenty random adapted perturbations of the extracted optimum all satisfy
/// the strong-convexity gap inequality on common noise, up to three standard
/// errors of the Monte Carlo gap estimate.
fn criterion_3() -> Result<Outcome> {
    let lc = example_lc_data();
    let c = lc_hamiltonian(&lc)?;
    let c0 = base_coefficients(&c.structural)?;
    let (particles, steps) = (2048, 32);
    let grid = make_grid(lc.dynamics.horizon, steps)?;
    let noise = sample_brownian(&grid, particles, 1, 42)?;
    let cfg = SolverConfig::with_defaults(particles, steps, 42);
    let (v1, v2, _) = continuation_solve(&c, &c0, &grid, &noise, &cfg)?;
    let q_opt = extract_lc_controls(&lc, &v1, &v2, &grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let mut candidates = Vec::new();
    for _ in 0..20 {
        let mut q = q_opt.clone();
        // adapted perturbation: constant + linear-in-W(t) terms per control
        let coef: Vec<f64> = (0..6).map(|_| 0.3 * rng.gen_range(-1.0..1.0f64)).collect();
        q.xi1[0] += coef[0];
        q.xi2[0] += coef[1];
        for p in 0..particles {
            for node in 0..grid.n_nodes() {
                let w = noise.path(p, node)[0];
                q.u1.at_mut(p, node)[0] += coef[2] + coef[3] * w;
                q.u2.at_mut(p, node)[0] += coef[4] + coef[5] * w;
            }
        }
        candidates.push(q);
    }
    let entries = optimality_gap_check_lc(&lc, &q_opt, &candidates, &grid, &noise)?;
    let worst = entries
        .iter()
        .map(|e| e.margin())
        .fold(f64::INFINITY, f64::min);
    if let Some(e) = entries.iter().find(|e| !e.passes()) {
        return fail(format!(
            "gap {:.5} violates bound {:.5} (tolerance {:.5})",
            e.gap, e.bound, e.tolerance
        ));
    }
    ok(format!("20/20 gaps dominate their bounds, worst margin {worst:.5}"))
}

/// The Hamiltonian-system route and direct projected-gradient minimization
/// agree on the constrained scalar LQ instance: costs within 1e-3 and control
/// processes within 5% relative L2.
fn criterion_4() -> Result<Outcome> {
    let lq = scalar_lqic_instance();
    let (particles, steps) = (512, 4);
    let c = lqic_hamiltonian(&lq)?;
    let c0 = base_coefficients(&c.structural)?;
    let grid = make_grid(lq.dynamics.horizon, steps)?;
    let noise = sample_brownian(&grid, particles, 1, 42)?;
    let cfg = SolverConfig::with_defaults(particles, steps, 42);
    let (v1, v2, _) = continuation_solve(&c, &c0, &grid, &noise, &cfg)?;
    let q_h = extract_lqic_controls(&lq, &v1, &v2, &grid)?;
    let (x1, x2) = simulate_state(&lq.dynamics, &q_h, &grid, &noise)?;
    let cost_h = cost_lqic(&lq, &q_h, &x1, &x2, &grid)?;
    let (q_b, cost_b) = brute_force_lqic(&lq, &grid, &noise, 400_000, 0.3)?;
    let cost_gap = (cost_h.total - cost_b.total).abs();
    let cost_bar = 1e-3 * cost_h.total.abs().max(1.0);
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in [(&q_h.u1, &q_b.u1), (&q_h.u2, &q_b.u2)] {
        for p in 0..particles {
            for node in 0..steps {
                let d = a.at(p, node)[0] - b.at(p, node)[0];
                num += d * d;
                den += b.at(p, node)[0] * b.at(p, node)[0];
            }
        }
    }
    let rel_u = (num / den).sqrt();
    if cost_gap > cost_bar {
        return fail(format!("cost gap {cost_gap:.2e} exceeds {cost_bar:.2e}"));
    }
    if rel_u > 0.05 {
        return fail(format!("control gap {rel_u:.4} exceeds 0.05"));
    }
    ok(format!("cost gap {cost_gap:.2e} <= {cost_bar:.2e}, control gap {rel_u:.4} <= 0.05"))
}

fn random_set(rng: &mut ChaCha8Rng, dim: usize) -> ConvexSet {
    match rng.gen_range(0..5) {
        0 => ConvexSet::Full { dim },
        1 => {
            let lo: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..0.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|a| a + rng.gen_range(0.1..3.0)).collect();
            ConvexSet::Box { lo, hi }
        }
        2 => ConvexSet::Ball {
            center: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            radius: rng.gen_range(0.2..2.0),
        },
        3 => ConvexSet::Halfspace {
            normal: (0..dim).map(|_| rng.gen_range(-1.0..1.0) + 0.1).collect(),
            offset: rng.gen_range(-1.0..1.0),
        },
        _ => ConvexSet::Singleton {
            point: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        },
    }
}

/// Weighted projections over 1000 random (set, weight, point) triples satisfy
/// the variational characterization, firm nonexpansiveness, and the Euclidean
/// Lipschitz transfer bound with operator-norm-over-delta constant.
fn criterion_5() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = f64::NEG_INFINITY;
    for case in 0..1000 {
        let dim = rng.gen_range(1..4);
        let set = random_set(&mut rng, dim);
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-0.7..0.7f64));
        let w = WeightedNorm::new(&a * a.transpose() + DMatrix::identity(dim, dim) * 0.5, 0.5)?;
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let xb: Vec<f64> = (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let p = project(&set, &w, &x)?;
        let pb = project(&set, &w, &xb)?;
        if !set.contains(&p, 1e-9) {
            return fail(format!("case {case}: projection left the set"));
        }
        let tol = |scale: f64| 1e-10 * (1.0 + scale.abs());
        for _ in 0..10 {
            let probe: Vec<f64> = (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let y = project(&set, &WeightedNorm::identity(dim), &probe)?;
            let xm: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a - b).collect();
            let ym: Vec<f64> = y.iter().zip(&p).map(|(a, b)| a - b).collect();
            let inner = weighted_inner(&w, &xm, &ym);
            worst = worst.max(inner);
            if inner > tol(weighted_norm_of(&w, &xm) * weighted_norm_of(&w, &ym)) {
                return fail(format!("case {case}: variational inequality violated by {inner:.2e}"));
            }
        }
        let dp: Vec<f64> = p.iter().zip(&pb).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = x.iter().zip(&xb).map(|(a, b)| a - b).collect();
        let lhs = weighted_inner(&w, &dp, &dp);
        let rhs = weighted_inner(&w, &dp, &dx);
        if lhs > rhs + tol(lhs + rhs.abs()) {
            return fail(format!("case {case}: firm nonexpansiveness violated by {:.2e}", lhs - rhs));
        }
        let e2 = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        let bound = (w.operator_norm() / w.delta) * e2(&dx);
        if e2(&dp) > bound + tol(bound) {
            return fail(format!("case {case}: Lipschitz transfer violated by {:.2e}", e2(&dp) - bound));
        }
    }
    ok(format!("1000 random cases, worst variational inner product {worst:.2e}"))
}

/// Gradient inversion round-trips to 1e-8 and is 1/delta-Lipschitz on the
/// exponential benchmark family and on random strongly convex quadratics.
fn criterion_6() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let family = mffbsde::convex::example_family();
    let mut prev: Option<(f64, f64)> = None;
    for case in 0..1000 {
        let v = rng.gen_range(-5.0..5.0f64);
        let x = grad_inverse(&family, &[v], 1e-10)?[0];
        let back = (family.grad)(&[x])[0];
        if (back - v).abs() > 1e-8 {
            return fail(format!("family case {case}: roundtrip residual {:.2e}", (back - v).abs()));
        }
        if let Some((pv, px)) = prev {
            if (x - px).abs() > (v - pv).abs() / family.strong_param + 1e-9 {
                return fail(format!("family case {case}: Lipschitz bound violated"));
            }
        }
        prev = Some((v, x));
    }
    for case in 0..1000 {
        let n = rng.gen_range(1..4);
        let delta = rng.gen_range(0.3..2.0f64);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0f64));
        let q = &a * a.transpose() + DMatrix::identity(n, n) * delta;
        let mut f = ConvexFunction::quadratic(q, delta);
        if rng.gen_bool(0.5) {
            f.grad_inv = None;
        }
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let vb: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x = grad_inverse(&f, &v, 1e-12)?;
        let xb = grad_inverse(&f, &vb, 1e-12)?;
        let back = (f.grad)(&x);
        let res = back.iter().zip(&v).map(|(b, vi)| (b - vi).abs()).fold(0.0f64, f64::max);
        if res > 1e-8 {
            return fail(format!("quadratic case {case}: roundtrip residual {res:.2e}"));
        }
        let e = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
        };
        if e(&x, &xb) > e(&v, &vb) / delta + 1e-8 {
            return fail(format!("quadratic case {case}: Lipschitz bound violated"));
        }
    }
    ok("1000 family and 1000 quadratic cases round-trip and stay 1/delta-Lipschitz".into())
}

/// The benchmark coefficients pass every structural checker with 10^4 samples,
/// the growth probe confirms the saturating adjoint, and deliberately broken
/// variants are rejected with a witness.
fn criterion_7() -> Result<Outcome> {
    let c = lc_hamiltonian(&example_lc_data())?;
    let n = 10_000;
    let mut reports = Vec::new();
    let mut s = BoxSampler::new(101, 10.0);
    reports.push(check_lipschitz(&c, &mut s, n));
    let mut s = BoxSampler::new(103, 10.0);
    reports.push(check_adjoint(&c.structural, &mut s, n));
    let mut s = BoxSampler::new(107, 5.0);
    reports.push(check_monotonicity(&c, &mut s, n));
    let mut s = BoxSampler::new(109, 5.0);
    reports.push(check_domination(&c, &mut s, n));
    if let Some(r) = reports.iter().find(|r| !r.passed()) {
        return fail(format!("{} reported {} violations", r.name, r.violations));
    }
    let growth =
        check_no_linear_domination(&c.structural, &[0.0, 1.0, 100.0, 101.0, 500.0, 1000.0]);
    if !growth.passed() {
        return fail("growth probe found a squared difference quotient >= 0.01 beyond |u| = 100".into());
    }

    // broken variants must fail and carry a witness
    let mut s1 = c.structural.clone();
    let flip: AdjointH = Arc::new(|_t, u: &[f64]| u.to_vec());
    s1.h = [flip.clone(), flip];
    let mut sampler = BoxSampler::new(5, 10.0);
    let r = check_adjoint(&s1, &mut sampler, 500);
    if r.passed() || r.witness.is_none() {
        return fail("sign-flipped adjoint was not rejected with a witness".into());
    }

    let mut c2 = lc_hamiltonian(&example_lc_data())?;
    let orig = c2.gamma[0].clone();
    let broken: GammaFn = Arc::new(move |view, out| {
        orig(view, out);
        for (f, x) in out.f.iter_mut().zip(view.own_x) {
            *f += 2.0 * x;
        }
    });
    c2.gamma[0] = broken;
    let mut sampler = BoxSampler::new(7, 5.0);
    let r = check_monotonicity(&c2, &mut sampler, 500);
    if r.passed() || r.witness.is_none() {
        return fail("anti-monotone generator was not rejected with a witness".into());
    }

    let mut c3 = lc_hamiltonian(&example_lc_data())?;
    c3.structural.constants =
        AssumptionConstants { l_sigma: 1e-4, ..c3.structural.constants };
    let mut sampler = BoxSampler::new(13, 10.0);
    let r = check_lipschitz(&c3, &mut sampler, 500);
    if r.passed() || r.witness.is_none() {
        return fail("understated Lipschitz constant was not rejected with a witness".into());
    }

    ok(format!("4 checkers x {n} samples clean, growth probe saturates, 3 broken variants rejected"))
}

/// Recorded contraction ratios stay below one after the first sweep, and
/// continuation through {0, 0.5, 1} lands on the same fixed point as direct
/// Picard iteration at full coupling.
fn criterion_8() -> Result<Outcome> {
    let lc = example_lc_data();
    let c = lc_hamiltonian(&lc)?;
    let c0 = base_coefficients(&c.structural)?;
    let (particles, steps) = (1024, 16);
    let grid = make_grid(lc.dynamics.horizon, steps)?;
    let noise = sample_brownian(&grid, particles, 1, 42)?;
    let cfg = SolverConfig::with_defaults(particles, steps, 42);
    let (c1, c2v, rep_c) = continuation_solve(&c, &c0, &grid, &noise, &cfg)?;
    let (d1, d2, rep_d) = picard_solve(&c, &grid, &noise, &cfg)?;
    for rep in [&rep_c, &rep_d] {
        if rep.contraction_ratios.iter().skip(1).any(|&r| r >= 1.0) {
            return fail(format!("contraction ratio >= 1 in trace {:?}", rep.contraction_ratios));
        }
    }
    let diff = |a: &TripleProcess, b: &TripleProcess| {
        let mut d = a.clone();
        for (pa, pb) in [(&mut d.x, &b.x), (&mut d.y, &b.y), (&mut d.z, &b.z)] {
            for p in 0..pa.particles {
                for n in 0..pa.nodes {
                    for (u, v) in pa.at_mut(p, n).iter_mut().zip(pb.at(p, n)) {
                        *u -= v;
                    }
                }
            }
        }
        m_norm(&d, &grid)
    };
    let dist = diff(&c1, &d1).max(diff(&c2v, &d2));
    let bar = 2.0 * cfg.picard_tol;
    if dist > bar {
        return fail(format!("continuation and direct Picard differ by {dist:.2e} > {bar:.2e}"));
    }
    ok(format!(
        "ratios < 1 after sweep 1 (continuation and direct), fixed points differ by {dist:.2e} <= {bar:.2e}"
    ))
}

/// Perturbation-response ratios at forcing sizes 1e-2 and 1e-3 agree within a
/// factor of two: an empirical Lipschitz-stability check.
fn criterion_9() -> Result<Outcome> {
    let lc = example_lc_data();
    let c = lc_hamiltonian(&lc)?;
    let c0 = base_coefficients(&c.structural)?;
    let (particles, steps) = (512, 16);
    let grid = make_grid(lc.dynamics.horizon, steps)?;
    let noise = sample_brownian(&grid, particles, 1, 42)?;
    let cfg = SolverConfig::with_defaults(particles, steps, 42);
    let n = c.structural.dims.n;
    let mut beta = PerturbationData::zero(c.structural.dims);
    for eq in 0..2 {
        beta.xi[eq] = vec![1.0; n];
        beta.beta[eq] = Arc::new(|_view, out: &mut GammaBuf| {
            for v in out.b.iter_mut().chain(out.f.iter_mut()) {
                *v += 1.0;
            }
        });
    }
    let ratios = stability_probe(&c, &c0, &beta, &[1e-2, 1e-3], &grid, &noise, &cfg)?;
    let factor = ratios[0].max(ratios[1]) / ratios[0].min(ratios[1]);
    if !(factor <= 2.0) {
        return fail(format!("response ratios {ratios:?} differ by factor {factor:.2}"));
    }
    ok(format!("response ratios {:.3} and {:.3}, factor {factor:.3} <= 2", ratios[0], ratios[1]))
}

/// Two CLI runs with the same configuration and seed emit byte-identical
/// JSON and CSV artifacts.
fn criterion_10() -> Result<Outcome> {
    let bin = env!("CARGO_BIN_EXE_mffbsde");
    let base = tempfile::tempdir()?;
    let mut digests = Vec::new();
    for run in 0..2 {
        let out = base.path().join(format!("run{run}"));
        let status = Command::new(bin)
            .args(["example-lc", "--particles", "256", "--steps", "4", "--seed", "9"])
            .arg("--out")
            .arg(&out)
            .status()?;
        if !status.success() {
            return fail(format!("benchmark run exited with {status}"));
        }
        let status = Command::new(bin)
            .args(["lqic-compare", "--particles", "128", "--steps", "4", "--seed", "9"])
            .arg("--out")
            .arg(&out)
            .status()?;
        if !status.success() {
            return fail(format!("comparison run exited with {status}"));
        }
        let mut names: Vec<_> = std::fs::read_dir(&out)?
            .map(|e| e.map(|e| e.file_name()))
            .collect::<std::io::Result<_>>()?;
        names.sort();
        let mut bytes = Vec::new();
        for name in &names {
            bytes.push((name.clone(), std::fs::read(out.join(name))?));
        }
        digests.push(bytes);
    }
    if digests[0].len() != 3 {
        return fail(format!("expected 3 artifacts, found {}", digests[0].len()));
    }
    if digests[0] != digests[1] {
        let diff: Vec<_> = digests[0]
            .iter()
            .zip(&digests[1])
            .filter(|(a, b)| a != b)
            .map(|(a, _)| a.0.to_string_lossy().into_owned())
            .collect();
        return fail(format!("artifacts differ between identical runs: {diff:?}"));
    }
    ok(format!("{} artifacts byte-identical across two identical runs", digests[0].len()))
}
