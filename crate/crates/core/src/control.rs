//! Control synthesis on top of a solved adjoint system: read off the optimal
//! quadruple (initial controls and running controls for both players),
//! simulate the controlled state pair, evaluate the cost functionals of both
//! problems, and run the certificate checks (optimality gap inequality and
//! duality identity).

use crate::coefficients::{
    invert_two, mat_tvec, mat_vec_acc, Dims, Dynamics, LCProblemData, LQICProblemData, GRAD_TOL,
};
use crate::convex::grad_inverse;
use crate::ensemble::{empirical_mean, EnsembleProcess, TripleProcess};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::noise::BrownianEnsemble;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// A quadruple of admissible controls: the two deterministic initial controls
/// and the two running control processes (one value per particle and node).
#[derive(Debug, Clone)]
pub struct ControlQuartet {
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
    pub u1: EnsembleProcess,
    pub u2: EnsembleProcess,
}

impl ControlQuartet {
    pub fn zero(dims: Dims, particles: usize, nodes: usize) -> Self {
        ControlQuartet {
            xi1: vec![0.0; dims.m],
            xi2: vec![0.0; dims.m],
            u1: EnsembleProcess::zeros(particles, nodes, dims.k),
            u2: EnsembleProcess::zeros(particles, nodes, dims.k),
        }
    }

    pub fn xi(&self, eq: usize) -> &[f64] {
        if eq == 0 {
            &self.xi1
        } else {
            &self.xi2
        }
    }

    pub fn u(&self, eq: usize) -> &EnsembleProcess {
        if eq == 0 {
            &self.u1
        } else {
            &self.u2
        }
    }
}

/// Cost split by source: initial-control term, terminal term, running state
/// term, running control term, and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub initial_term: f64,
    pub terminal_term: f64,
    pub running_state_term: f64,
    pub running_control_term: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn new(initial: f64, terminal: f64, run_state: f64, run_control: f64) -> Self {
        CostBreakdown {
            initial_term: initial,
            terminal_term: terminal,
            running_state_term: run_state,
            running_control_term: run_control,
            total: initial + terminal + run_state + run_control,
        }
    }
}

/// One cost comparison against the extracted optimum: the observed cost gap,
/// the strong-convexity lower bound it must dominate, and the Monte Carlo
/// tolerance (three standard errors of the gap estimate).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapEntry {
    pub gap: f64,
    pub bound: f64,
    pub tolerance: f64,
}

impl GapEntry {
    /// Slack of the inequality gap >= bound - tolerance.
    pub fn margin(&self) -> f64 {
        self.gap - self.bound + self.tolerance
    }

    pub fn passes(&self) -> bool {
        let slack = 1e-9 * (1.0 + self.gap.abs() + self.bound.abs());
        self.margin() >= -slack && self.gap >= -self.tolerance - slack
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let x = DVector::from_column_slice(v);
    (m * &x).dot(&x)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_solution_shapes(
    dy: &Dynamics,
    v1: &TripleProcess,
    v2: &TripleProcess,
    grid: &TimeGrid,
) -> Result<()> {
    let Dims { n, d, .. } = dy.dims;
    for (name, v) in [("first", v1), ("second", v2)] {
        if v.y.width != n || v.z.width != n * d {
            return Err(Error::invalid(format!(
                "{name} solution has widths (y {}, z {}), expected ({n}, {})",
                v.y.width,
                v.z.width,
                n * d
            )));
        }
        if v.y.nodes != grid.n_nodes() || v.z.nodes != grid.n_nodes() {
            return Err(Error::invalid("solution and grid disagree on node count"));
        }
    }
    if v1.y.particles != v2.y.particles {
        return Err(Error::invalid("solutions must share the particle count"));
    }
    Ok(())
}

/// The adjoint argument B_i^T y + tau Bbar_i^T E[y] + D_i^T z at a fixed node,
/// given the matrices frozen at that node's time.
fn adjoint_argument_at(
    b: &DMatrix<f64>,
    bbar: &DMatrix<f64>,
    d: &DMatrix<f64>,
    tau: f64,
    y: &[f64],
    ybar: &[f64],
    z: &[f64],
) -> Vec<f64> {
    let mut arg = mat_tvec(b, y);
    for (a, v) in arg.iter_mut().zip(mat_tvec(bbar, ybar)) {
        *a += tau * v;
    }
    for (a, v) in arg.iter_mut().zip(mat_tvec(d, z)) {
        *a += v;
    }
    arg
}

/// Optimal quadruple of the linear-convex problem, read off a solved adjoint
/// system: initial controls from the inverse gradients of the initial costs
/// applied to the H-weighted combinations of E[Y_i(0)] (with the 1/(1-tau^2)
/// mixing), running controls from the inverse gradients of the running
/// control costs applied to -(B^T Y + tau Bbar^T E[Y] + D^T Z).
///
/// Y(0) enters through its ensemble mean: the initial adjoint value is
/// deterministic, and averaging removes the regression noise.
pub fn extract_lc_controls(
    lc: &LCProblemData,
    v1: &TripleProcess,
    v2: &TripleProcess,
    grid: &TimeGrid,
) -> Result<ControlQuartet> {
    lc.validate()?;
    let dy = &lc.dynamics;
    check_solution_shapes(dy, v1, v2, grid)?;
    let Dims { k, .. } = dy.dims;
    let tau = dy.tau;
    let den = 1.0 - tau * tau;

    let ybar1 = empirical_mean(&v1.y, 0)?;
    let ybar2 = empirical_mean(&v2.y, 0)?;
    let hy1 = mat_tvec(&dy.h_mat, &ybar1);
    let hy2 = mat_tvec(&dy.h_mat, &ybar2);
    let w1: Vec<f64> = hy1.iter().zip(&hy2).map(|(a, b)| (a - tau * b) / den).collect();
    let w2: Vec<f64> = hy2.iter().zip(&hy1).map(|(a, b)| (a - tau * b) / den).collect();
    let (xi1, xi2) = invert_two(&lc.f1[0], &lc.f1[1], tau, &w1, &w2)?;

    let particles = v1.y.particles;
    let nodes = grid.n_nodes();
    let mut u1 = EnsembleProcess::zeros(particles, nodes, k);
    let mut u2 = EnsembleProcess::zeros(particles, nodes, k);
    for eq in 0..2 {
        let v = if eq == 0 { v1 } else { v2 };
        let u = if eq == 0 { &mut u1 } else { &mut u2 };
        for node in 0..nodes {
            let t = grid.node(node);
            let f = lc.f4[eq].at(t);
            let bm = (dy.b[eq])(t);
            let bbm = (dy.bbar[eq])(t);
            let dm = (dy.d[eq])(t);
            let ybar = empirical_mean(&v.y, node)?;
            for p in 0..particles {
                let arg = adjoint_argument_at(
                    &bm,
                    &bbm,
                    &dm,
                    tau,
                    v.y.at(p, node),
                    &ybar,
                    v.z.at(p, node),
                );
                let neg: Vec<f64> = arg.iter().map(|x| -x).collect();
                let val = grad_inverse(&f, &neg, GRAD_TOL)?;
                u.set(p, node, &val);
            }
        }
    }
    Ok(ControlQuartet { xi1, xi2, u1, u2 })
}

/// Optimal quadruple of the constrained linear-quadratic problem: weighted
/// projections of the unconstrained minimizers -M^{-1} H^T E[Y_i(0)] and
/// -R(t)^{-1} (B^T Y + tau Bbar^T E[Y] + D^T Z) onto the constraint sets.
/// Every output lies in its constraint set by the projection postcondition.
pub fn extract_lqic_controls(
    lq: &LQICProblemData,
    v1: &TripleProcess,
    v2: &TripleProcess,
    grid: &TimeGrid,
) -> Result<ControlQuartet> {
    let dy = &lq.dynamics;
    dy.validate()?;
    check_solution_shapes(dy, v1, v2, grid)?;
    let Dims { k, .. } = dy.dims;
    let tau = dy.tau;

    let mut xis: Vec<Vec<f64>> = Vec::with_capacity(2);
    for eq in 0..2 {
        let v = if eq == 0 { v1 } else { v2 };
        let ybar = empirical_mean(&v.y, 0)?;
        let hy = mat_tvec(&dy.h_mat, &ybar);
        let minv = lq.m_mat[eq]
            .clone()
            .lu()
            .solve(&DVector::from_column_slice(&hy))
            .ok_or_else(|| Error::numeric("M must be invertible"))?;
        let target: Vec<f64> = minv.iter().map(|x| -x).collect();
        let w = lq.initial_weight(eq)?;
        xis.push(crate::convex::project(&lq.u0, &w, &target)?);
    }

    let particles = v1.y.particles;
    let nodes = grid.n_nodes();
    let mut u1 = EnsembleProcess::zeros(particles, nodes, k);
    let mut u2 = EnsembleProcess::zeros(particles, nodes, k);
    for eq in 0..2 {
        let v = if eq == 0 { v1 } else { v2 };
        let u = if eq == 0 { &mut u1 } else { &mut u2 };
        for node in 0..nodes {
            let t = grid.node(node);
            let bm = (dy.b[eq])(t);
            let bbm = (dy.bbar[eq])(t);
            let dm = (dy.d[eq])(t);
            let rlu = (lq.r[eq])(t).lu();
            let set = (lq.u_of_t)(t);
            let w = lq.running_weight(eq, t)?;
            let ybar = empirical_mean(&v.y, node)?;
            for p in 0..particles {
                let arg = adjoint_argument_at(
                    &bm,
                    &bbm,
                    &dm,
                    tau,
                    v.y.at(p, node),
                    &ybar,
                    v.z.at(p, node),
                );
                let rinv = rlu
                    .solve(&DVector::from_column_slice(&arg))
                    .ok_or_else(|| Error::numeric("R(t) must be invertible"))?;
                let target: Vec<f64> = rinv.iter().map(|x| -x).collect();
                let val = crate::convex::project(&set, &w, &target)?;
                u.set(p, node, &val);
            }
        }
    }
    let xi2 = xis.pop().unwrap();
    let xi1 = xis.pop().unwrap();
    Ok(ControlQuartet { xi1, xi2, u1, u2 })
}

/// Euler simulation of the controlled state pair under a given quadruple:
/// X_i(0) = H xi_i + x0, drift A_i X_i + B_i u_i + tau Bbar_i E[u_i] + the
/// mean couplings (equation one feels Abar_2 E[X_2] and Abar_1 E[X_1],
/// equation two feels Abar_2 E[X_1]) + rho_i, diffusion C_ij X_i + D_ij u_i
/// + kappa_ij per noise column.
pub fn simulate_state(
    dy: &Dynamics,
    q: &ControlQuartet,
    grid: &TimeGrid,
    noise: &BrownianEnsemble,
) -> Result<(EnsembleProcess, EnsembleProcess)> {
    dy.validate()?;
    let Dims { n, m, k, d } = dy.dims;
    if q.xi1.len() != m || q.xi2.len() != m {
        return Err(Error::invalid("initial controls must have length m"));
    }
    if q.u1.width != k || q.u2.width != k {
        return Err(Error::invalid("running controls must have width k"));
    }
    let particles = noise.particles;
    let nodes = grid.n_nodes();
    if q.u1.particles != particles || q.u2.particles != particles {
        return Err(Error::invalid("controls and noise disagree on particle count"));
    }
    if q.u1.nodes != nodes || q.u2.nodes != nodes || noise.steps != grid.steps {
        return Err(Error::invalid("controls, noise, and grid disagree on node count"));
    }
    if noise.dims != d {
        return Err(Error::invalid("noise dimension must match the diffusion count"));
    }

    let mut x1 = EnsembleProcess::zeros(particles, nodes, n);
    let mut x2 = EnsembleProcess::zeros(particles, nodes, n);
    for eq in 0..2 {
        let x = if eq == 0 { &mut x1 } else { &mut x2 };
        let mut init = dy.x0.clone();
        mat_vec_acc(&dy.h_mat, q.xi(eq), 1.0, &mut init);
        for p in 0..particles {
            x.set(p, 0, &init);
        }
    }

    let dt = grid.dt;
    for step in 0..grid.steps {
        let t = grid.node(step);
        let xbar = [empirical_mean(&x1, step)?, empirical_mean(&x2, step)?];
        let ubar = [empirical_mean(&q.u1, step)?, empirical_mean(&q.u2, step)?];
        for eq in 0..2 {
            let am = (dy.a[eq])(t);
            let abar1 = (dy.abar[0])(t);
            let abar2 = (dy.abar[1])(t);
            let bm = (dy.b[eq])(t);
            let bbm = (dy.bbar[eq])(t);
            let cm = (dy.c[eq])(t);
            let dm = (dy.d[eq])(t);
            for p in 0..particles {
                let (xc, u) = if eq == 0 {
                    (x1.at(p, step).to_vec(), q.u1.at(p, step))
                } else {
                    (x2.at(p, step).to_vec(), q.u2.at(p, step))
                };
                let w = noise.path(p, step);
                let mut drift = (dy.rho[eq])(t, w);
                mat_vec_acc(&am, &xc, 1.0, &mut drift);
                mat_vec_acc(&bm, u, 1.0, &mut drift);
                mat_vec_acc(&bbm, &ubar[eq], dy.tau, &mut drift);
                if eq == 0 {
                    mat_vec_acc(&abar2, &xbar[1], 1.0, &mut drift);
                    mat_vec_acc(&abar1, &xbar[0], 1.0, &mut drift);
                } else {
                    mat_vec_acc(&abar2, &xbar[0], 1.0, &mut drift);
                }
                let mut sig = (dy.kappa[eq])(t, w);
                mat_vec_acc(&cm, &xc, 1.0, &mut sig);
                mat_vec_acc(&dm, u, 1.0, &mut sig);
                let dw = noise.increment(p, step);
                let mut next = vec![0.0; n];
                for i in 0..n {
                    let mut v = xc[i] + dt * drift[i];
                    for j in 0..d {
                        v += sig[j * n + i] * dw[j];
                    }
                    if !v.is_finite() {
                        return Err(Error::numeric(format!(
                            "state blew up at node {} in equation {}",
                            step + 1,
                            eq + 1
                        )));
                    }
                    next[i] = v;
                }
                let x = if eq == 0 { &mut x1 } else { &mut x2 };
                x.set(p, step + 1, &next);
            }
        }
    }
    Ok((x1, x2))
}

/// Per-particle random cost parts (terminal, running state, running control)
/// of the linear-convex functional, left-endpoint quadrature.
fn lc_random_parts(
    lc: &LCProblemData,
    q: &ControlQuartet,
    x1: &EnsembleProcess,
    x2: &EnsembleProcess,
    grid: &TimeGrid,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let particles = x1.particles;
    let last = grid.n_nodes() - 1;
    let dt = grid.dt;
    let mut terminal = vec![0.0; particles];
    let mut run_state = vec![0.0; particles];
    let mut run_control = vec![0.0; particles];
    for p in 0..particles {
        let s: Vec<f64> =
            x1.at(p, last).iter().zip(x2.at(p, last)).map(|(a, b)| a + b).collect();
        terminal[p] = (lc.f2[0].eval)(&s) + (lc.f2[1].eval)(&s);
    }
    for step in 0..grid.steps {
        let t = grid.node(step);
        for p in 0..particles {
            run_state[p] +=
                dt * ((lc.f3[0].eval)(t, x1.at(p, step)) + (lc.f3[1].eval)(t, x2.at(p, step)));
            run_control[p] +=
                dt * ((lc.f4[0].eval)(t, q.u1.at(p, step)) + (lc.f4[1].eval)(t, q.u2.at(p, step)));
        }
    }
    for parts in [&terminal, &run_state, &run_control] {
        if parts.iter().any(|v| !v.is_finite()) {
            return Err(Error::Admissibility(
                "cost integrand is not finite on the ensemble".into(),
            ));
        }
    }
    Ok((terminal, run_state, run_control))
}

fn lc_initial_cost(lc: &LCProblemData, q: &ControlQuartet) -> f64 {
    let tau = lc.dynamics.tau;
    let s1: Vec<f64> = q.xi1.iter().zip(&q.xi2).map(|(a, b)| a + tau * b).collect();
    let s2: Vec<f64> = q.xi2.iter().zip(&q.xi1).map(|(a, b)| a + tau * b).collect();
    (lc.f1[0].eval)(&s1) + (lc.f1[1].eval)(&s2)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Linear-convex cost of a quadruple and its simulated states:
/// f11(xi1 + tau xi2) + f12(xi2 + tau xi1), expected terminal cost of
/// X1(T) + X2(T), and the running state and control integrals.
pub fn cost_lc(
    lc: &LCProblemData,
    q: &ControlQuartet,
    x1: &EnsembleProcess,
    x2: &EnsembleProcess,
    grid: &TimeGrid,
) -> Result<CostBreakdown> {
    let initial = lc_initial_cost(lc, q);
    if !initial.is_finite() {
        return Err(Error::Admissibility("initial cost is not finite".into()));
    }
    let (terminal, run_state, run_control) = lc_random_parts(lc, q, x1, x2, grid)?;
    Ok(CostBreakdown::new(initial, mean(&terminal), mean(&run_state), mean(&run_control)))
}

const MEMBERSHIP_TOL: f64 = 1e-8;

/// Per-particle random cost parts of the constrained quadratic functional.
fn lqic_random_parts(
    lq: &LQICProblemData,
    q: &ControlQuartet,
    x1: &EnsembleProcess,
    x2: &EnsembleProcess,
    grid: &TimeGrid,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let particles = x1.particles;
    let last = grid.n_nodes() - 1;
    let dt = grid.dt;
    let mut terminal = vec![0.0; particles];
    let mut run_state = vec![0.0; particles];
    let mut run_control = vec![0.0; particles];
    for p in 0..particles {
        let s: Vec<f64> =
            x1.at(p, last).iter().zip(x2.at(p, last)).map(|(a, b)| a + b).collect();
        terminal[p] = 0.5 * (quad_form(&lq.g_mat[0], &s) + quad_form(&lq.g_mat[1], &s));
    }
    for step in 0..grid.steps {
        let t = grid.node(step);
        let q1 = (lq.q[0])(t);
        let q2 = (lq.q[1])(t);
        let r1 = (lq.r[0])(t);
        let r2 = (lq.r[1])(t);
        let set = (lq.u_of_t)(t);
        for p in 0..particles {
            for u in [q.u1.at(p, step), q.u2.at(p, step)] {
                if !set.contains(u, MEMBERSHIP_TOL) {
                    return Err(Error::Admissibility(format!(
                        "running control leaves its constraint set at node {step}"
                    )));
                }
            }
            run_state[p] += 0.5
                * dt
                * (quad_form(&q1, x1.at(p, step)) + quad_form(&q2, x2.at(p, step)));
            run_control[p] += 0.5
                * dt
                * (quad_form(&r1, q.u1.at(p, step)) + quad_form(&r2, q.u2.at(p, step)));
        }
    }
    for parts in [&terminal, &run_state, &run_control] {
        if parts.iter().any(|v| !v.is_finite()) {
            return Err(Error::Admissibility(
                "cost integrand is not finite on the ensemble".into(),
            ));
        }
    }
    Ok((terminal, run_state, run_control))
}

fn lqic_initial_cost(lq: &LQICProblemData, q: &ControlQuartet) -> Result<f64> {
    for xi in [&q.xi1, &q.xi2] {
        if !lq.u0.contains(xi, MEMBERSHIP_TOL) {
            return Err(Error::Admissibility(
                "initial control leaves its constraint set".into(),
            ));
        }
    }
    Ok(0.5 * (quad_form(&lq.m_mat[0], &q.xi1) + quad_form(&lq.m_mat[1], &q.xi2)))
}

/// Constrained quadratic cost of a quadruple and its simulated states:
/// (1/2)<M_i xi_i, xi_i>, (1/2)E<(G1+G2) s, s> at s = X1(T) + X2(T), and the
/// running Q and R quadratics. Constraint membership is enforced.
pub fn cost_lqic(
    lq: &LQICProblemData,
    q: &ControlQuartet,
    x1: &EnsembleProcess,
    x2: &EnsembleProcess,
    grid: &TimeGrid,
) -> Result<CostBreakdown> {
    let initial = lqic_initial_cost(lq, q)?;
    let (terminal, run_state, run_control) = lqic_random_parts(lq, q, x1, x2, grid)?;
    Ok(CostBreakdown::new(initial, mean(&terminal), mean(&run_state), mean(&run_control)))
}

/// E integral of |u1 - u1'|^2 + |u2 - u2'|^2 over the grid (left endpoints).
fn control_square_deviation(q: &ControlQuartet, q0: &ControlQuartet, grid: &TimeGrid) -> f64 {
    let particles = q.u1.particles;
    let dt = grid.dt;
    let mut acc = 0.0;
    for p in 0..particles {
        for step in 0..grid.steps {
            acc += dt
                * (sq_dist(q.u1.at(p, step), q0.u1.at(p, step))
                    + sq_dist(q.u2.at(p, step), q0.u2.at(p, step)));
        }
    }
    acc / particles as f64
}

fn gap_entry(
    initial_diff: f64,
    samples: &[f64],
    base_samples: &[f64],
    bound: f64,
) -> GapEntry {
    let m = samples.len();
    let diffs: Vec<f64> = samples.iter().zip(base_samples).map(|(a, b)| a - b).collect();
    let mu = mean(&diffs);
    let sigma = if m > 1 {
        let var = diffs.iter().map(|d| (d - mu) * (d - mu)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    } else {
        0.0
    };
    GapEntry { gap: initial_diff + mu, bound, tolerance: 3.0 * sigma }
}

fn sum3(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    a.iter().zip(b.iter().zip(c)).map(|(x, (y, z))| x + y + z).collect()
}

/// Checks the strong-convexity gap inequality of the linear-convex problem on
/// a common noise ensemble: for each candidate quadruple q,
/// J(q) - J(q_opt) >= (delta/2) * (|d(xi1 + tau xi2)|^2 + |d(tau xi1 + xi2)|^2
/// + E int |du1|^2 + |du2|^2) up to three standard errors of the Monte Carlo
/// gap estimate.
pub fn optimality_gap_check_lc(
    lc: &LCProblemData,
    q_opt: &ControlQuartet,
    candidates: &[ControlQuartet],
    grid: &TimeGrid,
    noise: &BrownianEnsemble,
) -> Result<Vec<GapEntry>> {
    let tau = lc.dynamics.tau;
    let (x1o, x2o) = simulate_state(&lc.dynamics, q_opt, grid, noise)?;
    let base_init = lc_initial_cost(lc, q_opt);
    let (bt, bs, bc) = lc_random_parts(lc, q_opt, &x1o, &x2o, grid)?;
    let base_samples = sum3(&bt, &bs, &bc);
    let mut out = Vec::with_capacity(candidates.len());
    for q in candidates {
        let (x1, x2) = simulate_state(&lc.dynamics, q, grid, noise)?;
        let init = lc_initial_cost(lc, q);
        let (t, s, c) = lc_random_parts(lc, q, &x1, &x2, grid)?;
        let samples = sum3(&t, &s, &c);
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + tau * y).collect()
        };
        let dev = sq_dist(&mix(&q.xi1, &q.xi2), &mix(&q_opt.xi1, &q_opt.xi2))
            + sq_dist(&mix(&q.xi2, &q.xi1), &mix(&q_opt.xi2, &q_opt.xi1))
            + control_square_deviation(q, q_opt, grid);
        let bound = 0.5 * lc.delta * dev;
        out.push(gap_entry(init - base_init, &samples, &base_samples, bound));
    }
    Ok(out)
}

/// Constrained-quadratic analogue of the gap check: the cost is delta-strongly
/// convex in (xi1, xi2, u1, u2) directly, and the variational inequality at
/// the projected optimum makes the first-order term nonnegative, so
/// J(q) - J(q_opt) >= (delta/2) * (|dxi1|^2 + |dxi2|^2 + E int |du|^2).
pub fn optimality_gap_check_lqic(
    lq: &LQICProblemData,
    q_opt: &ControlQuartet,
    candidates: &[ControlQuartet],
    grid: &TimeGrid,
    noise: &BrownianEnsemble,
) -> Result<Vec<GapEntry>> {
    let (x1o, x2o) = simulate_state(&lq.dynamics, q_opt, grid, noise)?;
    let base_init = lqic_initial_cost(lq, q_opt)?;
    let (bt, bs, bc) = lqic_random_parts(lq, q_opt, &x1o, &x2o, grid)?;
    let base_samples = sum3(&bt, &bs, &bc);
    let mut out = Vec::with_capacity(candidates.len());
    for q in candidates {
        let (x1, x2) = simulate_state(&lq.dynamics, q, grid, noise)?;
        let init = lqic_initial_cost(lq, q)?;
        let (t, s, c) = lqic_random_parts(lq, q, &x1, &x2, grid)?;
        let samples = sum3(&t, &s, &c);
        let dev = sq_dist(&q.xi1, &q_opt.xi1)
            + sq_dist(&q.xi2, &q_opt.xi2)
            + control_square_deviation(q, q_opt, grid);
        let bound = 0.5 * lq.delta * dev;
        out.push(gap_entry(init - base_init, &samples, &base_samples, bound));
    }
    Ok(out)
}

/// Numerical check of the duality identity behind the verification argument:
/// the expected pairing of the terminal and running state-cost gradients with
/// the state deviation equals the pairing of H^T E[Y_i(0)] with the initial
/// control deviation plus the pairing of the adjoint arguments with the
/// running control deviation. Both sides are evaluated on a common ensemble
/// (states re-simulated under both quadruples with the same noise) and the
/// absolute difference is returned; it shrinks like O(dt + M^{-1/2}).
pub fn duality_residual(
    lc: &LCProblemData,
    v1: &TripleProcess,
    v2: &TripleProcess,
    q: &ControlQuartet,
    grid: &TimeGrid,
    noise: &BrownianEnsemble,
) -> Result<f64> {
    let dy = &lc.dynamics;
    check_solution_shapes(dy, v1, v2, grid)?;
    let q_opt = extract_lc_controls(lc, v1, v2, grid)?;
    let (x1s, x2s) = simulate_state(dy, &q_opt, grid, noise)?;
    let (x1, x2) = simulate_state(dy, q, grid, noise)?;
    let particles = noise.particles;
    let last = grid.n_nodes() - 1;
    let dt = grid.dt;
    let tau = dy.tau;

    let mut lhs = 0.0;
    for p in 0..particles {
        let ss: Vec<f64> =
            x1s.at(p, last).iter().zip(x2s.at(p, last)).map(|(a, b)| a + b).collect();
        let s: Vec<f64> =
            x1.at(p, last).iter().zip(x2.at(p, last)).map(|(a, b)| a + b).collect();
        let ds: Vec<f64> = s.iter().zip(&ss).map(|(a, b)| a - b).collect();
        let mut g = (lc.f2[0].grad)(&ss);
        for (gi, h) in g.iter_mut().zip((lc.f2[1].grad)(&ss)) {
            *gi += h;
        }
        lhs += dot(&g, &ds);
    }
    for step in 0..grid.steps {
        let t = grid.node(step);
        for p in 0..particles {
            let d1: Vec<f64> = x1
                .at(p, step)
                .iter()
                .zip(x1s.at(p, step))
                .map(|(a, b)| a - b)
                .collect();
            let d2: Vec<f64> = x2
                .at(p, step)
                .iter()
                .zip(x2s.at(p, step))
                .map(|(a, b)| a - b)
                .collect();
            lhs += dt
                * (dot(&(lc.f3[0].grad)(t, x1s.at(p, step)), &d1)
                    + dot(&(lc.f3[1].grad)(t, x2s.at(p, step)), &d2));
        }
    }
    lhs /= particles as f64;

    let ybar1 = empirical_mean(&v1.y, 0)?;
    let ybar2 = empirical_mean(&v2.y, 0)?;
    let dxi1: Vec<f64> = q.xi1.iter().zip(&q_opt.xi1).map(|(a, b)| a - b).collect();
    let dxi2: Vec<f64> = q.xi2.iter().zip(&q_opt.xi2).map(|(a, b)| a - b).collect();
    let mut rhs =
        dot(&mat_tvec(&dy.h_mat, &ybar1), &dxi1) + dot(&mat_tvec(&dy.h_mat, &ybar2), &dxi2);
    for eq in 0..2 {
        let v = if eq == 0 { v1 } else { v2 };
        let (u, us) = if eq == 0 { (&q.u1, &q_opt.u1) } else { (&q.u2, &q_opt.u2) };
        for step in 0..grid.steps {
            let t = grid.node(step);
            let bm = (dy.b[eq])(t);
            let bbm = (dy.bbar[eq])(t);
            let dm = (dy.d[eq])(t);
            let ybar = empirical_mean(&v.y, step)?;
            let mut acc = 0.0;
            for p in 0..particles {
                let arg = adjoint_argument_at(
                    &bm,
                    &bbm,
                    &dm,
                    tau,
                    v.y.at(p, step),
                    &ybar,
                    v.z.at(p, step),
                );
                let du: Vec<f64> =
                    u.at(p, step).iter().zip(us.at(p, step)).map(|(a, b)| a - b).collect();
                acc += dot(&arg, &du);
            }
            rhs += dt * acc / particles as f64;
        }
    }
    Ok((lhs - rhs).abs())
}
