use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// A convex function given by value and gradient callables.
/// `strong_param` is the uniform-convexity modulus (0 means merely convex).
#[derive(Clone)]
pub struct ConvexFunction {
    pub dim: usize,
    pub eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub grad: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    pub strong_param: f64,
    pub lip_grad: Option<f64>,
    /// Closed-form inverse of the gradient, when one is known; otherwise
    /// `grad_inverse` falls back to Newton iteration.
    pub grad_inv: Option<Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>>,
}

impl std::fmt::Debug for ConvexFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvexFunction")
            .field("dim", &self.dim)
            .field("strong_param", &self.strong_param)
            .field("lip_grad", &self.lip_grad)
            .finish()
    }
}

impl ConvexFunction {
    pub fn quadratic(q: DMatrix<f64>, strong_param: f64) -> Self {
        let dim = q.nrows();
        let lip = operator_norm(&q);
        let q2 = q.clone();
        let q3 = q.clone();
        ConvexFunction {
            dim,
            eval: Arc::new(move |x| {
                let v = DVector::from_column_slice(x);
                0.5 * (&q * &v).dot(&v)
            }),
            grad: Arc::new(move |x| {
                let v = DVector::from_column_slice(x);
                (&q2 * v).as_slice().to_vec()
            }),
            strong_param,
            lip_grad: Some(lip),
            grad_inv: Some(Arc::new(move |v| {
                let rhs = DVector::from_column_slice(v);
                q3.clone()
                    .lu()
                    .solve(&rhs)
                    .expect("positive definite quadratic")
                    .as_slice()
                    .to_vec()
            })),
        }
    }
}

/// The exponential family e^{|u|} - |u| - 1 (scalar), uniformly convex with
/// modulus 1 since the second derivative e^{|u|} is at least 1.
pub fn example_family() -> ConvexFunction {
    ConvexFunction {
        dim: 1,
        eval: Arc::new(|x| {
            let a = x[0].abs();
            a.exp() - a - 1.0
        }),
        grad: Arc::new(|x| vec![example_family_grad(x[0])]),
        strong_param: 1.0,
        lip_grad: None,
        grad_inv: Some(Arc::new(|v| vec![example_family_grad_inv(v[0])])),
    }
}

#[inline]
pub fn example_family_grad(u: f64) -> f64 {
    if u >= 0.0 {
        u.exp() - 1.0
    } else {
        1.0 - (-u).exp()
    }
}

/// Inverse of the exponential-family gradient: ln(1+v) for v >= 0, -ln(1-v) for v < 0.
#[inline]
pub fn example_family_grad_inv(v: f64) -> f64 {
    if v >= 0.0 {
        (1.0 + v).ln()
    } else {
        -(1.0 - v).ln()
    }
}

/// Symmetric positive-definite weight with a certified lower bound delta
/// (W - delta*I positive semidefinite).
#[derive(Debug, Clone)]
pub struct WeightedNorm {
    pub w: DMatrix<f64>,
    pub delta: f64,
}

impl WeightedNorm {
    pub fn new(w: DMatrix<f64>, delta: f64) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::invalid("weight matrix must be square"));
        }
        if !(delta > 0.0) {
            return Err(Error::invalid("weight lower bound must be positive"));
        }
        let n = w.nrows();
        for i in 0..n {
            for j in 0..i {
                if (w[(i, j)] - w[(j, i)]).abs() > 1e-12 * (1.0 + w[(i, j)].abs()) {
                    return Err(Error::invalid("weight matrix must be symmetric"));
                }
            }
        }
        if smallest_eigenvalue(&w) < delta - 1e-12 {
            return Err(Error::invalid("weight matrix violates its declared lower bound"));
        }
        Ok(WeightedNorm { w, delta })
    }

    pub fn identity(dim: usize) -> Self {
        WeightedNorm { w: DMatrix::identity(dim, dim), delta: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn operator_norm(&self) -> f64 {
        operator_norm(&self.w)
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.w[(i, j)] == 0.0))
    }
}

pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.iter().fold(0.0f64, |a, &e| a.max(e.abs()))
}

/// Largest singular value; valid for rectangular matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.iter().fold(0.0f64, |a, &s| a.max(s))
}

fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |a, &e| a.min(e))
}

/// <Wx, y>.
pub fn weighted_inner(w: &WeightedNorm, x: &[f64], y: &[f64]) -> f64 {
    let n = w.dim();
    debug_assert!(x.len() == n && y.len() == n);
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += w.w[(i, j)] * x[j] * y[i];
        }
    }
    s
}

pub fn weighted_norm_of(w: &WeightedNorm, x: &[f64]) -> f64 {
    weighted_inner(w, x, x).max(0.0).sqrt()
}

/// Closed convex sets from a fixed catalog.
#[derive(Debug, Clone)]
pub enum ConvexSet {
    Full { dim: usize },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// { x : <normal, x> <= offset }
    Halfspace { normal: Vec<f64>, offset: f64 },
    Singleton { point: Vec<f64> },
    Product { factors: Vec<ConvexSet> },
}

impl ConvexSet {
    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Full { dim } => *dim,
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Halfspace { normal, .. } => normal.len(),
            ConvexSet::Singleton { point } => point.len(),
            ConvexSet::Product { factors } => factors.iter().map(|f| f.dim()).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexSet::Full { dim } => {
                if *dim == 0 {
                    return Err(Error::invalid("zero-dimensional set"));
                }
            }
            ConvexSet::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.is_empty() {
                    return Err(Error::invalid("box bounds must have equal positive length"));
                }
                if lo.iter().zip(hi).any(|(a, b)| a > b) {
                    return Err(Error::invalid("box is empty (lo > hi)"));
                }
            }
            ConvexSet::Ball { center, radius } => {
                if center.is_empty() || !(*radius >= 0.0) {
                    return Err(Error::invalid("ball needs a center and nonnegative radius"));
                }
            }
            ConvexSet::Halfspace { normal, .. } => {
                if normal.iter().map(|a| a * a).sum::<f64>() <= 0.0 {
                    return Err(Error::invalid("halfspace normal must be nonzero"));
                }
            }
            ConvexSet::Singleton { point } => {
                if point.is_empty() {
                    return Err(Error::invalid("singleton needs a point"));
                }
            }
            ConvexSet::Product { factors } => {
                if factors.is_empty() {
                    return Err(Error::invalid("empty product set"));
                }
                for f in factors {
                    f.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            ConvexSet::Full { .. } => true,
            ConvexSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *v >= a - tol && *v <= b + tol),
            ConvexSet::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt() <= radius + tol
            }
            ConvexSet::Halfspace { normal, offset } => {
                let s: f64 = x.iter().zip(normal).map(|(a, b)| a * b).sum();
                s <= offset + tol
            }
            ConvexSet::Singleton { point } => {
                x.iter().zip(point).all(|(a, b)| (a - b).abs() <= tol)
            }
            ConvexSet::Product { factors } => {
                let mut off = 0;
                factors.iter().all(|f| {
                    let d = f.dim();
                    let ok = f.contains(&x[off..off + d], tol);
                    off += d;
                    ok
                })
            }
        }
    }

    /// An arbitrary feasible point (used as the selector of Assumption-style
    /// nonemptiness checks and as a projection fallback seed).
    pub fn feasible_point(&self) -> Vec<f64> {
        match self {
            ConvexSet::Full { dim } => vec![0.0; *dim],
            ConvexSet::Box { lo, hi } => {
                lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect()
            }
            ConvexSet::Ball { center, .. } => center.clone(),
            ConvexSet::Halfspace { normal, offset } => {
                let n2: f64 = normal.iter().map(|a| a * a).sum();
                normal.iter().map(|a| a * offset / n2).collect()
            }
            ConvexSet::Singleton { point } => point.clone(),
            ConvexSet::Product { factors } => {
                factors.iter().flat_map(|f| f.feasible_point()).collect()
            }
        }
    }
}

/// (grad f)^{-1}(v): damped Newton on the strongly monotone gradient with a
/// finite-difference Jacobian, falling back to small monotone steps when the
/// Newton direction does not reduce the residual.
pub fn grad_inverse(f: &ConvexFunction, v: &[f64], tol: f64) -> Result<Vec<f64>> {
    if f.strong_param <= 0.0 {
        return Err(Error::invalid("gradient inversion requires uniform convexity"));
    }
    if v.len() != f.dim {
        return Err(Error::invalid("dimension mismatch in gradient inversion"));
    }
    if let Some(inv) = &f.grad_inv {
        return Ok(inv(v));
    }
    let n = f.dim;
    let mut x = vec![0.0; n];
    let mut g = (f.grad)(&x);
    let mut res = residual(&g, v);
    let mut monotone_step = 1.0 / f.lip_grad.unwrap_or(1.0).max(f.strong_param);
    for _ in 0..200 {
        if res <= tol {
            return Ok(x);
        }
        let jac = fd_jacobian(f, &x);
        let rhs = DVector::from_iterator(n, v.iter().zip(&g).map(|(a, b)| a - b));
        let step = jac.lu().solve(&rhs);
        let mut accepted = false;
        if let Some(s) = step {
            let mut lambda = 1.0;
            for _ in 0..30 {
                let cand: Vec<f64> =
                    x.iter().zip(s.iter()).map(|(xi, si)| xi + lambda * si).collect();
                let gc = (f.grad)(&cand);
                let rc = residual(&gc, v);
                if rc < res {
                    x = cand;
                    g = gc;
                    res = rc;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if !accepted {
            // gradient-flow step on the strongly monotone map; always makes
            // progress for small enough step, so shrink on failure
            loop {
                let cand: Vec<f64> = x
                    .iter()
                    .zip(v.iter().zip(&g))
                    .map(|(xi, (vi, gi))| xi + monotone_step * (vi - gi))
                    .collect();
                let gc = (f.grad)(&cand);
                let rc = residual(&gc, v);
                if rc < res {
                    x = cand;
                    g = gc;
                    res = rc;
                    break;
                }
                monotone_step *= 0.5;
                if monotone_step < 1e-16 {
                    return Err(Error::numeric(format!(
                        "gradient inversion stalled at residual {res:.3e}"
                    )));
                }
            }
        }
    }
    if res <= tol {
        Ok(x)
    } else {
        Err(Error::numeric(format!(
            "gradient inversion did not reach tolerance: residual {res:.3e}"
        )))
    }
}

fn residual(g: &[f64], v: &[f64]) -> f64 {
    g.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn fd_jacobian(f: &ConvexFunction, x: &[f64]) -> DMatrix<f64> {
    let n = f.dim;
    let h = 1e-6;
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let hj = h * (1.0 + x[j].abs());
        xp[j] = x[j] + hj;
        let gp = (f.grad)(&xp);
        xp[j] = x[j] - hj;
        let gm = (f.grad)(&xp);
        xp[j] = x[j];
        for i in 0..n {
            jac[(i, j)] = (gp[i] - gm[i]) / (2.0 * hj);
        }
    }
    jac
}

const PROJ_TOL: f64 = 1e-12;

/// Nearest point of K to x in the W-induced inner product.
pub fn project(k: &ConvexSet, w: &WeightedNorm, x: &[f64]) -> Result<Vec<f64>> {
    k.validate()?;
    if k.dim() != x.len() || w.dim() != x.len() {
        return Err(Error::invalid("dimension mismatch in projection"));
    }
    match k {
        ConvexSet::Full { .. } => Ok(x.to_vec()),
        ConvexSet::Singleton { point } => Ok(point.clone()),
        ConvexSet::Box { lo, hi } => {
            if w.is_diagonal() {
                Ok(x.iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(v, (a, b))| v.clamp(*a, *b))
                    .collect())
            } else {
                Ok(project_box_coordinate_descent(lo, hi, w, x))
            }
        }
        ConvexSet::Halfspace { normal, offset } => {
            let s: f64 = x.iter().zip(normal).map(|(a, b)| a * b).sum();
            if s <= *offset {
                return Ok(x.to_vec());
            }
            // minimize (y-x)' W (y-x) over <a,y> = offset: y = x - t W^{-1} a
            let a = DVector::from_column_slice(normal);
            let wia = w
                .w
                .clone()
                .lu()
                .solve(&a)
                .ok_or_else(|| Error::numeric("singular weight matrix"))?;
            let t = (s - offset) / a.dot(&wia);
            Ok(x.iter().zip(wia.iter()).map(|(xi, d)| xi - t * d).collect())
        }
        ConvexSet::Ball { center, radius } => Ok(project_ball(center, *radius, w, x)),
        ConvexSet::Product { factors } => {
            // a cross-weighted product would need a general QP solver; the
            // supported weights are block-diagonal across the factors
            let mut off = 0;
            let mut out = Vec::with_capacity(x.len());
            for f in factors {
                let d = f.dim();
                for i in off..off + d {
                    for j in 0..x.len() {
                        if (j < off || j >= off + d) && w.w[(i, j)] != 0.0 {
                            return Err(Error::invalid(
                                "product-set projection requires a weight that is block-diagonal across the factors",
                            ));
                        }
                    }
                }
                let wb = WeightedNorm {
                    w: w.w.view((off, off), (d, d)).into_owned(),
                    delta: w.delta,
                };
                out.extend(project(f, &wb, &x[off..off + d])?);
                off += d;
            }
            Ok(out)
        }
    }
}

fn project_box_coordinate_descent(
    lo: &[f64],
    hi: &[f64],
    w: &WeightedNorm,
    x: &[f64],
) -> Vec<f64> {
    let n = x.len();
    let mut y: Vec<f64> = x.iter().zip(lo.iter().zip(hi)).map(|(v, (a, b))| v.clamp(*a, *b)).collect();
    for _ in 0..10_000 {
        let mut change = 0.0f64;
        for i in 0..n {
            let mut cross = 0.0;
            for j in 0..n {
                if j != i {
                    cross += w.w[(i, j)] * (y[j] - x[j]);
                }
            }
            let unconstrained = x[i] - cross / w.w[(i, i)];
            let new = unconstrained.clamp(lo[i], hi[i]);
            change = change.max((new - y[i]).abs());
            y[i] = new;
        }
        if change < PROJ_TOL {
            break;
        }
    }
    y
}

fn project_ball(center: &[f64], radius: f64, w: &WeightedNorm, x: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    let dist: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if dist <= radius {
        return x.to_vec();
    }
    if radius == 0.0 {
        return center.to_vec();
    }
    // KKT: W(y - x) + lam (y - c) = 0  =>  y - c = (W + lam I)^{-1} W (x - c);
    // the Euclidean distance of y to c is strictly decreasing in lam >= 0
    let n = x.len();
    let dv = DVector::from_column_slice(&d);
    let wd = &w.w * &dv;
    let dist_at = |lam: f64| -> f64 {
        let mut m = w.w.clone();
        for i in 0..n {
            m[(i, i)] += lam;
        }
        m.lu().solve(&wd).map(|y| y.norm()).unwrap_or(0.0)
    };
    let mut lo = 0.0f64;
    let mut hi = w.operator_norm().max(1.0);
    while dist_at(hi) > radius {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dist_at(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + hi) {
            break;
        }
    }
    let lam = 0.5 * (lo + hi);
    let mut m = w.w.clone();
    for i in 0..n {
        m[(i, i)] += lam;
    }
    let yc = m.lu().solve(&wd).expect("regularized weight is invertible");
    // land exactly on the sphere so membership is exact
    let scale = radius / yc.norm();
    center.iter().zip(yc.iter()).map(|(c, v)| c + scale * v).collect()
}
