use crate::convex::{grad_inverse, ConvexFunction, ConvexSet, WeightedNorm};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::sync::Arc;

/// Problem dimensions: state n, initial-control m, process-control k, noise d.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub d: usize,
}

pub type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
/// Forcing indexed by (t, cumulative noise W(t)); covers deterministic and
/// path-dependent inhomogeneities such as sin(W).
pub type PathForcing = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
/// A map R^m -> R^m (initial adjoint) or a time-indexed map R^k -> R^k.
pub type AdjointBar = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type AdjointH = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

pub fn constant_matrix(m: DMatrix<f64>) -> MatrixFn {
    Arc::new(move |_| m.clone())
}

pub fn zero_forcing(width: usize) -> PathForcing {
    Arc::new(move |_, _| vec![0.0; width])
}

#[inline]
pub fn mat_vec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    mat_vec_acc(a, x, 1.0, &mut out);
    out
}

#[inline]
pub fn mat_vec_acc(a: &DMatrix<f64>, x: &[f64], scale: f64, out: &mut [f64]) {
    debug_assert!(a.ncols() == x.len() && a.nrows() == out.len());
    for j in 0..a.ncols() {
        let xj = scale * x[j];
        if xj != 0.0 {
            for i in 0..a.nrows() {
                out[i] += a[(i, j)] * xj;
            }
        }
    }
}

#[inline]
pub fn mat_tvec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.nrows(), x.len());
    let mut out = vec![0.0; a.ncols()];
    for j in 0..a.ncols() {
        let mut s = 0.0;
        for i in 0..a.nrows() {
            s += a[(i, j)] * x[i];
        }
        out[j] = s;
    }
    out
}

/// The argument theta_i of the generators: ensemble means, the particle's own
/// (x, y, z), the mean-feedback channels, and the driving path value.
#[derive(Debug, Clone, Copy)]
pub struct StateView<'a> {
    pub t: f64,
    pub mean_x1: &'a [f64],
    pub mean_y1: &'a [f64],
    pub mean_x2: &'a [f64],
    pub mean_y2: &'a [f64],
    /// Ensemble means of h_i(t, B_i^T y_i + tau Bbar_i^T E[y_i] + D_i^T z_i):
    /// the E[u]-type channels appearing in the mean-control drift terms.
    pub mean_h1: &'a [f64],
    pub mean_h2: &'a [f64],
    pub own_x: &'a [f64],
    pub own_y: &'a [f64],
    pub own_z: &'a [f64],
    pub w: &'a [f64],
}

impl<'a> StateView<'a> {
    pub fn mean_y(&self, eq: usize) -> &'a [f64] {
        if eq == 0 {
            self.mean_y1
        } else {
            self.mean_y2
        }
    }
    pub fn mean_h(&self, eq: usize) -> &'a [f64] {
        if eq == 0 {
            self.mean_h1
        } else {
            self.mean_h2
        }
    }
}

/// Output buffer for one generator evaluation: f (n), b (n), sigma (n*d).
#[derive(Debug, Clone)]
pub struct GammaBuf {
    pub f: Vec<f64>,
    pub b: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GammaBuf {
    pub fn zeros(n: usize, d: usize) -> Self {
        GammaBuf { f: vec![0.0; n], b: vec![0.0; n], sigma: vec![0.0; n * d] }
    }
    pub fn clear(&mut self) {
        self.f.iter_mut().for_each(|v| *v = 0.0);
        self.b.iter_mut().for_each(|v| *v = 0.0);
        self.sigma.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Terminal-map context: the particle's terminal path value and both states.
#[derive(Debug, Clone, Copy)]
pub struct TermCtx<'a> {
    pub particle: usize,
    pub w: &'a [f64],
    pub x1: &'a [f64],
    pub x2: &'a [f64],
}

pub type PsiFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type PhiFn = Arc<dyn Fn(&TermCtx) -> Vec<f64> + Send + Sync>;
pub type GammaFn = Arc<dyn Fn(&StateView, &mut GammaBuf) + Send + Sync>;

/// Declared constants of the standing assumptions, consumed by the checkers.
#[derive(Debug, Clone, Copy)]
pub struct AssumptionConstants {
    pub l: f64,
    pub l_b: f64,
    pub l_sigma: f64,
    pub l_f: f64,
    pub l_phi: f64,
    pub l_psi: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub eps_mean: f64,
    pub eps_cross: f64,
}

impl AssumptionConstants {
    pub fn generic() -> Self {
        AssumptionConstants {
            l: 1.0,
            l_b: 1.0,
            l_sigma: 1.0,
            l_f: 1.0,
            l_phi: 1.0,
            l_psi: 1.0,
            l1: 1.0,
            l2: 1.0,
            l3: 1.0,
            eps_mean: 0.01,
            eps_cross: 0.01,
        }
    }
}

/// Structural data of the domination-monotonicity framework: the matrix H,
/// the control-channel matrices, the mixing constant tau, and the adjoint maps.
#[derive(Clone)]
pub struct StructuralData {
    pub dims: Dims,
    pub h_mat: DMatrix<f64>,
    pub tau: f64,
    pub b: [MatrixFn; 2],
    pub bbar: [MatrixFn; 2],
    pub d: [MatrixFn; 2],
    /// hbar[i][j] is the initial adjoint map with indices (i+1, j+1).
    pub hbar: [[AdjointBar; 2]; 2],
    pub h: [AdjointH; 2],
    pub constants: AssumptionConstants,
}

impl std::fmt::Debug for StructuralData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StructuralData")
            .field("dims", &self.dims)
            .field("tau", &self.tau)
            .field("constants", &self.constants)
            .finish()
    }
}

impl StructuralData {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid(format!("tau must lie in (0,1), got {}", self.tau)));
        }
        if self.h_mat.nrows() != self.dims.n || self.h_mat.ncols() != self.dims.m {
            return Err(Error::invalid("H must be n x m"));
        }
        if !(self.constants.l3 > 0.0) {
            return Err(Error::invalid("L3 must be positive"));
        }
        Ok(())
    }

    /// The two H-weighted initial combinations (H^T y_1 - tau H^T y_2)/(1-tau^2)
    /// and its mirror, in that order.
    pub fn initial_arguments(&self, y1: &[f64], y2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hy1 = mat_tvec(&self.h_mat, y1);
        let hy2 = mat_tvec(&self.h_mat, y2);
        let den = 1.0 - self.tau * self.tau;
        let v1: Vec<f64> =
            hy1.iter().zip(&hy2).map(|(a, b)| (a - self.tau * b) / den).collect();
        let v2: Vec<f64> =
            hy2.iter().zip(&hy1).map(|(a, b)| (a - self.tau * b) / den).collect();
        (v1, v2)
    }

    /// The adjoint argument B_i^T y + tau Bbar_i^T y_mean + D_i^T z for one
    /// equation.
    pub fn adjoint_argument(
        &self,
        eq: usize,
        t: f64,
        y: &[f64],
        y_mean: &[f64],
        z: &[f64],
    ) -> Vec<f64> {
        let bt = mat_tvec(&(self.b[eq])(t), y);
        let bbart = mat_tvec(&(self.bbar[eq])(t), y_mean);
        let dt = mat_tvec(&(self.d[eq])(t), z);
        bt.iter()
            .zip(bbart.iter().zip(&dt))
            .map(|(a, (b, c))| a + self.tau * b + c)
            .collect()
    }

    /// h_i evaluated on the adjoint argument of a state view.
    pub fn feedback(&self, eq: usize, view: &StateView) -> Vec<f64> {
        let arg =
            self.adjoint_argument(eq, view.t, view.own_y, view.mean_y(eq), view.own_z);
        (self.h[eq])(view.t, &arg)
    }
}

/// The full coefficient bundle (Psi_i, Phi_i, Gamma_i) of one system, plus the
/// structural data used by the solver for the mean-feedback channels and by
/// the checkers for the assumption inequalities.
#[derive(Clone)]
pub struct CoefficientSet {
    pub psi: [PsiFn; 2],
    pub phi: [PhiFn; 2],
    pub gamma: [GammaFn; 2],
    pub structural: StructuralData,
}

impl std::fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientSet").field("structural", &self.structural).finish()
    }
}

/// Forcing data of the continuation family: constant initial shifts, terminal
/// random shifts, and generator integrands.
#[derive(Clone)]
pub struct PerturbationData {
    pub xi: [Vec<f64>; 2],
    pub zeta: [PhiFn; 2],
    pub beta: [GammaFn; 2],
}

impl PerturbationData {
    pub fn zero(dims: Dims) -> Self {
        let n = dims.n;
        let zeta: PhiFn = Arc::new(move |_| vec![0.0; n]);
        let beta: GammaFn = Arc::new(|_, _| {});
        PerturbationData {
            xi: [vec![0.0; n], vec![0.0; n]],
            zeta: [zeta.clone(), zeta],
            beta: [beta.clone(), beta],
        }
    }

    /// Forcing scaled by `s`. The wrapped generator integrands assume they are
    /// handed a cleared buffer, which is how the interpolation invokes them.
    pub fn scaled(&self, s: f64) -> PerturbationData {
        let xi = |i: usize| self.xi[i].iter().map(|v| s * v).collect::<Vec<f64>>();
        let zeta = |i: usize| -> PhiFn {
            let f = self.zeta[i].clone();
            Arc::new(move |ctx: &TermCtx| f(ctx).iter().map(|v| s * v).collect())
        };
        let beta = |i: usize| -> GammaFn {
            let g = self.beta[i].clone();
            Arc::new(move |view: &StateView, out: &mut GammaBuf| {
                g(view, out);
                for v in out.f.iter_mut().chain(out.b.iter_mut()).chain(out.sigma.iter_mut())
                {
                    *v *= s;
                }
            })
        };
        PerturbationData {
            xi: [xi(0), xi(1)],
            zeta: [zeta(0), zeta(1)],
            beta: [beta(0), beta(1)],
        }
    }
}

/// The base system of the continuation: Psi from the initial adjoint maps,
/// Phi and f identically zero, drift/diffusion carrying the feedback through
/// the B and D channels.
pub fn base_coefficients(s: &StructuralData) -> Result<CoefficientSet> {
    s.validate()?;
    let dims = s.dims;
    let psi = |flip: bool, s: StructuralData| -> PsiFn {
        Arc::new(move |y1: &[f64], y2: &[f64]| {
            let (v1, v2) = s.initial_arguments(y1, y2);
            let (first, second) = if flip { (&v2, &v1) } else { (&v1, &v2) };
            let i = usize::from(flip);
            let mut out = mat_vec(&s.h_mat, &(s.hbar[i][0])(first));
            mat_vec_acc(&s.h_mat, &(s.hbar[i][1])(second), 1.0, &mut out);
            out
        })
    };
    let phi: PhiFn = {
        let n = dims.n;
        Arc::new(move |_| vec![0.0; n])
    };
    let gamma = |eq: usize, s: StructuralData| -> GammaFn {
        Arc::new(move |view: &StateView, out: &mut GammaBuf| {
            out.clear();
            let hval = s.feedback(eq, view);
            mat_vec_acc(&(s.b[eq])(view.t), &hval, 1.0, &mut out.b);
            mat_vec_acc(&(s.d[eq])(view.t), &hval, 1.0, &mut out.sigma);
        })
    };
    Ok(CoefficientSet {
        psi: [psi(false, s.clone()), psi(true, s.clone())],
        phi: [phi.clone(), phi],
        gamma: [gamma(0, s.clone()), gamma(1, s.clone())],
        structural: s.clone(),
    })
}

/// The alpha-family member: alpha * target + (1 - alpha) * base, plus forcing.
pub fn interpolate(
    c: &CoefficientSet,
    c0: &CoefficientSet,
    alpha: f64,
    p: &PerturbationData,
) -> Result<CoefficientSet> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0,1], got {alpha}")));
    }
    if c.structural.dims != c0.structural.dims {
        return Err(Error::invalid("coefficient sets have mismatched dimensions"));
    }
    let mix = move |a: &[f64], b: &[f64], forcing: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(b.iter().zip(forcing))
            .map(|(x, (y, f))| alpha * x + (1.0 - alpha) * y + f)
            .collect()
    };
    let psi = |i: usize| -> PsiFn {
        let (a, b, xi) = (c.psi[i].clone(), c0.psi[i].clone(), p.xi[i].clone());
        Arc::new(move |y1: &[f64], y2: &[f64]| mix(&a(y1, y2), &b(y1, y2), &xi))
    };
    let phi = |i: usize| -> PhiFn {
        let (a, b, zeta) = (c.phi[i].clone(), c0.phi[i].clone(), p.zeta[i].clone());
        Arc::new(move |ctx: &TermCtx| mix(&a(ctx), &b(ctx), &zeta(ctx)))
    };
    let dims = c.structural.dims;
    let gamma = |i: usize| -> GammaFn {
        let (a, b, beta) = (c.gamma[i].clone(), c0.gamma[i].clone(), p.beta[i].clone());
        Arc::new(move |view: &StateView, out: &mut GammaBuf| {
            let mut tmp = GammaBuf::zeros(dims.n, dims.d);
            a(view, out);
            b(view, &mut tmp);
            let blend = |o: &mut [f64], t: &[f64]| {
                for (x, y) in o.iter_mut().zip(t) {
                    *x = alpha * *x + (1.0 - alpha) * y;
                }
            };
            blend(&mut out.f, &tmp.f);
            blend(&mut out.b, &tmp.b);
            blend(&mut out.sigma, &tmp.sigma);
            tmp.clear();
            beta(view, &mut tmp);
            for (o, t) in out.f.iter_mut().zip(&tmp.f) {
                *o += t;
            }
            for (o, t) in out.b.iter_mut().zip(&tmp.b) {
                *o += t;
            }
            for (o, t) in out.sigma.iter_mut().zip(&tmp.sigma) {
                *o += t;
            }
        })
    };
    // the interpolated system inherits the structural data of the target: the
    // base system is built from the same maps, so the family shares them
    Ok(CoefficientSet {
        psi: [psi(0), psi(1)],
        phi: [phi(0), phi(1)],
        gamma: [gamma(0), gamma(1)],
        structural: c.structural.clone(),
    })
}

/// Linear controlled dynamics shared by both control problems.
#[derive(Clone)]
pub struct Dynamics {
    pub dims: Dims,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub h_mat: DMatrix<f64>,
    pub tau: f64,
    pub a: [MatrixFn; 2],
    pub abar: [MatrixFn; 2],
    pub b: [MatrixFn; 2],
    pub bbar: [MatrixFn; 2],
    /// Stacked (n d) x n diffusion state matrices.
    pub c: [MatrixFn; 2],
    /// Stacked (n d) x k diffusion control matrices.
    pub d: [MatrixFn; 2],
    pub rho: [PathForcing; 2],
    pub kappa: [PathForcing; 2],
}

impl std::fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dynamics")
            .field("dims", &self.dims)
            .field("horizon", &self.horizon)
            .field("tau", &self.tau)
            .finish()
    }
}

impl Dynamics {
    pub fn validate(&self) -> Result<()> {
        let Dims { n, m, k, d } = self.dims;
        if self.x0.len() != n {
            return Err(Error::invalid("x0 must have length n"));
        }
        if self.h_mat.nrows() != n || self.h_mat.ncols() != m {
            return Err(Error::invalid("H must be n x m"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid("tau must lie in (0,1)"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        for (name, fam, rows, cols) in [
            ("A", &self.a, n, n),
            ("Abar", &self.abar, n, n),
            ("B", &self.b, n, k),
            ("Bbar", &self.bbar, n, k),
            ("C", &self.c, n * d, n),
            ("D", &self.d, n * d, k),
        ] {
            for f in fam {
                let m0 = f(0.0);
                if m0.nrows() != rows || m0.ncols() != cols {
                    return Err(Error::invalid(format!(
                        "{name} must be {rows} x {cols}, got {} x {}",
                        m0.nrows(),
                        m0.ncols()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Time-indexed uniformly convex running-cost family.
#[derive(Clone)]
pub struct TimeConvexFamily {
    pub dim: usize,
    pub strong_param: f64,
    pub eval: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    pub grad: Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>,
    pub grad_inv: Option<Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>>,
}

impl std::fmt::Debug for TimeConvexFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TimeConvexFamily")
            .field("dim", &self.dim)
            .field("strong_param", &self.strong_param)
            .finish()
    }
}

impl TimeConvexFamily {
    pub fn from_static(f: &ConvexFunction) -> Self {
        let (e, g, gi) = (f.eval.clone(), f.grad.clone(), f.grad_inv.clone());
        TimeConvexFamily {
            dim: f.dim,
            strong_param: f.strong_param,
            eval: Arc::new(move |_, x| e(x)),
            grad: Arc::new(move |_, x| g(x)),
            grad_inv: gi.map(|gi| {
                Arc::new(move |_: f64, v: &[f64]| gi(v))
                    as Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>
            }),
        }
    }

    /// The frozen-time snapshot as a plain convex function.
    pub fn at(&self, t: f64) -> ConvexFunction {
        let (e, g) = (self.eval.clone(), self.grad.clone());
        ConvexFunction {
            dim: self.dim,
            eval: Arc::new(move |x| e(t, x)),
            grad: Arc::new(move |x| g(t, x)),
            strong_param: self.strong_param,
            lip_grad: None,
            grad_inv: self.grad_inv.clone().map(|gi| {
                Arc::new(move |v: &[f64]| gi(t, v))
                    as Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>
            }),
        }
    }

    pub fn grad_inverse(&self, t: f64, v: &[f64], tol: f64) -> Result<Vec<f64>> {
        grad_inverse(&self.at(t), v, tol)
    }
}

/// Data of the linear-convex problem: dynamics plus the four convex cost
/// families.
#[derive(Debug, Clone)]
pub struct LCProblemData {
    pub dynamics: Dynamics,
    /// Initial-control costs on R^m, uniformly convex.
    pub f1: [ConvexFunction; 2],
    /// Terminal costs on R^n, convex.
    pub f2: [ConvexFunction; 2],
    /// Running state costs on R^n, convex.
    pub f3: [TimeConvexFamily; 2],
    /// Running control costs on R^k, uniformly convex.
    pub f4: [TimeConvexFamily; 2],
    pub delta: f64,
}

impl LCProblemData {
    pub fn validate(&self) -> Result<()> {
        self.dynamics.validate()?;
        let Dims { n, m, k, .. } = self.dynamics.dims;
        for (name, dim, got) in [
            ("f1", m, self.f1[0].dim),
            ("f2", n, self.f2[0].dim),
            ("f3", n, self.f3[0].dim),
            ("f4", k, self.f4[0].dim),
        ] {
            if dim != got {
                return Err(Error::invalid(format!("{name} has dimension {got}, expected {dim}")));
            }
        }
        if !(self.delta > 0.0) {
            return Err(Error::invalid("convexity parameter delta must be positive"));
        }
        for f in &self.f1 {
            if f.strong_param < self.delta {
                return Err(Error::invalid("f1 must be uniformly convex with parameter delta"));
            }
        }
        for f in &self.f4 {
            if f.strong_param < self.delta {
                return Err(Error::invalid("f4 must be uniformly convex with parameter delta"));
            }
        }
        Ok(())
    }
}

/// Data of the input-constrained linear-quadratic problem.
#[derive(Clone)]
pub struct LQICProblemData {
    pub dynamics: Dynamics,
    pub m_mat: [DMatrix<f64>; 2],
    pub g_mat: [DMatrix<f64>; 2],
    pub q: [MatrixFn; 2],
    pub r: [MatrixFn; 2],
    pub delta: f64,
    pub u0: ConvexSet,
    pub u_of_t: Arc<dyn Fn(f64) -> ConvexSet + Send + Sync>,
}

impl std::fmt::Debug for LQICProblemData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LQICProblemData")
            .field("dynamics", &self.dynamics)
            .field("delta", &self.delta)
            .field("u0", &self.u0)
            .finish()
    }
}

impl LQICProblemData {
    pub fn initial_weight(&self, eq: usize) -> Result<WeightedNorm> {
        WeightedNorm::new(self.m_mat[eq].clone(), self.delta)
    }

    pub fn running_weight(&self, eq: usize, t: f64) -> Result<WeightedNorm> {
        WeightedNorm::new((self.r[eq])(t), self.delta)
    }
}

pub(crate) fn invert_two(
    f: &ConvexFunction,
    g: &ConvexFunction,
    tau: f64,
    v1: &[f64],
    v2: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<f64>>();
    let a = grad_inverse(f, &neg(v1), GRAD_TOL)?;
    let b = grad_inverse(g, &neg(v2), GRAD_TOL)?;
    let den = 1.0 - tau * tau;
    let first = a.iter().zip(&b).map(|(x, y)| (x - tau * y) / den).collect();
    let second = b.iter().zip(&a).map(|(x, y)| (x - tau * y) / den).collect();
    Ok((first, second))
}

pub(crate) const GRAD_TOL: f64 = 1e-11;

/// The stochastic Hamiltonian system of the linear-convex problem, packaged as
/// a coefficient bundle of System (pi) form.
pub fn lc_hamiltonian(lc: &LCProblemData) -> Result<CoefficientSet> {
    lc.validate()?;
    let dy = lc.dynamics.clone();
    let dims = dy.dims;
    let structural = lc_structural(lc)?;

    let psi = |eq: usize| -> PsiFn {
        let (lc, dy) = (lc.clone(), dy.clone());
        Arc::new(move |y1: &[f64], y2: &[f64]| {
            let hy1 = mat_tvec(&dy.h_mat, y1);
            let hy2 = mat_tvec(&dy.h_mat, y2);
            let den = 1.0 - dy.tau * dy.tau;
            let v1: Vec<f64> = hy1.iter().zip(&hy2).map(|(a, b)| (a - dy.tau * b) / den).collect();
            let v2: Vec<f64> = hy2.iter().zip(&hy1).map(|(a, b)| (a - dy.tau * b) / den).collect();
            let (xi1, xi2) = invert_two(&lc.f1[0], &lc.f1[1], dy.tau, &v1, &v2)
                .expect("uniformly convex initial cost");
            let xi = if eq == 0 { xi1 } else { xi2 };
            let mut out = dy.x0.clone();
            mat_vec_acc(&dy.h_mat, &xi, 1.0, &mut out);
            out
        })
    };

    let phi: PhiFn = {
        let lc = lc.clone();
        Arc::new(move |ctx: &TermCtx| {
            let s: Vec<f64> = ctx.x1.iter().zip(ctx.x2).map(|(a, b)| a + b).collect();
            let mut out = (lc.f2[0].grad)(&s);
            for (o, g) in out.iter_mut().zip((lc.f2[1].grad)(&s)) {
                *o += g;
            }
            out
        })
    };

    let gamma = |eq: usize| -> GammaFn {
        let (lc, dy, s) = (lc.clone(), dy.clone(), structural.clone());
        Arc::new(move |view: &StateView, out: &mut GammaBuf| {
            out.clear();
            let t = view.t;
            // forward drift: A x + B u* + tau Bbar E[u*] + mean couplings + rho
            let u = s.feedback(eq, view);
            mat_vec_acc(&(dy.a[eq])(t), view.own_x, 1.0, &mut out.b);
            mat_vec_acc(&(dy.b[eq])(t), &u, 1.0, &mut out.b);
            mat_vec_acc(&(dy.bbar[eq])(t), view.mean_h(eq), dy.tau, &mut out.b);
            if eq == 0 {
                mat_vec_acc(&(dy.abar[1])(t), view.mean_x2, 1.0, &mut out.b);
                mat_vec_acc(&(dy.abar[0])(t), view.mean_x1, 1.0, &mut out.b);
            } else {
                mat_vec_acc(&(dy.abar[1])(t), view.mean_x1, 1.0, &mut out.b);
            }
            for (o, r) in out.b.iter_mut().zip((dy.rho[eq])(t, view.w)) {
                *o += r;
            }
            // diffusion: C x + D u* + kappa
            mat_vec_acc(&(dy.c[eq])(t), view.own_x, 1.0, &mut out.sigma);
            mat_vec_acc(&(dy.d[eq])(t), &u, 1.0, &mut out.sigma);
            for (o, kk) in out.sigma.iter_mut().zip((dy.kappa[eq])(t, view.w)) {
                *o += kk;
            }
            // backward generator: -(grad f3 + A^T y + C^T z + mean couplings)
            let g3 = (lc.f3[eq].grad)(t, view.own_x);
            let at_y = mat_tvec(&(dy.a[eq])(t), view.own_y);
            let ct_z = mat_tvec(&(dy.c[eq])(t), view.own_z);
            for i in 0..dims.n {
                out.f[i] = -(g3[i] + at_y[i] + ct_z[i]);
            }
            if eq == 0 {
                let a1t = mat_tvec(&(dy.abar[0])(t), view.mean_y1);
                let a2t = mat_tvec(&(dy.abar[1])(t), view.mean_y2);
                for i in 0..dims.n {
                    out.f[i] -= a1t[i] + a2t[i];
                }
            } else {
                let a2t = mat_tvec(&(dy.abar[1])(t), view.mean_y1);
                for i in 0..dims.n {
                    out.f[i] -= a2t[i];
                }
            }
        })
    };

    Ok(CoefficientSet {
        psi: [psi(0), psi(1)],
        phi: [phi.clone(), phi],
        gamma: [gamma(0), gamma(1)],
        structural,
    })
}

fn sup_spectral(f: &MatrixFn, horizon: f64) -> f64 {
    (0..=32)
        .map(|i| crate::convex::spectral_norm(&f(horizon * i as f64 / 32.0)))
        .fold(0.0, f64::max)
}

fn sup_spectral2(fam: &[MatrixFn; 2], horizon: f64) -> f64 {
    sup_spectral(&fam[0], horizon).max(sup_spectral(&fam[1], horizon))
}

/// Structural data certified in the linear-convex well-posedness argument:
/// initial adjoints from the inverse gradients of f1, running adjoints from
/// the inverse gradients of f4. The initial maps are the plain inverse
/// gradients without tau-dependent scale factors: a tau-scaled variant of the
/// second map would be monotone increasing and could not satisfy the
/// dissipativity inequality, while the plain maps satisfy every inequality
/// with L2 = 1/delta and L3 = delta.
pub fn lc_structural(lc: &LCProblemData) -> Result<StructuralData> {
    lc.validate()?;
    let dy = &lc.dynamics;
    let tau = dy.tau;
    let den = 1.0 - tau * tau;
    let bar = |f: ConvexFunction| -> AdjointBar {
        Arc::new(move |v: &[f64]| {
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            grad_inverse(&f, &neg, GRAD_TOL).expect("uniformly convex cost")
        })
    };
    let run = |f: TimeConvexFamily| -> AdjointH {
        Arc::new(move |t: f64, u: &[f64]| {
            let neg: Vec<f64> = u.iter().map(|x| -x).collect();
            f.grad_inverse(t, &neg, GRAD_TOL).expect("uniformly convex cost")
        })
    };
    let t_end = dy.horizon;
    let hn = crate::convex::spectral_norm(&dy.h_mat);
    let an = sup_spectral2(&dy.a, t_end);
    let abn = sup_spectral(&dy.abar[0], t_end) + sup_spectral(&dy.abar[1], t_end);
    let bn = sup_spectral2(&dy.b, t_end);
    let bbn = sup_spectral2(&dy.bbar, t_end);
    let cn = sup_spectral2(&dy.c, t_end);
    let dn = sup_spectral2(&dy.d, t_end);
    let inv_lip = 1.0 / lc.delta;
    let phi_lip = lc.f2[0].lip_grad.unwrap_or(1.0) + lc.f2[1].lip_grad.unwrap_or(1.0);
    let constants = AssumptionConstants {
        l: 50.0 * (1.0 + hn * inv_lip),
        l_b: 1.05 * (an + bn * inv_lip * (bn + dn)) + 1e-9,
        l_sigma: 1.05 * (cn + dn * inv_lip * (bn + dn)) + 1e-9,
        l_f: 1.05 * (1.0 + an + cn),
        l_phi: phi_lip.max(1.0),
        l_psi: 1.05 * hn * hn * (1.0 + tau) * (1.0 + tau) * inv_lip / (den * den),
        l1: 1.0,
        l2: [inv_lip, 1.05 * hn * hn * (1.0 + tau * tau) / (den * den), bn, dn, 1.0]
            .into_iter()
            .fold(0.0, f64::max),
        l3: lc.delta,
        eps_mean: 1.05 * (abn + tau * bbn * (1.0 + (bn + dn) * inv_lip)) + 1e-6,
        eps_cross: 0.01,
    };
    Ok(StructuralData {
        dims: dy.dims,
        h_mat: dy.h_mat.clone(),
        tau,
        b: dy.b.clone(),
        bbar: dy.bbar.clone(),
        d: dy.d.clone(),
        hbar: [
            [bar(lc.f1[0].clone()), bar(lc.f1[1].clone())],
            [bar(lc.f1[1].clone()), bar(lc.f1[0].clone())],
        ],
        h: [run(lc.f4[0].clone()), run(lc.f4[1].clone())],
        constants,
    })
}

/// The stochastic Hamiltonian system of the input-constrained linear-quadratic
/// problem, with projection feedback in place of inverse gradients.
pub fn lqic_hamiltonian(lq: &LQICProblemData) -> Result<CoefficientSet> {
    lq.dynamics.validate()?;
    let dy = lq.dynamics.clone();
    let dims = dy.dims;
    let structural = lqic_structural(lq)?;

    let psi = |eq: usize| -> PsiFn {
        let (lq, dy) = (lq.clone(), dy.clone());
        Arc::new(move |y1: &[f64], y2: &[f64]| {
            let y = if eq == 0 { y1 } else { y2 };
            let hy = mat_tvec(&dy.h_mat, y);
            let w = lq.initial_weight(eq).expect("valid M");
            let minv_hy = lq.m_mat[eq]
                .clone()
                .lu()
                .solve(&nalgebra::DVector::from_column_slice(&hy))
                .expect("M is positive definite");
            let target: Vec<f64> = minv_hy.iter().map(|v| -v).collect();
            let xi = crate::convex::project(&lq.u0, &w, &target).expect("projection");
            let mut out = dy.x0.clone();
            mat_vec_acc(&dy.h_mat, &xi, 1.0, &mut out);
            out
        })
    };

    let phi: PhiFn = {
        let lq = lq.clone();
        Arc::new(move |ctx: &TermCtx| {
            let s: Vec<f64> = ctx.x1.iter().zip(ctx.x2).map(|(a, b)| a + b).collect();
            let mut out = mat_vec(&lq.g_mat[0], &s);
            mat_vec_acc(&lq.g_mat[1], &s, 1.0, &mut out);
            out
        })
    };

    let gamma = |eq: usize| -> GammaFn {
        let (lq, dy, s) = (lq.clone(), dy.clone(), structural.clone());
        Arc::new(move |view: &StateView, out: &mut GammaBuf| {
            out.clear();
            let t = view.t;
            let u = s.feedback(eq, view);
            mat_vec_acc(&(dy.a[eq])(t), view.own_x, 1.0, &mut out.b);
            mat_vec_acc(&(dy.b[eq])(t), &u, 1.0, &mut out.b);
            mat_vec_acc(&(dy.bbar[eq])(t), view.mean_h(eq), dy.tau, &mut out.b);
            if eq == 0 {
                mat_vec_acc(&(dy.abar[1])(t), view.mean_x2, 1.0, &mut out.b);
                mat_vec_acc(&(dy.abar[0])(t), view.mean_x1, 1.0, &mut out.b);
            } else {
                mat_vec_acc(&(dy.abar[1])(t), view.mean_x1, 1.0, &mut out.b);
            }
            for (o, r) in out.b.iter_mut().zip((dy.rho[eq])(t, view.w)) {
                *o += r;
            }
            mat_vec_acc(&(dy.c[eq])(t), view.own_x, 1.0, &mut out.sigma);
            mat_vec_acc(&(dy.d[eq])(t), &u, 1.0, &mut out.sigma);
            for (o, kk) in out.sigma.iter_mut().zip((dy.kappa[eq])(t, view.w)) {
                *o += kk;
            }
            // backward generator: -(Q x + A^T y + C^T z + mean couplings)
            let qx = mat_vec(&(lq.q[eq])(t), view.own_x);
            let at_y = mat_tvec(&(dy.a[eq])(t), view.own_y);
            let ct_z = mat_tvec(&(dy.c[eq])(t), view.own_z);
            for i in 0..dims.n {
                out.f[i] = -(qx[i] + at_y[i] + ct_z[i]);
            }
            if eq == 0 {
                let a1t = mat_tvec(&(dy.abar[0])(t), view.mean_y1);
                let a2t = mat_tvec(&(dy.abar[1])(t), view.mean_y2);
                for i in 0..dims.n {
                    out.f[i] -= a1t[i] + a2t[i];
                }
            } else {
                let a2t = mat_tvec(&(dy.abar[1])(t), view.mean_y1);
                for i in 0..dims.n {
                    out.f[i] -= a2t[i];
                }
            }
        })
    };

    Ok(CoefficientSet {
        psi: [psi(0), psi(1)],
        phi: [phi.clone(), phi],
        gamma: [gamma(0), gamma(1)],
        structural,
    })
}

/// Structural data certified in the constrained-problem well-posedness
/// argument: weighted projections as the adjoint maps.
pub fn lqic_structural(lq: &LQICProblemData) -> Result<StructuralData> {
    lq.dynamics.validate()?;
    if !(lq.delta > 0.0) {
        return Err(Error::invalid("delta must be positive"));
    }
    let dy = &lq.dynamics;
    let bar = |eq: usize, lq: LQICProblemData| -> AdjointBar {
        Arc::new(move |v: &[f64]| {
            let w = lq.initial_weight(eq).expect("valid M");
            let target = lq.m_mat[eq]
                .clone()
                .lu()
                .solve(&nalgebra::DVector::from_column_slice(v))
                .expect("M is positive definite");
            let neg: Vec<f64> = target.iter().map(|x| -x).collect();
            crate::convex::project(&lq.u0, &w, &neg).expect("projection")
        })
    };
    let zero_bar: AdjointBar = {
        let m = dy.dims.m;
        Arc::new(move |_: &[f64]| vec![0.0; m])
    };
    let run = |eq: usize, lq: LQICProblemData| -> AdjointH {
        Arc::new(move |t: f64, u: &[f64]| {
            let w = lq.running_weight(eq, t).expect("valid R");
            let target = (lq.r[eq])(t)
                .lu()
                .solve(&nalgebra::DVector::from_column_slice(u))
                .expect("R is positive definite");
            let neg: Vec<f64> = target.iter().map(|x| -x).collect();
            crate::convex::project(&(lq.u_of_t)(t), &w, &neg).expect("projection")
        })
    };
    // constrained feedback v -> Pi(-W^{-1} v) is Lipschitz with constant
    // sqrt(|W|/delta) * |W^{-1}| (projection nonexpansive in the W-norm) and
    // dissipative with constant delta
    let t_end = dy.horizon;
    let weight_lip = |w: &DMatrix<f64>| -> f64 {
        let winv = w.clone().try_inverse().map(|m| crate::convex::spectral_norm(&m));
        (crate::convex::spectral_norm(w) / lq.delta).sqrt() * winv.unwrap_or(1.0 / lq.delta)
    };
    let lip_bar = weight_lip(&lq.m_mat[0]).max(weight_lip(&lq.m_mat[1]));
    let lip_h = (0..=32)
        .map(|i| {
            let t = t_end * i as f64 / 32.0;
            weight_lip(&(lq.r[0])(t)).max(weight_lip(&(lq.r[1])(t)))
        })
        .fold(0.0, f64::max);
    let hn = crate::convex::spectral_norm(&dy.h_mat);
    let an = sup_spectral2(&dy.a, t_end);
    let abn = sup_spectral(&dy.abar[0], t_end) + sup_spectral(&dy.abar[1], t_end);
    let bn = sup_spectral2(&dy.b, t_end);
    let bbn = sup_spectral2(&dy.bbar, t_end);
    let cn = sup_spectral2(&dy.c, t_end);
    let dn = sup_spectral2(&dy.d, t_end);
    let qn = (0..=32)
        .map(|i| {
            let t = t_end * i as f64 / 32.0;
            crate::convex::spectral_norm(&(lq.q[0])(t))
                .max(crate::convex::spectral_norm(&(lq.q[1])(t)))
        })
        .fold(0.0, f64::max);
    let lip = lip_bar.max(lip_h);
    let tau = dy.tau;
    let constants = AssumptionConstants {
        l: 50.0 * (1.0 + hn * lip),
        l_b: 1.05 * (an + bn * lip * (bn + dn)) + 1e-9,
        l_sigma: 1.05 * (cn + dn * lip * (bn + dn)) + 1e-9,
        l_f: 1.05 * (qn + an + cn),
        l_phi: 1.05
            * (crate::convex::spectral_norm(&lq.g_mat[0])
                + crate::convex::spectral_norm(&lq.g_mat[1])),
        l_psi: 1.05 * hn * hn * lip,
        l1: 1.0,
        l2: [lip, 1.05 * hn * hn, bn, dn, 1.0].into_iter().fold(0.0, f64::max),
        l3: lq.delta,
        eps_mean: 1.05 * (abn + tau * bbn * (1.0 + (bn + dn) * lip)) + 1e-6,
        eps_cross: 0.01,
    };
    Ok(StructuralData {
        dims: dy.dims,
        h_mat: dy.h_mat.clone(),
        tau,
        b: dy.b.clone(),
        bbar: dy.bbar.clone(),
        d: dy.d.clone(),
        hbar: [[bar(0, lq.clone()), zero_bar.clone()], [bar(1, lq.clone()), zero_bar]],
        h: [run(0, lq.clone()), run(1, lq.clone())],
        constants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::example_lc_data;
    use approx::assert_abs_diff_eq;

    fn scalar_structural() -> StructuralData {
        let neg: AdjointBar = Arc::new(|v: &[f64]| v.iter().map(|x| -x).collect());
        let negh: AdjointH = Arc::new(|_t, u: &[f64]| u.iter().map(|x| -x).collect());
        let eye = constant_matrix(DMatrix::identity(1, 1));
        StructuralData {
            dims: Dims { n: 1, m: 1, k: 1, d: 1 },
            h_mat: DMatrix::identity(1, 1),
            tau: 0.5,
            b: [eye.clone(), eye.clone()],
            bbar: [eye.clone(), eye.clone()],
            d: [eye.clone(), eye.clone()],
            hbar: [[neg.clone(), neg.clone()], [neg.clone(), neg]],
            h: [negh.clone(), negh],
            constants: AssumptionConstants::generic(),
        }
    }

    fn zero_view<'a>(t: f64, store: &'a [f64; 11]) -> StateView<'a> {
        StateView {
            t,
            mean_x1: &store[0..1],
            mean_y1: &store[1..2],
            mean_x2: &store[2..3],
            mean_y2: &store[3..4],
            mean_h1: &store[4..5],
            mean_h2: &store[5..6],
            own_x: &store[6..7],
            own_y: &store[7..8],
            own_z: &store[8..9],
            w: &store[9..10],
        }
    }

    #[test]
    fn base_system_has_zero_phi_and_f() {
        let c = base_coefficients(&scalar_structural()).unwrap();
        let store = [0.3, -1.0, 2.0, 0.5, 0.0, 0.0, 1.5, -0.7, 0.25, 0.0, 0.0];
        let ctx = TermCtx { particle: 0, w: &store[9..10], x1: &store[0..1], x2: &store[1..2] };
        assert_eq!((c.phi[0])(&ctx), vec![0.0]);
        assert_eq!((c.phi[1])(&ctx), vec![0.0]);
        let mut buf = GammaBuf::zeros(1, 1);
        let view = zero_view(0.3, &store);
        (c.gamma[0])(&view, &mut buf);
        assert_eq!(buf.f, vec![0.0]);
        // b0 = B h(B^T y + tau Bbar^T E[y] + D^T z) with h = negation:
        // arg = -0.7 + 0.5*(-1.0) + 0.25 = -0.95 -> b = 0.95
        assert_abs_diff_eq!(buf.b[0], 0.95, epsilon = 1e-14);
        assert_abs_diff_eq!(buf.sigma[0], 0.95, epsilon = 1e-14);
    }

    #[test]
    fn base_psi_vanishes_at_zero_for_odd_adjoints() {
        let c = base_coefficients(&scalar_structural()).unwrap();
        assert_eq!((c.psi[0])(&[0.0], &[0.0]), vec![0.0]);
        assert_eq!((c.psi[1])(&[0.0], &[0.0]), vec![0.0]);
    }

    #[test]
    fn base_drift_with_zero_tau_is_negated_sum() {
        let mut s = scalar_structural();
        s.tau = 1e-9;
        let c = base_coefficients(&s).unwrap();
        let store = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 3.0, 0.0, 0.0];
        let view = zero_view(0.0, &store);
        let mut buf = GammaBuf::zeros(1, 1);
        (c.gamma[0])(&view, &mut buf);
        assert_abs_diff_eq!(buf.b[0], -(2.0 + 3.0), epsilon = 1e-8);
    }

    #[test]
    fn interpolation_is_affine_in_alpha() {
        let s = scalar_structural();
        let c0 = base_coefficients(&s).unwrap();
        let lc = example_lc_data();
        let c1 = lc_hamiltonian(&lc).unwrap();
        // the two sets have different structural data but identical dims
        let p = PerturbationData::zero(s.dims);
        let store = [0.1, -0.4, 0.2, 0.3, 0.05, -0.02, 1.0, 0.6, -0.8, 0.2, 0.0];
        let view = zero_view(0.4, &store);
        let mut b_lo = GammaBuf::zeros(1, 1);
        let mut b_hi = GammaBuf::zeros(1, 1);
        let mut b_mid = GammaBuf::zeros(1, 1);
        (interpolate(&c1, &c0, 0.0, &p).unwrap().gamma[0])(&view, &mut b_lo);
        (interpolate(&c1, &c0, 1.0, &p).unwrap().gamma[0])(&view, &mut b_hi);
        for alpha in [0.25, 0.5, 0.9] {
            (interpolate(&c1, &c0, alpha, &p).unwrap().gamma[0])(&view, &mut b_mid);
            for (m, (lo, hi)) in
                b_mid.b.iter().zip(b_lo.b.iter().zip(&b_hi.b))
            {
                assert_abs_diff_eq!(*m, alpha * hi + (1.0 - alpha) * lo, epsilon = 1e-12);
            }
            for (m, (lo, hi)) in b_mid.f.iter().zip(b_lo.f.iter().zip(&b_hi.f)) {
                assert_abs_diff_eq!(*m, alpha * hi + (1.0 - alpha) * lo, epsilon = 1e-12);
            }
        }
        assert!(interpolate(&c1, &c0, 1.5, &p).is_err());
    }

    #[test]
    fn interpolation_endpoints_reproduce_inputs() {
        let s = scalar_structural();
        let c0 = base_coefficients(&s).unwrap();
        let c1 = lc_hamiltonian(&example_lc_data()).unwrap();
        let p = PerturbationData::zero(s.dims);
        let y1 = [0.7];
        let y2 = [-0.2];
        let at1 = interpolate(&c1, &c0, 1.0, &p).unwrap();
        let at0 = interpolate(&c1, &c0, 0.0, &p).unwrap();
        assert_abs_diff_eq!(
            (at1.psi[0])(&y1, &y2)[0],
            (c1.psi[0])(&y1, &y2)[0],
            epsilon = 1e-13
        );
        assert_abs_diff_eq!(
            (at0.psi[1])(&y1, &y2)[0],
            (c0.psi[1])(&y1, &y2)[0],
            epsilon = 1e-13
        );
    }

    #[test]
    fn example_terminal_map_averages_states() {
        let c = lc_hamiltonian(&example_lc_data()).unwrap();
        let w = [0.0];
        let ctx = TermCtx { particle: 0, w: &w, x1: &[1.0], x2: &[3.0] };
        // grad of (1/4)|x1+x2|^2 is (x1+x2)/2
        assert_abs_diff_eq!((c.phi[0])(&ctx)[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn example_backward_generator_is_mean_coupling() {
        let lc = example_lc_data();
        let c = lc_hamiltonian(&lc).unwrap();
        let store = [0.0, 0.25, 0.0, 0.5, 0.0, 0.0, 9.0, 4.0, 7.0, 0.3, 0.0];
        let view = zero_view(0.5, &store);
        let mut buf = GammaBuf::zeros(1, 1);
        (c.gamma[0])(&view, &mut buf);
        // dY1 = -(1/1000) E[Y2] dt regardless of own state
        assert_abs_diff_eq!(buf.f[0], -1e-3 * 0.5, epsilon = 1e-14);
        (c.gamma[1])(&view, &mut buf);
        assert_abs_diff_eq!(buf.f[0], -1e-3 * 0.25, epsilon = 1e-14);
    }

    #[test]
    fn example_diffusion_is_feedback_plus_sine() {
        let lc = example_lc_data();
        let c = lc_hamiltonian(&lc).unwrap();
        // y = 0, meanY = 0, z = 0 -> u* = 0; diffusion = sin(W)
        let store = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.7, 0.0];
        let view = zero_view(0.2, &store);
        let mut buf = GammaBuf::zeros(1, 1);
        (c.gamma[0])(&view, &mut buf);
        assert_abs_diff_eq!(buf.sigma[0], 0.7f64.sin(), epsilon = 1e-12);
        // with z nonzero the feedback adds ln-type response
        let store2 = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0];
        let view2 = zero_view(0.2, &store2);
        (c.gamma[0])(&view2, &mut buf);
        assert_abs_diff_eq!(buf.sigma[0], -(1.5f64.ln()), epsilon = 1e-10);
    }

    #[test]
    fn example_initial_map_at_zero_is_x0() {
        let lc = example_lc_data();
        let c = lc_hamiltonian(&lc).unwrap();
        assert_abs_diff_eq!((c.psi[0])(&[0.0], &[0.0])[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lqic_feedback_clamps() {
        let lq = crate::examples::scalar_lqic_instance();
        let s = lqic_structural(&lq).unwrap();
        // large argument saturates the box after the -R^{-1} scaling
        let clamped = (s.h[0])(0.0, &[50.0]);
        let u = (lq.u_of_t)(0.0);
        assert!(u.contains(&clamped, 1e-12));
        let free = (s.h[0])(0.0, &[0.1]);
        // small argument stays interior: equals -R^{-1} * 0.1
        let r = (lq.r[0])(0.0)[(0, 0)];
        assert_abs_diff_eq!(free[0], -0.1 / r, epsilon = 1e-12);
    }
}
