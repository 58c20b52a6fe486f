//! Built-in problem instances: the scalar exponential-family benchmark with a
//! closed-form solution, and a small constrained linear-quadratic instance
//! used for cross-validation against direct cost minimization.

use crate::coefficients::{
    constant_matrix, zero_forcing, Dims, Dynamics, LCProblemData, LQICProblemData,
    TimeConvexFamily,
};
use crate::convex::{example_family, ConvexFunction, ConvexSet};
use nalgebra::DMatrix;
use std::sync::Arc;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

pub fn zero_pair(rows: usize, cols: usize) -> [crate::coefficients::MatrixFn; 2] {
    let z = constant_matrix(DMatrix::zeros(rows, cols));
    [z.clone(), z]
}

fn zero_time_family(dim: usize) -> TimeConvexFamily {
    TimeConvexFamily {
        dim,
        strong_param: 0.0,
        eval: Arc::new(|_, _| 0.0),
        grad: Arc::new(move |_, _| vec![0.0; dim]),
        grad_inv: None,
    }
}

fn zero_convex(dim: usize) -> ConvexFunction {
    ConvexFunction {
        dim,
        eval: Arc::new(|_| 0.0),
        grad: Arc::new(move |_| vec![0.0; dim]),
        strong_param: 0.0,
        lip_grad: Some(0.0),
        grad_inv: None,
    }
}

/// Scalar benchmark with exponential-family costs and sinusoidal diffusion
/// forcing. With these data the optimal quadruple is known in closed form:
/// both states and both adjoints coincide, the initial controls vanish, and
/// the running control solves an implicit scalar equation driven by sin(W).
pub fn example_lc_data() -> LCProblemData {
    let dims = Dims { n: 1, m: 1, k: 1, d: 1 };
    let zero = constant_matrix(scalar(0.0));
    let kappa: crate::coefficients::PathForcing = Arc::new(|_t, w: &[f64]| vec![w[0].sin()]);
    let dynamics = Dynamics {
        dims,
        horizon: 1.0,
        x0: vec![0.0],
        h_mat: scalar(1.0),
        tau: 1e-3,
        a: [zero.clone(), zero.clone()],
        // the mean coupling runs only through the weak channel 1/1000,
        // asymmetrically: equation 1 feels E[X2], equation 2 feels E[X1]
        abar: [zero.clone(), constant_matrix(scalar(1e-3))],
        b: [zero.clone(), zero.clone()],
        bbar: [constant_matrix(scalar(1.0)), constant_matrix(scalar(1.0))],
        c: [zero.clone(), zero.clone()],
        d: [constant_matrix(scalar(1.0)), constant_matrix(scalar(1.0))],
        rho: [zero_forcing(1), zero_forcing(1)],
        kappa: [kappa.clone(), kappa],
    };
    let f = example_family();
    LCProblemData {
        dynamics,
        f1: [f.clone(), f.clone()],
        // terminal cost (1/4)|x1 + x2|^2 on the first component only
        f2: [ConvexFunction::quadratic(scalar(0.5), 0.0), zero_convex(1)],
        f3: [zero_time_family(1), zero_time_family(1)],
        f4: [TimeConvexFamily::from_static(&f), TimeConvexFamily::from_static(&f)],
        delta: 1.0,
    }
}

/// Small constrained linear-quadratic instance: scalar in every dimension,
/// box-constrained controls, genuine mean-field and diffusion-control
/// couplings so the cross-validation exercises every term.
pub fn scalar_lqic_instance() -> LQICProblemData {
    let dims = Dims { n: 1, m: 1, k: 1, d: 1 };
    let dynamics = Dynamics {
        dims,
        horizon: 1.0,
        x0: vec![0.5],
        h_mat: scalar(1.0),
        tau: 0.1,
        a: [constant_matrix(scalar(0.01)), constant_matrix(scalar(-0.01))],
        abar: [constant_matrix(scalar(0.02)), constant_matrix(scalar(0.02))],
        b: [constant_matrix(scalar(1.0)), constant_matrix(scalar(1.0))],
        bbar: [constant_matrix(scalar(0.3)), constant_matrix(scalar(0.3))],
        c: [constant_matrix(scalar(0.05)), constant_matrix(scalar(0.05))],
        d: [constant_matrix(scalar(0.1)), constant_matrix(scalar(0.1))],
        rho: [zero_forcing(1), zero_forcing(1)],
        kappa: [
            Arc::new(|_t, _w: &[f64]| vec![0.02]),
            Arc::new(|_t, _w: &[f64]| vec![0.02]),
        ],
    };
    LQICProblemData {
        dynamics,
        m_mat: [scalar(1.0), scalar(1.0)],
        g_mat: [scalar(0.6), scalar(0.1)],
        q: [constant_matrix(scalar(0.01)), constant_matrix(scalar(0.01))],
        r: [constant_matrix(scalar(1.0)), constant_matrix(scalar(1.0))],
        delta: 1.0,
        u0: ConvexSet::Box { lo: vec![-0.5], hi: vec![0.5] },
        u_of_t: Arc::new(|_t| ConvexSet::Box { lo: vec![-1.0], hi: vec![1.0] }),
    }
}
