use crate::ensemble::TripleProcess;
use crate::grid::TimeGrid;

#[inline]
fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Solution-space norm: particle mean of sup_n|X|^2 + sup_n|Y|^2 + sum_n |Z_n|^2 dt,
/// square-rooted. The Z sum runs over steps (left endpoints); the terminal Z node
/// is unused by convention.
pub fn m_norm(v: &TripleProcess, grid: &TimeGrid) -> f64 {
    let particles = v.x.particles;
    let nodes = v.x.nodes;
    let mut acc = 0.0;
    for m in 0..particles {
        let mut sup_x = 0.0f64;
        let mut sup_y = 0.0f64;
        let mut z_int = 0.0;
        for n in 0..nodes {
            sup_x = sup_x.max(sq_norm(v.x.at(m, n)));
            sup_y = sup_y.max(sq_norm(v.y.at(m, n)));
            if n + 1 < nodes {
                z_int += sq_norm(v.z.at(m, n)) * grid.dt;
            }
        }
        acc += sup_x + sup_y + z_int;
    }
    (acc / particles as f64).sqrt()
}

/// Integrand-space norm: particle mean of the dt-weighted sum of all squared
/// components of (X, Y, Z) over left endpoints, square-rooted.
pub fn script_m_norm(a: &TripleProcess, grid: &TimeGrid) -> f64 {
    let particles = a.x.particles;
    let nodes = a.x.nodes;
    let mut acc = 0.0;
    for m in 0..particles {
        for n in 0..nodes - 1 {
            acc += (sq_norm(a.x.at(m, n)) + sq_norm(a.y.at(m, n)) + sq_norm(a.z.at(m, n)))
                * grid.dt;
        }
    }
    (acc / particles as f64).sqrt()
}
