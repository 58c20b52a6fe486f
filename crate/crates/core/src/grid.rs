use crate::error::{Error, Result};

/// Uniform discretization of [0, T] with N steps (N+1 nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
    pub dt: f64,
    pub nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn node(&self, n: usize) -> f64 {
        self.nodes[n]
    }

    pub fn n_nodes(&self) -> usize {
        self.steps + 1
    }
}

pub fn make_grid(horizon: f64, steps: usize) -> Result<TimeGrid> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if steps == 0 {
        return Err(Error::invalid("steps must be >= 1"));
    }
    let dt = horizon / steps as f64;
    let mut nodes: Vec<f64> = (0..=steps).map(|n| n as f64 * dt).collect();
    // pin the endpoint exactly
    nodes[steps] = horizon;
    Ok(TimeGrid { horizon, steps, dt, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn nodes_of_quarter_grid() {
        let g = make_grid(1.0, 4).unwrap();
        assert_eq!(g.nodes.len(), 5);
        for (i, want) in [0.0, 0.25, 0.5, 0.75, 1.0].iter().enumerate() {
            assert_abs_diff_eq!(g.nodes[i], want, epsilon = 1e-15);
        }
    }

    #[test]
    fn minimal_grid() {
        let g = make_grid(1.0, 1).unwrap();
        assert_eq!(g.nodes, vec![0.0, 1.0]);
    }

    #[test]
    fn dt_arithmetic() {
        let g = make_grid(2.0, 8).unwrap();
        assert_abs_diff_eq!(g.dt, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(make_grid(0.0, 4).is_err());
        assert!(make_grid(-1.0, 4).is_err());
        assert!(make_grid(1.0, 0).is_err());
    }

    #[test]
    fn nodes_strictly_increasing() {
        let g = make_grid(3.7, 13).unwrap();
        assert_eq!(g.nodes[0], 0.0);
        assert_eq!(*g.nodes.last().unwrap(), 3.7);
        for w in g.nodes.windows(2) {
            assert!(w[1] > w[0]);
        }
    }
}
