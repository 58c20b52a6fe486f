use crate::error::{Error, Result};

/// Node-indexed ensemble of vector values, layout [particle][node][component].
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleProcess {
    pub particles: usize,
    pub nodes: usize,
    pub width: usize,
    values: Vec<f64>,
}

impl EnsembleProcess {
    pub fn zeros(particles: usize, nodes: usize, width: usize) -> Self {
        EnsembleProcess { particles, nodes, width, values: vec![0.0; particles * nodes * width] }
    }

    pub fn constant(particles: usize, nodes: usize, width: usize, c: f64) -> Self {
        EnsembleProcess { particles, nodes, width, values: vec![c; particles * nodes * width] }
    }

    #[inline]
    fn base(&self, particle: usize, node: usize) -> usize {
        debug_assert!(particle < self.particles && node < self.nodes);
        (particle * self.nodes + node) * self.width
    }

    #[inline]
    pub fn at(&self, particle: usize, node: usize) -> &[f64] {
        let b = self.base(particle, node);
        &self.values[b..b + self.width]
    }

    #[inline]
    pub fn at_mut(&mut self, particle: usize, node: usize) -> &mut [f64] {
        let b = self.base(particle, node);
        &mut self.values[b..b + self.width]
    }

    pub fn set(&mut self, particle: usize, node: usize, v: &[f64]) {
        self.at_mut(particle, node).copy_from_slice(v);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// self <- theta*new + (1-theta)*self, elementwise.
    pub fn damped_update_from(&mut self, new: &EnsembleProcess, theta: f64) {
        debug_assert_eq!(self.values.len(), new.values.len());
        for (a, b) in self.values.iter_mut().zip(new.values.iter()) {
            *a = theta * *b + (1.0 - theta) * *a;
        }
    }

    /// Max over particles/nodes of the euclidean distance to `other`.
    pub fn max_distance(&self, other: &EnsembleProcess) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        let w = self.width;
        let mut worst = 0.0f64;
        for chunk in 0..self.values.len() / w {
            let mut s = 0.0;
            for j in 0..w {
                let d = self.values[chunk * w + j] - other.values[chunk * w + j];
                s += d * d;
            }
            worst = worst.max(s.sqrt());
        }
        worst
    }
}

/// The unknown triple V = (X, Y, Z) of one equation, on a shared ensemble.
#[derive(Debug, Clone)]
pub struct TripleProcess {
    pub x: EnsembleProcess,
    pub y: EnsembleProcess,
    pub z: EnsembleProcess,
}

impl TripleProcess {
    pub fn zeros(particles: usize, nodes: usize, state_width: usize, z_width: usize) -> Self {
        TripleProcess {
            x: EnsembleProcess::zeros(particles, nodes, state_width),
            y: EnsembleProcess::zeros(particles, nodes, state_width),
            z: EnsembleProcess::zeros(particles, nodes, z_width),
        }
    }
}

/// Particle average at one node, in fixed particle order.
pub fn empirical_mean(p: &EnsembleProcess, node: usize) -> Result<Vec<f64>> {
    if p.particles == 0 {
        return Err(Error::invalid("empty ensemble"));
    }
    if node >= p.nodes {
        return Err(Error::invalid(format!("node {node} out of range (nodes = {})", p.nodes)));
    }
    let mut acc = vec![0.0; p.width];
    for m in 0..p.particles {
        let row = p.at(m, node);
        for (a, v) in acc.iter_mut().zip(row.iter()) {
            *a += v;
        }
    }
    let inv = 1.0 / p.particles as f64;
    for a in acc.iter_mut() {
        *a *= inv;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn from_rows(rows: &[f64]) -> EnsembleProcess {
        let mut p = EnsembleProcess::zeros(rows.len(), 1, 1);
        for (m, v) in rows.iter().enumerate() {
            p.at_mut(m, 0)[0] = *v;
        }
        p
    }

    #[test]
    fn mean_of_small_ensemble() {
        let p = from_rows(&[1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(empirical_mean(&p, 0).unwrap()[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn mean_of_constant_and_antisymmetric() {
        let c = EnsembleProcess::constant(7, 3, 2, 4.5);
        assert_eq!(empirical_mean(&c, 2).unwrap(), vec![4.5, 4.5]);
        let p = from_rows(&[0.75, -0.75]);
        assert_abs_diff_eq!(empirical_mean(&p, 0).unwrap()[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn mean_is_linear_in_fixed_order() {
        let p = from_rows(&[0.1, 0.2, 0.7, -0.4]);
        let q = from_rows(&[1.0, -2.0, 0.5, 3.0]);
        let mut combo = p.clone();
        for m in 0..4 {
            combo.at_mut(m, 0)[0] = 3.0 * p.at(m, 0)[0] + q.at(m, 0)[0];
        }
        let lhs = empirical_mean(&combo, 0).unwrap()[0];
        let rhs = 3.0 * empirical_mean(&p, 0).unwrap()[0] + empirical_mean(&q, 0).unwrap()[0];
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn mean_rejects_bad_inputs() {
        let p = EnsembleProcess::zeros(0, 2, 1);
        assert!(empirical_mean(&p, 0).is_err());
        let q = EnsembleProcess::zeros(2, 2, 1);
        assert!(empirical_mean(&q, 2).is_err());
    }

    #[test]
    fn damped_update_blends() {
        let mut a = EnsembleProcess::constant(2, 2, 1, 0.0);
        let b = EnsembleProcess::constant(2, 2, 1, 10.0);
        a.damped_update_from(&b, 0.25);
        assert_abs_diff_eq!(a.at(1, 1)[0], 2.5, epsilon = 1e-15);
    }
}
