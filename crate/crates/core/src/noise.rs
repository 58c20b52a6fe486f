use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Driving Brownian increments for an M-particle ensemble.
///
/// Increments are generated by a counter-based scheme keyed on
/// (seed, particle, step, dim), so the stream does not depend on the order
/// in which entries are asked for and identical seeds are bit-identical.
#[derive(Debug, Clone)]
pub struct BrownianEnsemble {
    pub particles: usize,
    pub steps: usize,
    pub dims: usize,
    pub dt: f64,
    pub seed: u64,
    /// Layout: [particle][step][dim], flattened.
    increments: Vec<f64>,
    /// Cumulative paths W(t_n), layout [particle][node][dim].
    cumulative: Vec<f64>,
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[inline]
fn mix_key(seed: u64, particle: u64, step: u64, dim: u64, lane: u64) -> u64 {
    let mut h = splitmix64(seed ^ 0x6a09e667f3bcc908);
    h = splitmix64(h ^ particle.wrapping_mul(0xff51afd7ed558ccd));
    h = splitmix64(h ^ step.wrapping_mul(0xc4ceb9fe1a85ec53));
    h = splitmix64(h ^ dim.wrapping_mul(0x2545f4914f6cdd1d));
    splitmix64(h ^ lane)
}

#[inline]
fn to_unit_open(x: u64) -> f64 {
    // (0, 1): take 53 bits and offset by half an ulp
    ((x >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// One standard normal draw for the given counters (Box-Muller, first lane).
#[inline]
pub fn standard_normal(seed: u64, particle: u64, step: u64, dim: u64) -> f64 {
    let u1 = to_unit_open(mix_key(seed, particle, step, dim, 0));
    let u2 = to_unit_open(mix_key(seed, particle, step, dim, 1));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn sample_brownian(
    grid: &TimeGrid,
    particles: usize,
    dims: usize,
    seed: u64,
) -> Result<BrownianEnsemble> {
    if particles == 0 || dims == 0 {
        return Err(Error::invalid("particles and dims must be >= 1"));
    }
    let steps = grid.steps;
    let dt = grid.dt;
    let sdt = dt.sqrt();
    let mut increments = vec![0.0; particles * steps * dims];
    let mut cumulative = vec![0.0; particles * (steps + 1) * dims];
    for m in 0..particles {
        for n in 0..steps {
            for j in 0..dims {
                let g = standard_normal(seed, m as u64, n as u64, j as u64);
                let dw = sdt * g;
                increments[(m * steps + n) * dims + j] = dw;
                let prev = cumulative[(m * (steps + 1) + n) * dims + j];
                cumulative[(m * (steps + 1) + n + 1) * dims + j] = prev + dw;
            }
        }
    }
    Ok(BrownianEnsemble { particles, steps, dims, dt, seed, increments, cumulative })
}

impl BrownianEnsemble {
    /// Increments dW over [t_n, t_{n+1}] for one particle, length `dims`.
    #[inline]
    pub fn increment(&self, particle: usize, step: usize) -> &[f64] {
        let base = (particle * self.steps + step) * self.dims;
        &self.increments[base..base + self.dims]
    }

    /// Cumulative path W(t_n) for one particle, length `dims`.
    #[inline]
    pub fn path(&self, particle: usize, node: usize) -> &[f64] {
        let base = (particle * (self.steps + 1) + node) * self.dims;
        &self.cumulative[base..base + self.dims]
    }

    /// Copy of this ensemble with the increments from `from_step` onward
    /// redrawn under a different seed. Nodes up to and including `from_step`
    /// are bit-identical; used to verify that forward passes are adapted.
    pub fn resample_tail(&self, from_step: usize, new_seed: u64) -> BrownianEnsemble {
        let mut out = self.clone();
        let sdt = self.dt.sqrt();
        for m in 0..self.particles {
            for n in from_step..self.steps {
                for j in 0..self.dims {
                    let g = standard_normal(new_seed, m as u64, n as u64, j as u64);
                    out.increments[(m * self.steps + n) * self.dims + j] = sdt * g;
                }
            }
            for n in from_step..self.steps {
                for j in 0..self.dims {
                    let prev = out.cumulative[(m * (self.steps + 1) + n) * self.dims + j];
                    out.cumulative[(m * (self.steps + 1) + n + 1) * self.dims + j] =
                        prev + out.increments[(m * self.steps + n) * self.dims + j];
                }
            }
        }
        out
    }
}
