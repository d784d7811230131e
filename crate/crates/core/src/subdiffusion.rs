//! Sub-diffusions `X_t = X_0 + B_{L_{(t−a)^+}}` and the Markov pair `(X_t, R_t)`.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{stream, try_par_paths};
use crate::subordinator::{sample_inverse_path, InverseClockSample, SubordinatorSpec};

/// Where a path's randomness came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Lineage {
    pub seed: u64,
    pub path: u64,
}

/// A sampled sub-diffusion on a calendar grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubdiffusionPath {
    pub clock: InverseClockSample,
    pub dim: usize,
    /// Row-major `len × dim` values of `X`.
    pub values: Vec<f64>,
    pub lineage: Option<Lineage>,
}

/// State of the Markov pair `(X_t, R_t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovPairState {
    pub x: Vec<f64>,
    pub r: f64,
}

impl MarkovPairState {
    pub fn new(x: Vec<f64>, r: f64) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("overshoot must be finite and nonnegative, got {r}")));
        }
        if x.is_empty() {
            return Err(Error::Domain("state needs at least one coordinate".into()));
        }
        Ok(Self { x, r })
    }
}

impl SubdiffusionPath {
    pub fn times(&self) -> &[f64] {
        &self.clock.times
    }

    pub fn len(&self) -> usize {
        self.clock.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clock.is_empty()
    }

    /// `X` at grid index `k`.
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Coordinate `i` along the grid.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.dim).copied().collect()
    }

    /// Realised quadratic variation of coordinate `i` on the grid.
    pub fn quadratic_variation(&self, i: usize) -> f64 {
        self.coordinate(i).windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
    }

    /// Markov pair at grid index `k`.
    pub fn state(&self, k: usize) -> MarkovPairState {
        MarkovPairState { x: self.value(k).to_vec(), r: self.clock.overshoot[k] }
    }

    /// Writes the path as CSV with columns `t, L, R, X_1..X_d`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = String::from("t,L,R");
        for i in 1..=self.dim {
            header.push_str(&format!(",X_{i}"));
        }
        writeln!(out, "{header}")?;
        for k in 0..self.len() {
            write!(out, "{},{},{}", self.clock.times[k], self.clock.clock[k], self.clock.overshoot[k])?;
            for v in self.value(k) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Draws a clock and then Brownian increments with variance `ΔL` per
/// coordinate, starting from `x0`.
pub fn sample_subdiffusion_from<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    a: f64,
    x0: &[f64],
    grid: &[f64],
    rng: &mut R,
) -> Result<SubdiffusionPath> {
    if x0.is_empty() {
        return Err(Error::Domain("driver dimension must be at least 1".into()));
    }
    let clock = sample_inverse_path(spec, grid, a, rng)?;
    let dim = x0.len();
    let mut values = Vec::with_capacity(grid.len() * dim);
    values.extend_from_slice(x0);
    for k in 1..grid.len() {
        let sd = (clock.clock[k] - clock.clock[k - 1]).sqrt();
        for i in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            let prev = values[(k - 1) * dim + i];
            values.push(prev + sd * z);
        }
    }
    Ok(SubdiffusionPath { clock, dim, values, lineage: None })
}

/// A `d`-dimensional sub-diffusion started at the origin.
pub fn sample_subdiffusion<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    a: f64,
    d: usize,
    grid: &[f64],
    rng: &mut R,
) -> Result<SubdiffusionPath> {
    sample_subdiffusion_from(spec, a, &vec![0.0; d], grid, rng)
}

/// Restarts the Markov pair: a fresh path from `state.x` whose clock sleeps
/// for the remaining overshoot `state.r`.
pub fn restart_from<R: Rng + ?Sized>(
    state: &MarkovPairState,
    spec: &SubordinatorSpec,
    grid: &[f64],
    rng: &mut R,
) -> Result<SubdiffusionPath> {
    sample_subdiffusion_from(spec, state.r, &state.x, grid, rng)
}

/// `n` independent paths, path `i` drawn from stream `(seed, i)`.
pub fn sample_paths(
    spec: &SubordinatorSpec,
    a: f64,
    d: usize,
    grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<SubdiffusionPath>> {
    try_par_paths(n, seed, |rng, i| {
        let mut p = sample_subdiffusion(spec, a, d, grid, rng)?;
        p.lineage = Some(Lineage { seed, path: i });
        Ok(p)
    })
}

/// Re-draws path `index` of a batch seeded with `seed`.
pub fn replay_path(
    spec: &SubordinatorSpec,
    a: f64,
    d: usize,
    grid: &[f64],
    seed: u64,
    index: u64,
) -> Result<SubdiffusionPath> {
    let mut p = sample_subdiffusion(spec, a, d, grid, &mut stream(seed, index))?;
    p.lineage = Some(Lineage { seed, path: index });
    Ok(p)
}
