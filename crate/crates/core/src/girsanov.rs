//! Exponential martingales `M_t = exp(−∫ b·dB_L − ½∫|b|² dL)` and the change
//! of measure they induce on sub-diffusions.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::try_par_paths;
use crate::stats::{combined_se, pairwise_sum, Estimate};
use crate::subdiffusion::{sample_subdiffusion, SubdiffusionPath};
use crate::subordinator::SubordinatorSpec;

/// Read-only view of a path up to and including grid index `k`.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    path: &'a SubdiffusionPath,
    k: usize,
}

impl<'a> PathView<'a> {
    pub fn new(path: &'a SubdiffusionPath, k: usize) -> Self {
        assert!(k < path.len(), "view index beyond the path");
        Self { path, k }
    }

    /// Current grid index.
    pub fn index(&self) -> usize {
        self.k
    }

    pub fn time(&self) -> f64 {
        self.path.clock.times[self.k]
    }

    pub fn dim(&self) -> usize {
        self.path.dim
    }

    /// Times up to now.
    pub fn times(&self) -> &'a [f64] {
        &self.path.clock.times[..=self.k]
    }

    /// Clock values up to now.
    pub fn clock(&self) -> &'a [f64] {
        &self.path.clock.clock[..=self.k]
    }

    /// Overshoots up to now.
    pub fn overshoot(&self) -> &'a [f64] {
        &self.path.clock.overshoot[..=self.k]
    }

    /// `X` at a past index `j ≤ k`.
    pub fn value(&self, j: usize) -> &'a [f64] {
        assert!(j <= self.k, "drift rule looked into the future");
        self.path.value(j)
    }

    /// `X` now.
    pub fn current(&self) -> &'a [f64] {
        self.path.value(self.k)
    }
}

type DriftRule = dyn Fn(&PathView) -> Result<Vec<f64>> + Send + Sync;

/// An adapted drift `b(t, ω)`, evaluated on the path observed so far.
#[derive(Clone)]
pub struct DriftProcess {
    dim: usize,
    rule: Arc<DriftRule>,
    bound: Option<f64>,
}

impl std::fmt::Debug for DriftProcess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriftProcess").field("dim", &self.dim).field("bound", &self.bound).finish()
    }
}

/// Whether Novikov's condition is known to hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum NovikovStatus {
    /// `|b| ≤ bound`, so `E exp(½∫|b|² dL) ≤ E exp(½ bound² L_T) < ∞`
    /// because every exponential moment of `L_T` is finite.
    Bounded { bound: f64 },
    /// No bound supplied; the weights may fail to be a true martingale.
    Unverified,
}

impl DriftProcess {
    /// Constant drift `b ≡ theta`.
    pub fn constant(theta: Vec<f64>) -> Self {
        let bound = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dim = theta.len();
        Self { dim, rule: Arc::new(move |_| Ok(theta.clone())), bound: Some(bound) }
    }

    /// Drift from an arbitrary rule. Errors returned by the rule surface as
    /// adapter errors at the grid time where they occurred.
    pub fn from_fn<F>(dim: usize, bound: Option<f64>, rule: F) -> Self
    where
        F: Fn(&PathView) -> std::result::Result<Vec<f64>, String> + Send + Sync + 'static,
    {
        Self {
            dim,
            rule: Arc::new(move |v| rule(v).map_err(|reason| Error::Adapter { time: v.time(), reason })),
            bound,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn novikov(&self) -> NovikovStatus {
        match self.bound {
            Some(bound) => NovikovStatus::Bounded { bound },
            None => NovikovStatus::Unverified,
        }
    }

    /// Evaluates the drift on the path observed up to `view`.
    pub fn eval(&self, view: &PathView) -> Result<Vec<f64>> {
        let b = (self.rule)(view)?;
        if b.len() != self.dim {
            return Err(Error::Adapter {
                time: view.time(),
                reason: format!("drift has {} components, expected {}", b.len(), self.dim),
            });
        }
        if let Some(bad) = b.iter().find(|v| !v.is_finite()) {
            return Err(Error::Adapter { time: view.time(), reason: format!("non-finite drift component {bad}") });
        }
        Ok(b)
    }
}

/// The exponential martingale along one path, kept in log form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GirsanovWeight {
    pub times: Vec<f64>,
    pub log_m: Vec<f64>,
}

impl GirsanovWeight {
    pub fn m_values(&self) -> Vec<f64> {
        self.log_m.iter().map(|l| l.exp()).collect()
    }

    /// `M` at the last grid point.
    pub fn terminal(&self) -> f64 {
        self.log_m.last().copied().unwrap_or(0.0).exp()
    }
}

/// Accumulates `log M` over the grid with the drift frozen at the left end of
/// each step: `Σ (−b·ΔX − ½|b|² ΔL)`.
pub fn weight_path(path: &SubdiffusionPath, b: &DriftProcess) -> Result<GirsanovWeight> {
    if b.dim != path.dim {
        return Err(Error::Domain(format!(
            "drift dimension {} does not match the path dimension {}",
            b.dim, path.dim
        )));
    }
    let mut log_m = Vec::with_capacity(path.len());
    log_m.push(0.0);
    for k in 0..path.len().saturating_sub(1) {
        let bk = b.eval(&PathView::new(path, k))?;
        let dl = path.clock.clock[k + 1] - path.clock.clock[k];
        let (x0, x1) = (path.value(k), path.value(k + 1));
        let dot: f64 = bk.iter().zip(x0.iter().zip(x1)).map(|(bi, (a, c))| bi * (c - a)).sum();
        let norm2: f64 = bk.iter().map(|v| v * v).sum();
        log_m.push(log_m[k] - dot - 0.5 * norm2 * dl);
    }
    Ok(GirsanovWeight { times: path.times().to_vec(), log_m })
}

/// The path `Z = X + ∫ b dL`, with the same left-endpoint convention as
/// [`weight_path`].
pub fn drifted_path(path: &SubdiffusionPath, b: &DriftProcess) -> Result<SubdiffusionPath> {
    let mut out = path.clone();
    let d = path.dim;
    let mut shift = vec![0.0; d];
    for k in 0..path.len().saturating_sub(1) {
        let bk = b.eval(&PathView::new(path, k))?;
        let dl = path.clock.clock[k + 1] - path.clock.clock[k];
        for i in 0..d {
            shift[i] += bk[i] * dl;
            out.values[(k + 1) * d + i] += shift[i];
        }
    }
    Ok(out)
}

/// Estimates `E^Q[f]` as the `P`-average of `M_T f(path)` over `n` sampled
/// sub-diffusions, where `dQ = M_T dP`.
#[allow(clippy::too_many_arguments)]
pub fn expectation_under_q<F>(
    f: F,
    b: &DriftProcess,
    spec: &SubordinatorSpec,
    a: f64,
    grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<Estimate>
where
    F: Fn(&SubdiffusionPath) -> f64 + Sync,
{
    let samples = try_par_paths(n, seed, |rng, _| {
        let path = sample_subdiffusion(spec, a, b.dim, grid, rng)?;
        let m = weight_path(&path, b)?.terminal();
        Ok::<f64, Error>(m * f(&path))
    })?;
    Ok(Estimate::from_samples(&samples))
}

/// Solves `θ u = β − α` for `u` with the right inverse `θᵀ(θθᵀ)^{-1}`.
pub fn solve_drift(theta: &DMatrix<f64>, beta: &[f64], alpha: &[f64], time: f64) -> Result<Vec<f64>> {
    if theta.nrows() != beta.len() || beta.len() != alpha.len() {
        return Err(Error::Domain(format!(
            "shape mismatch: θ is {}×{}, β has {} and α has {} components",
            theta.nrows(),
            theta.ncols(),
            beta.len(),
            alpha.len()
        )));
    }
    let rhs = DVector::from_iterator(beta.len(), beta.iter().zip(alpha).map(|(b, a)| b - a));
    let gram = theta * theta.transpose();
    let scale = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lu = gram.lu();
    let det = lu.determinant();
    if !(scale > 0.0) || det.abs() <= 1e-13 * scale.powi(theta.nrows() as i32) {
        return Err(Error::Singular { time });
    }
    let y = lu.solve(&rhs).ok_or(Error::Singular { time })?;
    Ok((theta.transpose() * y).iter().copied().collect())
}

/// Drift `u` with `β = θu + α`: weighting by the exponential martingale of
/// `u` turns `dX = β dL + θ dB_L` into `dX = α dL + θ dB̂_L`.
pub fn remove_drift<B, T, A>(dim: usize, beta: B, theta: T, alpha: A) -> DriftProcess
where
    B: Fn(&PathView) -> Vec<f64> + Send + Sync + 'static,
    T: Fn(&PathView) -> DMatrix<f64> + Send + Sync + 'static,
    A: Fn(&PathView) -> Vec<f64> + Send + Sync + 'static,
{
    DriftProcess {
        dim,
        rule: Arc::new(move |v| solve_drift(&theta(v), &beta(v), &alpha(v), v.time())),
        bound: None,
    }
}

/// One statistic of the law-equivalence battery.
#[derive(Debug, Clone, Serialize)]
pub struct BatteryLine {
    pub statistic: String,
    /// `E^P[M_T g(Z)]` for the drifted path `Z`.
    pub weighted: Estimate,
    /// `E^P[g(X)]` for an independent driftless path `X`.
    pub reference: Estimate,
    /// Difference in combined standard errors.
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatteryReport {
    pub theta: Vec<f64>,
    pub horizon: f64,
    pub paths: usize,
    pub martingale_mean: Estimate,
    pub martingale_pass: bool,
    pub novikov: NovikovStatus,
    pub lines: Vec<BatteryLine>,
    pub pass: bool,
}

/// Frequencies of the characteristic-function checks.
pub const BATTERY_FREQUENCIES: [f64; 5] = [0.25, 0.5, 1.0, 1.5, 2.0];

/// Checks that `Z = X + θL`, weighted by `M` with `b ≡ θ`, has the law of the
/// driftless sub-diffusion `X`: moments 1–4, real and imaginary parts of the
/// characteristic function at [`BATTERY_FREQUENCIES`], and the quadratic
/// variation on the grid, each within `k` combined standard errors. Also
/// checks `E[M_T] = 1`.
pub fn law_battery(
    spec: &SubordinatorSpec,
    a: f64,
    theta: &[f64],
    grid: &[f64],
    n: usize,
    seed: u64,
    k: f64,
) -> Result<BatteryReport> {
    let d = theta.len();
    let b = DriftProcess::constant(theta.to_vec());
    let stats = |z: &SubdiffusionPath| -> Vec<f64> {
        let last = z.len() - 1;
        let mut out = Vec::new();
        for i in 0..d {
            let x = z.value(last)[i];
            out.extend((1..=4).map(|p| x.powi(p)));
            for w in BATTERY_FREQUENCIES {
                out.push((w * x).cos());
                out.push((w * x).sin());
            }
            out.push(z.quadratic_variation(i));
        }
        out
    };
    let mut names = Vec::new();
    for i in 1..=d {
        names.extend((1..=4).map(|p| format!("E[X{i}^{p}]")));
        for w in BATTERY_FREQUENCIES {
            names.push(format!("E[cos({w} X{i})]"));
            names.push(format!("E[sin({w} X{i})]"));
        }
        names.push(format!("QV(X{i})"));
    }

    let weighted = try_par_paths(n, seed, |rng, _| {
        let x = sample_subdiffusion(spec, a, d, grid, rng)?;
        let m = weight_path(&x, &b)?.terminal();
        let z = drifted_path(&x, &b)?;
        let mut row = stats(&z);
        row.iter_mut().for_each(|v| *v *= m);
        row.push(m);
        Ok::<_, Error>(row)
    })?;
    let reference = try_par_paths(n, seed ^ 0x9e37_79b9_7f4a_7c15, |rng, _| {
        Ok::<_, Error>(stats(&sample_subdiffusion(spec, a, d, grid, rng)?))
    })?;

    let column = |rows: &[Vec<f64>], j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let mut lines = Vec::new();
    for (j, name) in names.into_iter().enumerate() {
        let w = Estimate::from_samples(&column(&weighted, j));
        let r = Estimate::from_samples(&column(&reference, j));
        let se = combined_se(w.stderr, r.stderr);
        let z = if se > 0.0 { (w.mean - r.mean) / se } else { 0.0 };
        lines.push(BatteryLine { statistic: name, weighted: w, reference: r, z, pass: z.abs() <= k });
    }
    let martingale_mean = Estimate::from_samples(&column(&weighted, lines.len()));
    let martingale_pass = martingale_mean.within(1.0, k);
    let pass = martingale_pass && lines.iter().all(|l| l.pass);
    Ok(BatteryReport {
        theta: theta.to_vec(),
        horizon: *grid.last().unwrap_or(&0.0),
        paths: n,
        martingale_mean,
        martingale_pass,
        novikov: b.novikov(),
        lines,
        pass,
    })
}

/// Mean of `M_T` over a batch of weights, summed pairwise.
pub fn mean_terminal_weight(weights: &[GirsanovWeight]) -> f64 {
    let m: Vec<f64> = weights.iter().map(|w| w.terminal()).collect();
    pairwise_sum(&m) / m.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::subdiffusion::sample_paths;

    fn unit_grid(n: usize) -> Vec<f64> {
        (0..=n).map(|k| k as f64 / n as f64).collect()
    }

    #[test]
    fn zero_drift_gives_unit_weight() {
        let spec = SubordinatorSpec::stable(0.5).unwrap();
        let path = sample_subdiffusion(&spec, 0.0, 2, &unit_grid(5), &mut stream(1, 0)).unwrap();
        let w = weight_path(&path, &DriftProcess::constant(vec![0.0, 0.0])).unwrap();
        assert!(w.m_values().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn classical_exponential_martingale() {
        let spec = SubordinatorSpec::deterministic(1.0).unwrap();
        let path = sample_subdiffusion(&spec, 0.0, 1, &unit_grid(4), &mut stream(2, 0)).unwrap();
        let theta = 0.7;
        let w = weight_path(&path, &DriftProcess::constant(vec![theta])).unwrap();
        let b1 = path.value(4)[0];
        let exact = -theta * b1 - 0.5 * theta * theta;
        assert!((w.log_m[4] - exact).abs() < 1e-14);
    }

    #[test]
    fn martingale_mean_stable() {
        let spec = SubordinatorSpec::stable(0.5).unwrap();
        let paths = sample_paths(&spec, 0.0, 1, &unit_grid(4), 20_000, 3).unwrap();
        let b = DriftProcess::constant(vec![0.5]);
        let weights: Vec<GirsanovWeight> = paths.iter().map(|p| weight_path(p, &b).unwrap()).collect();
        let m: Vec<f64> = weights.iter().map(|w| w.terminal()).collect();
        assert!(Estimate::from_samples(&m).within(1.0, 3.0));
        assert!((mean_terminal_weight(&weights) - Estimate::from_samples(&m).mean).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mgf_under_new_measure() {
        // Z_1 = B_1 + θ is standard normal under Q, so E^Q[e^{Z_1}] = e^{1/2}.
        let spec = SubordinatorSpec::deterministic(1.0).unwrap();
        let theta = 0.4;
        let b = DriftProcess::constant(vec![theta]);
        let est = expectation_under_q(|p| (p.value(1)[0] + theta).exp(), &b, &spec, 0.0, &[0.0, 1.0], 100_000, 4).unwrap();
        assert!(est.within(0.5f64.exp(), 3.0), "{est:?}");
    }

    #[test]
    fn remove_drift_examples() {
        let spec = SubordinatorSpec::deterministic(1.0).unwrap();
        let path = sample_subdiffusion(&spec, 0.0, 2, &[0.0, 1.0], &mut stream(5, 0)).unwrap();
        let view = PathView::new(&path, 0);
        let u = remove_drift(2, |_| vec![1.0, 2.0], |_| DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])), |_| vec![0.0, 0.0]);
        let got = u.eval(&view).unwrap();
        assert!((got[0] - 1.0).abs() < 1e-15 && (got[1] - 1.0).abs() < 1e-15);

        let nothing = remove_drift(1, |_| vec![0.3], |_| DMatrix::from_element(1, 1, 2.0), |_| vec![0.3]);
        let path1 = sample_subdiffusion(&spec, 0.0, 1, &[0.0, 1.0], &mut stream(5, 1)).unwrap();
        assert_eq!(nothing.eval(&PathView::new(&path1, 0)).unwrap(), vec![0.0]);
        let scalar = remove_drift(1, |_| vec![0.3], |_| DMatrix::from_element(1, 1, 0.2), |_| vec![0.0]);
        assert!((scalar.eval(&PathView::new(&path1, 0)).unwrap()[0] - 1.5).abs() < 1e-14);

        let singular = remove_drift(2, |_| vec![1.0, 1.0], |_| DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]), |_| vec![0.0, 0.0]);
        let e = weight_path(&path, &singular).unwrap_err();
        assert_eq!(e, Error::Singular { time: 0.0 });
    }

    #[test]
    fn adapter_errors_carry_the_time() {
        let spec = SubordinatorSpec::deterministic(1.0).unwrap();
        let path = sample_subdiffusion(&spec, 0.0, 1, &[0.0, 0.5, 1.0], &mut stream(6, 0)).unwrap();
        let b = DriftProcess::from_fn(1, None, |v| if v.time() > 0.25 { Err("boom".into()) } else { Ok(vec![0.0]) });
        assert_eq!(b.novikov(), NovikovStatus::Unverified);
        let e = weight_path(&path, &b).unwrap_err();
        assert!(matches!(e, Error::Adapter { time, .. } if time == 0.5));
    }

    #[test]
    fn path_dependent_drift_reads_only_the_past() {
        let spec = SubordinatorSpec::stable(0.6).unwrap();
        let path = sample_subdiffusion(&spec, 0.0, 1, &unit_grid(6), &mut stream(7, 0)).unwrap();
        let b = DriftProcess::from_fn(1, Some(1.0), |v| Ok(vec![v.current()[0].tanh()]));
        let w = weight_path(&path, &b).unwrap();
        assert_eq!(w.log_m.len(), 7);
        assert!(w.log_m.iter().all(|l| l.is_finite()));
    }
}
