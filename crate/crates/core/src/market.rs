//! The sub-diffusive spot market: one bond and `d` stocks
//! `dS_i = S_i (r dt + μ̄_i dL_{(t−a)^+} + Σ_j σ_ij dB^j_{L_{(t−a)^+}})`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::try_par_paths;
use crate::subdiffusion::{sample_subdiffusion, SubdiffusionPath};
use crate::subordinator::SubordinatorSpec;

/// Ellipticity constant used when a configuration does not set one.
pub const DEFAULT_ELLIPTICITY: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    /// The physical measure.
    P,
    /// The sub-diffusion equivalent martingale measure.
    Q,
}

/// Piecewise-constant deterministic coefficients; piece `i` applies from
/// `knots[i]` until the next knot. Coefficients are read at the left end of
/// each simulation step.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSchedule {
    knots: Vec<f64>,
    r: Vec<f64>,
    mu_bar: Vec<Vec<f64>>,
    sigma: Vec<DMatrix<f64>>,
}

impl CoefficientSchedule {
    pub fn new(knots: Vec<f64>, r: Vec<f64>, mu_bar: Vec<Vec<f64>>, sigma: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = knots.len();
        if n == 0 || r.len() != n || mu_bar.len() != n || sigma.len() != n {
            return Err(Error::spec("schedule", "every knot needs r, mu_bar and sigma"));
        }
        if knots[0] != 0.0 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::spec("schedule", "knots must start at 0 and increase strictly"));
        }
        Ok(Self { knots, r, mu_bar, sigma })
    }

    fn piece(&self, t: f64) -> usize {
        self.knots.partition_point(|&k| k <= t).saturating_sub(1)
    }
}

/// Market parameters. Rates are per unit calendar time, excess drifts and
/// volatilities per unit operational time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarketBlock", into = "MarketBlock")]
pub struct MarketSpec {
    r: f64,
    mu_bar: Vec<f64>,
    sigma: DMatrix<f64>,
    a: f64,
    s0: Vec<f64>,
    clock: SubordinatorSpec,
    ellipticity: f64,
    schedule: Option<CoefficientSchedule>,
}

fn min_symmetric_eigenvalue(sigma: &DMatrix<f64>) -> f64 {
    let sym = (sigma + sigma.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

fn check_elliptic(sigma: &DMatrix<f64>, lambda: f64, label: &str) -> Result<()> {
    let e = min_symmetric_eigenvalue(sigma);
    if !(e >= lambda) {
        return Err(Error::spec(
            "ellipticity",
            format!("{label}: ξ·σξ ≥ λ|ξ|² fails; smallest eigenvalue of the symmetric part is {e:.6e} < λ = {lambda:e}"),
        ));
    }
    Ok(())
}

impl MarketSpec {
    pub fn new(
        r: f64,
        mu_bar: Vec<f64>,
        sigma: DMatrix<f64>,
        a: f64,
        s0: Vec<f64>,
        clock: SubordinatorSpec,
    ) -> Result<Self> {
        Self::with_ellipticity(r, mu_bar, sigma, a, s0, clock, DEFAULT_ELLIPTICITY)
    }

    pub fn with_ellipticity(
        r: f64,
        mu_bar: Vec<f64>,
        sigma: DMatrix<f64>,
        a: f64,
        s0: Vec<f64>,
        clock: SubordinatorSpec,
        ellipticity: f64,
    ) -> Result<Self> {
        let d = s0.len();
        if d == 0 || mu_bar.len() != d || sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::spec(
                "dimensions",
                format!(
                    "s0 has {d} entries, mu_bar {} and sigma is {}×{}",
                    mu_bar.len(),
                    sigma.nrows(),
                    sigma.ncols()
                ),
            ));
        }
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::spec("interest-rate", format!("r must be finite and nonnegative, got {r}")));
        }
        if s0.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::spec("initial-price", "initial prices must be positive"));
        }
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::spec("wake-up", format!("wake-up time must be nonnegative, got {a}")));
        }
        if mu_bar.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::spec("dimensions", "drifts and volatilities must be finite"));
        }
        if !(ellipticity > 0.0) {
            return Err(Error::spec("ellipticity", "the ellipticity constant must be positive"));
        }
        check_elliptic(&sigma, ellipticity, "sigma")?;
        Ok(Self { r, mu_bar, sigma, a, s0, clock, ellipticity, schedule: None })
    }

    /// One-asset market with scalar volatility.
    pub fn single(r: f64, mu_bar: f64, sigma: f64, a: f64, s0: f64, clock: SubordinatorSpec) -> Result<Self> {
        Self::new(r, vec![mu_bar], DMatrix::from_element(1, 1, sigma), a, vec![s0], clock)
    }

    /// Switches to time-varying coefficients. Pricing routes other than path
    /// simulation reject such markets.
    pub fn with_schedule(mut self, schedule: CoefficientSchedule) -> Result<Self> {
        let d = self.dim();
        for (i, (mu, sigma)) in schedule.mu_bar.iter().zip(&schedule.sigma).enumerate() {
            if mu.len() != d || sigma.nrows() != d || sigma.ncols() != d {
                return Err(Error::spec("dimensions", format!("schedule piece {i} has the wrong dimension")));
            }
            check_elliptic(sigma, self.ellipticity, &format!("schedule piece {i}"))?;
        }
        if schedule.r.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::spec("interest-rate", "scheduled rates must be nonnegative"));
        }
        self.schedule = Some(schedule);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.s0.len()
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn mu_bar(&self) -> &[f64] {
        &self.mu_bar
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn wake_up(&self) -> f64 {
        self.a
    }

    pub fn s0(&self) -> &[f64] {
        &self.s0
    }

    pub fn clock(&self) -> &SubordinatorSpec {
        &self.clock
    }

    pub fn ellipticity(&self) -> f64 {
        self.ellipticity
    }

    pub fn has_constant_coefficients(&self) -> bool {
        self.schedule.is_none()
    }

    /// Same market restarted from `s0` with wake-up time `a`.
    pub fn restarted(&self, s0: Vec<f64>, a: f64) -> Result<Self> {
        let mut m = Self::with_ellipticity(
            self.r,
            self.mu_bar.clone(),
            self.sigma.clone(),
            a,
            s0,
            self.clock.clone(),
            self.ellipticity,
        )?;
        m.schedule = self.schedule.clone();
        Ok(m)
    }

    /// Scalar `(r, σ)` of a one-asset market with constant coefficients.
    pub(crate) fn scalar_coefficients(&self) -> Result<(f64, f64)> {
        if self.dim() != 1 {
            return Err(Error::Domain(format!("pricing needs a one-asset market, got d = {}", self.dim())));
        }
        if self.schedule.is_some() {
            return Err(Error::Domain(
                "this pricing route assumes constant coefficients; use path simulation for scheduled markets".into(),
            ));
        }
        Ok((self.r, self.sigma[(0, 0)]))
    }

    fn coefficients_at(&self, t: f64) -> (f64, &[f64], &DMatrix<f64>) {
        match &self.schedule {
            None => (self.r, &self.mu_bar, &self.sigma),
            Some(s) => {
                let i = s.piece(t);
                (s.r[i], &s.mu_bar[i], &s.sigma[i])
            }
        }
    }
}

/// Market price of risk `μ̂ = σ^{-1} μ̄`.
pub fn market_price_of_risk(spec: &MarketSpec) -> Result<Vec<f64>> {
    market_price_of_risk_at(spec, 0.0)
}

/// Market price of risk of the coefficients in force at time `t`.
pub fn market_price_of_risk_at(spec: &MarketSpec, t: f64) -> Result<Vec<f64>> {
    let (_, mu, sigma) = spec.coefficients_at(t);
    crate::girsanov::solve_drift(sigma, mu, &vec![0.0; mu.len()], t)
}

/// Simulated prices on a calendar grid.
#[derive(Debug, Clone, Serialize)]
pub struct StockPaths {
    pub measure: Measure,
    pub dim: usize,
    /// Row-major `len × dim` prices.
    pub prices: Vec<f64>,
    /// Row-major `len × dim` prices divided by the bond.
    pub discounted: Vec<f64>,
    /// Bond `A_t = exp(∫_0^t r)`.
    pub bond: Vec<f64>,
    /// The driving sub-diffusion `B_{L_{(t−a)^+}}`.
    pub driver: SubdiffusionPath,
}

impl StockPaths {
    pub fn times(&self) -> &[f64] {
        self.driver.times()
    }

    pub fn len(&self) -> usize {
        self.driver.len()
    }

    pub fn is_empty(&self) -> bool {
        self.driver.is_empty()
    }

    pub fn price(&self, k: usize) -> &[f64] {
        &self.prices[k * self.dim..(k + 1) * self.dim]
    }

    pub fn discounted_price(&self, k: usize) -> &[f64] {
        &self.discounted[k * self.dim..(k + 1) * self.dim]
    }

    /// Writes `t, L, R, S_1..S_d` as CSV.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = String::from("t,L,R");
        for i in 1..=self.dim {
            header.push_str(&format!(",S_{i}"));
        }
        writeln!(out, "{header}")?;
        let c = &self.driver.clock;
        for k in 0..self.len() {
            write!(out, "{},{},{}", c.times[k], c.clock[k], c.overshoot[k])?;
            for v in self.price(k) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Exact exponential solution on the grid. Under `P` the log-price moves by
/// `r Δt + (μ̄_i − ½(σσᵀ)_ii) ΔL + (σ ΔB)_i`; under `Q` the `μ̄` term is absent.
pub fn simulate_stocks<R: Rng + ?Sized>(
    spec: &MarketSpec,
    grid: &[f64],
    measure: Measure,
    rng: &mut R,
) -> Result<StockPaths> {
    let d = spec.dim();
    let driver = sample_subdiffusion(&spec.clock, spec.a, d, grid, rng)?;
    let n = grid.len();
    let mut log_disc: Vec<f64> = spec.s0.iter().map(|s| s.ln()).collect();
    let mut log_bond = 0.0;
    let mut prices = Vec::with_capacity(n * d);
    let mut discounted = Vec::with_capacity(n * d);
    let mut bond = Vec::with_capacity(n);
    prices.extend_from_slice(&spec.s0);
    discounted.extend_from_slice(&spec.s0);
    bond.push(1.0);
    let mut db = vec![0.0; d];
    for k in 1..n {
        let (r, mu, sigma) = spec.coefficients_at(grid[k - 1]);
        let dt = grid[k] - grid[k - 1];
        let dl = driver.clock.clock[k] - driver.clock.clock[k - 1];
        for (j, b) in db.iter_mut().enumerate() {
            *b = driver.value(k)[j] - driver.value(k - 1)[j];
        }
        log_bond += r * dt;
        for i in 0..d {
            let row = sigma.row(i);
            let var: f64 = row.iter().map(|v| v * v).sum();
            let noise: f64 = row.iter().zip(&db).map(|(s, b)| s * b).sum();
            let drift = match measure {
                Measure::P => mu[i],
                Measure::Q => 0.0,
            };
            log_disc[i] += (drift - 0.5 * var) * dl + noise;
        }
        bond.push(log_bond.exp());
        for ld in &log_disc {
            discounted.push(ld.exp());
            prices.push((ld + log_bond).exp());
        }
    }
    Ok(StockPaths { measure, dim: d, prices, discounted, bond, driver })
}

/// `n` independent stock paths, path `i` from stream `(seed, i)`.
pub fn simulate_stock_batch(
    spec: &MarketSpec,
    grid: &[f64],
    measure: Measure,
    n: usize,
    seed: u64,
) -> Result<Vec<StockPaths>> {
    try_par_paths(n, seed, |rng, _| simulate_stocks(spec, grid, measure, rng))
}

/// One regression coefficient of the martingale check.
#[derive(Debug, Clone, Serialize)]
pub struct Coefficient {
    pub feature: &'static str,
    pub value: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleLine {
    pub s: f64,
    pub t: f64,
    pub stock: usize,
    pub coefficients: Vec<Coefficient>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleReport {
    pub paths: usize,
    pub lines: Vec<MartingaleLine>,
    pub pass: bool,
}

fn grid_index(times: &[f64], t: f64) -> Result<usize> {
    times
        .iter()
        .position(|&g| (g - t).abs() <= 1e-12 * t.abs().max(1.0))
        .ok_or_else(|| Error::Domain(format!("checkpoint {t} is not a grid time")))
}

/// Regresses `D_t − D_s` on `[1, D_s, L_s, ln(1 + R_s)]` (regressors
/// centred, constant ones dropped) with heteroskedasticity-robust standard
/// errors. The check passes when every coefficient is within `k` standard
/// errors of zero, for every pair and stock.
pub fn discounted_martingale_check(paths: &[StockPaths], checkpoints: &[(f64, f64)], k: f64) -> Result<MartingaleReport> {
    let first = paths.first().ok_or_else(|| Error::Domain("no paths to check".into()))?;
    let times = first.times();
    let mut lines = Vec::new();
    for &(s, t) in checkpoints {
        if !(s < t) {
            return Err(Error::Domain(format!("checkpoint pair ({s}, {t}) must have s < t")));
        }
        let (is, it) = (grid_index(times, s)?, grid_index(times, t)?);
        for stock in 0..first.dim {
            let y: Vec<f64> = paths
                .iter()
                .map(|p| p.discounted_price(it)[stock] - p.discounted_price(is)[stock])
                .collect();
            let features: [(&'static str, Vec<f64>); 3] = [
                ("D_s", paths.iter().map(|p| p.discounted_price(is)[stock]).collect()),
                ("L_s", paths.iter().map(|p| p.driver.clock.clock[is]).collect()),
                ("ln(1+R_s)", paths.iter().map(|p| p.driver.clock.overshoot[is].ln_1p()).collect()),
            ];
            let coefficients = robust_ols(&y, &features)?;
            let pass = coefficients.iter().all(|c| c.z.abs() <= k);
            lines.push(MartingaleLine { s, t, stock: stock + 1, coefficients, pass });
        }
    }
    let pass = lines.iter().all(|l| l.pass);
    Ok(MartingaleReport { paths: paths.len(), lines, pass })
}

fn robust_ols(y: &[f64], features: &[(&'static str, Vec<f64>)]) -> Result<Vec<Coefficient>> {
    let n = y.len();
    let mut names = vec!["intercept"];
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for (name, x) in features {
        let mean = x.iter().sum::<f64>() / n as f64;
        let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let spread = centred.iter().map(|v| v * v).sum::<f64>();
        if spread > 1e-20 * n as f64 * mean.abs().max(1.0).powi(2) {
            names.push(name);
            cols.push(centred);
        }
    }
    let p = cols.len();
    let x = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
    let xtx = x.transpose() * &x;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::numeric("discounted_martingale_check", "regressors are collinear"))?;
    let yv = nalgebra::DVector::from_column_slice(y);
    let beta = &inv * x.transpose() * &yv;
    let resid = &yv - &x * &beta;
    let mut meat = DMatrix::zeros(p, p);
    for i in 0..n {
        let row = x.row(i);
        meat += row.transpose() * row * (resid[i] * resid[i]);
    }
    let cov = &inv * meat * &inv;
    Ok((0..p)
        .map(|j| {
            let se = cov[(j, j)].max(0.0).sqrt();
            Coefficient {
                feature: names[j],
                value: beta[j],
                stderr: se,
                z: if se > 0.0 { beta[j] / se } else if beta[j] == 0.0 { 0.0 } else { f64::INFINITY },
            }
        })
        .collect())
}

/// Wealth of a self-financing strategy holding `holdings[k][i]` units of
/// stock `i` over `[t_k, t_{k+1})` and the rest in the bond.
#[derive(Debug, Clone, Serialize)]
pub struct WealthPath {
    pub wealth: Vec<f64>,
    /// Wealth divided by the bond.
    pub discounted: Vec<f64>,
    /// `x0 + Σ u · ΔD`, the discrete gains integral against discounted prices.
    pub gains: Vec<f64>,
}

pub fn self_financing_wealth(paths: &StockPaths, holdings: &[Vec<f64>], x0: f64) -> Result<WealthPath> {
    let n = paths.len();
    if holdings.len() + 1 < n || holdings.iter().take(n - 1).any(|h| h.len() != paths.dim) {
        return Err(Error::Domain("need one holding vector of length d per grid step".into()));
    }
    let mut wealth = vec![x0];
    let mut gains = vec![x0];
    for k in 0..n - 1 {
        let u = &holdings[k];
        let stock_now: f64 = u.iter().zip(paths.price(k)).map(|(a, s)| a * s).sum();
        let stock_next: f64 = u.iter().zip(paths.price(k + 1)).map(|(a, s)| a * s).sum();
        let cash = (wealth[k] - stock_now) * paths.bond[k + 1] / paths.bond[k];
        wealth.push(stock_next + cash);
        let dg: f64 = u
            .iter()
            .zip(paths.discounted_price(k + 1).iter().zip(paths.discounted_price(k)))
            .map(|(a, (d1, d0))| a * (d1 - d0))
            .sum();
        gains.push(gains[k] + dg);
    }
    let discounted = wealth.iter().zip(&paths.bond).map(|(w, b)| w / b).collect();
    Ok(WealthPath { wealth, discounted, gains })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketBlock {
    r: f64,
    mu_bar: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    #[serde(default)]
    a: f64,
    s0: Vec<f64>,
    clock: SubordinatorSpec,
    #[serde(default = "default_ellipticity")]
    ellipticity: f64,
}

fn default_ellipticity() -> f64 {
    DEFAULT_ELLIPTICITY
}

impl TryFrom<MarketBlock> for MarketSpec {
    type Error = Error;
    fn try_from(b: MarketBlock) -> Result<Self> {
        let d = b.sigma.len();
        if b.sigma.iter().any(|row| row.len() != d) {
            return Err(Error::spec("dimensions", "sigma must be a square matrix given as rows"));
        }
        let sigma = DMatrix::from_fn(d, d, |i, j| b.sigma[i][j]);
        Self::with_ellipticity(b.r, b.mu_bar, sigma, b.a, b.s0, b.clock, b.ellipticity)
    }
}

impl From<MarketSpec> for MarketBlock {
    fn from(m: MarketSpec) -> Self {
        let d = m.dim();
        MarketBlock {
            r: m.r,
            mu_bar: m.mu_bar,
            sigma: (0..d).map(|i| (0..d).map(|j| m.sigma[(i, j)]).collect()).collect(),
            a: m.a,
            s0: m.s0,
            clock: m.clock,
            ellipticity: m.ellipticity,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::Estimate;

    fn stable_market(mu: f64) -> MarketSpec {
        MarketSpec::single(0.03, mu, 0.2, 0.0, 1.0, SubordinatorSpec::stable(0.5).unwrap()).unwrap()
    }

    #[test]
    fn price_of_risk_examples() {
        let zero = MarketSpec::single(0.0, 0.0, 0.2, 0.0, 1.0, SubordinatorSpec::deterministic(1.0).unwrap()).unwrap();
        assert_eq!(market_price_of_risk(&zero).unwrap(), vec![0.0]);
        let one = MarketSpec::single(0.0, 0.05, 0.2, 0.0, 1.0, SubordinatorSpec::deterministic(1.0).unwrap()).unwrap();
        assert!((market_price_of_risk(&one).unwrap()[0] - 0.25).abs() < 1e-15);
        let sigma = DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.1, 0.3]);
        let two = MarketSpec::new(0.0, vec![0.02, 0.05], sigma.clone(), 0.0, vec![1.0, 1.0], SubordinatorSpec::stable(0.5).unwrap()).unwrap();
        let mu_hat = market_price_of_risk(&two).unwrap();
        assert!((mu_hat[0] - 0.1).abs() < 1e-14 && (mu_hat[1] - 0.4 / 3.0).abs() < 1e-14);
        let back = &sigma * nalgebra::DVector::from_vec(mu_hat);
        assert!((back[0] - 0.02).abs() < 1e-15 && (back[1] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_markets() {
        let clock = SubordinatorSpec::stable(0.5).unwrap();
        let skew = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let e = MarketSpec::new(0.0, vec![0.0; 2], skew, 0.0, vec![1.0; 2], clock.clone()).unwrap_err();
        assert!(matches!(e, Error::InvalidSpec { invariant: "ellipticity", .. }));
        assert!(MarketSpec::single(-0.01, 0.0, 0.2, 0.0, 1.0, clock.clone()).is_err());
        assert!(MarketSpec::single(0.0, 0.0, 0.2, 0.0, 0.0, clock.clone()).is_err());
        assert!(MarketSpec::single(0.0, 0.0, 0.2, -1.0, 1.0, clock).is_err());
    }

    #[test]
    fn measures_coincide_without_excess_drift() {
        let m = stable_market(0.0);
        let grid = [0.0, 0.5, 1.0];
        let p = simulate_stocks(&m, &grid, Measure::P, &mut stream(1, 0)).unwrap();
        let q = simulate_stocks(&m, &grid, Measure::Q, &mut stream(1, 0)).unwrap();
        assert_eq!(p.prices, q.prices);
    }

    #[test]
    fn classical_gbm_moments() {
        let m = MarketSpec::single(0.05, 0.3, 0.2, 0.0, 2.0, SubordinatorSpec::deterministic(1.0).unwrap()).unwrap();
        let paths = simulate_stock_batch(&m, &[0.0, 1.0], Measure::Q, 40_000, 2).unwrap();
        let logs: Vec<f64> = paths.iter().map(|p| p.price(1)[0].ln()).collect();
        let mean = Estimate::from_samples(&logs);
        assert!(mean.within(2f64.ln() + 0.05 - 0.02, 3.0), "{mean:?}");
        let centred: Vec<f64> = logs.iter().map(|l| (l - (2f64.ln() + 0.03)).powi(2)).collect();
        assert!(Estimate::from_samples(&centred).within(0.04, 3.0));
    }

    #[test]
    fn frozen_steps_grow_at_the_bond_rate() {
        let m = MarketSpec::single(0.03, 0.1, 0.2, 0.5, 1.0, SubordinatorSpec::stable(0.4).unwrap()).unwrap();
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let p = simulate_stocks(&m, &grid, Measure::P, &mut stream(3, 0)).unwrap();
        let mut frozen = 0;
        for k in 1..grid.len() {
            if p.driver.clock.clock[k] == p.driver.clock.clock[k - 1] {
                frozen += 1;
                assert_eq!(p.discounted_price(k), p.discounted_price(k - 1));
                let growth = p.price(k)[0] / p.price(k - 1)[0];
                assert!((growth / (0.03f64 * 0.05).exp() - 1.0).abs() < 1e-13);
            }
        }
        assert!(frozen >= 10);
        assert!(p.prices.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn self_financing_identity() {
        let m = stable_market(0.2);
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let p = simulate_stocks(&m, &grid, Measure::P, &mut stream(4, 0)).unwrap();
        let holdings: Vec<Vec<f64>> = (0..10).map(|k| vec![(k as f64 * 0.7).sin()]).collect();
        let w = self_financing_wealth(&p, &holdings, 1.3).unwrap();
        for (d, g) in w.discounted.iter().zip(&w.gains) {
            assert!((d - g).abs() < 1e-13, "{d} vs {g}");
        }
    }

    #[test]
    fn scheduled_coefficients() {
        let base = stable_market(0.0);
        let sched = CoefficientSchedule::new(
            vec![0.0, 0.5],
            vec![0.0, 0.1],
            vec![vec![0.0], vec![0.0]],
            vec![DMatrix::from_element(1, 1, 0.2), DMatrix::from_element(1, 1, 0.4)],
        )
        .unwrap();
        let m = base.with_schedule(sched).unwrap();
        assert!(!m.has_constant_coefficients());
        let p = simulate_stocks(&m, &[0.0, 0.5, 1.0], Measure::Q, &mut stream(5, 0)).unwrap();
        assert!((p.bond[2] - 0.05f64.exp()).abs() < 1e-15);
        assert!(m.scalar_coefficients().is_err());
    }

    #[test]
    fn config_block() {
        let text = r#"
            r = 0.03
            mu_bar = [0.05]
            sigma = [[0.2]]
            s0 = [1.0]
            [clock]
            kind = "stable"
            beta = 0.5
        "#;
        let m: MarketSpec = toml::from_str(text).unwrap();
        assert_eq!(m.dim(), 1);
        assert_eq!(m.clock().beta(), Some(0.5));
        let bad = text.replace("[[0.2]]", "[[-0.2]]");
        let e = toml::from_str::<MarketSpec>(&bad).unwrap_err();
        assert!(e.to_string().contains("ellipticity"), "{e}");
    }
}
