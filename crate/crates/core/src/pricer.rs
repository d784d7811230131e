//! European claims under the sub-diffusion martingale measure.
//!
//! Conditioning on `(S_t, R_t) = (x, ã)` and `τ = T − t`,
//! `V_t = e^{−rτ} ∫ E[ψ(x e^{rτ − σ²y/2 + σ√y Z})] P(L_{(τ−ã)^+} ∈ dy)`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::girsanov::{weight_path, DriftProcess};
use crate::market::{market_price_of_risk, simulate_stocks, MarketSpec, Measure};
use crate::rng::try_par_paths;
use crate::special::{gauss_hermite_normal, gauss_legendre, norm_cdf};
use crate::stats::Estimate;
use crate::subordinator::{
    sample_inverse_path, sample_inverse_stable, InverseStableDensity, SubordinatorKind, SubordinatorSpec,
};

/// Gauss-Hermite nodes for the inner expectation of custom payoffs.
pub const HERMITE_NODES: usize = 64;

/// Bound `ψ(s) ≤ constant + slope · s`, which caps the conditional value by
/// `constant + slope · forward`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearBound {
    pub constant: f64,
    pub slope: f64,
}

#[derive(Clone)]
pub enum Payoff {
    Call { strike: f64 },
    Put { strike: f64 },
    Custom { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, bound: LinearBound },
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Call { strike } => write!(f, "Call({strike})"),
            Payoff::Put { strike } => write!(f, "Put({strike})"),
            Payoff::Custom { bound, .. } => write!(f, "Custom({bound:?})"),
        }
    }
}

impl Payoff {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Payoff::Call { strike } => (s - strike).max(0.0),
            Payoff::Put { strike } => (strike - s).max(0.0),
            Payoff::Custom { f, .. } => f(s),
        }
    }

    /// Value of the claim while the clock sleeps through the remaining `tau`:
    /// `e^{−rτ} ψ(x e^{rτ})`, written as `(x − K e^{−rτ})^+` for calls and puts.
    pub fn dormant_value(&self, spot: f64, r: f64, tau: f64) -> f64 {
        let disc = (-r * tau).exp();
        match self {
            Payoff::Call { strike } => (spot - strike * disc).max(0.0),
            Payoff::Put { strike } => (strike * disc - spot).max(0.0),
            Payoff::Custom { f, .. } => disc * f(spot * (r * tau).exp()),
        }
    }

    pub fn strike(&self) -> Option<f64> {
        match self {
            Payoff::Call { strike } | Payoff::Put { strike } => Some(*strike),
            Payoff::Custom { .. } => None,
        }
    }

    /// Upper bound on `E[ψ(S)]` for `E[S] = forward`.
    fn envelope(&self, forward: f64) -> f64 {
        match self {
            Payoff::Call { .. } => forward,
            Payoff::Put { strike } => *strike,
            Payoff::Custom { bound, .. } => bound.constant + bound.slope * forward,
        }
    }
}

/// A payoff with its maturity.
#[derive(Debug, Clone)]
pub struct PayoffSpec {
    pub kind: Payoff,
    pub maturity: f64,
}

impl PayoffSpec {
    pub fn new(kind: Payoff, maturity: f64) -> Result<Self> {
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(Error::spec("maturity", format!("maturity must be positive, got {maturity}")));
        }
        match &kind {
            Payoff::Call { strike } | Payoff::Put { strike } if !(*strike > 0.0 && strike.is_finite()) => {
                return Err(Error::spec("strike", format!("strike must be positive, got {strike}")));
            }
            Payoff::Custom { bound, .. } if !(bound.constant >= 0.0 && bound.slope >= 0.0) => {
                return Err(Error::spec("payoff-bound", "the linear growth bound must be nonnegative"));
            }
            _ => {}
        }
        Ok(Self { kind, maturity })
    }

    pub fn call(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(Payoff::Call { strike }, maturity)
    }

    pub fn put(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(Payoff::Put { strike }, maturity)
    }
}

/// The conditioning state `(t, S_t, R_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PricingState {
    pub t: f64,
    pub spot: f64,
    pub overshoot: f64,
}

impl PricingState {
    /// Time 0 with the market's initial price and wake-up time.
    pub fn initial(market: &MarketSpec) -> Self {
        Self { t: 0.0, spot: market.s0()[0], overshoot: market.wake_up() }
    }

    fn time_to_maturity(&self, payoff: &PayoffSpec) -> Result<f64> {
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return Err(Error::Domain(format!("spot must be positive, got {}", self.spot)));
        }
        if !(self.overshoot >= 0.0) {
            return Err(Error::Domain(format!("overshoot must be nonnegative, got {}", self.overshoot)));
        }
        let tau = payoff.maturity - self.t;
        if !(tau >= 0.0) {
            return Err(Error::Domain(format!("valuation time {} is after maturity {}", self.t, payoff.maturity)));
        }
        Ok(tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PriceMethod {
    #[serde(rename = "CondBS-MC")]
    CondBsMc,
    Quadrature,
    #[serde(rename = "PlainMC")]
    PlainMc,
    #[serde(rename = "Girsanov-MC")]
    GirsanovMc,
    #[serde(rename = "PDE")]
    Pde,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `Var[e^{−rτ} E^Q[ψ | clock]]`, the part of the payoff variance driven
    /// by the clock alone.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub market_uncertainty_variance: Option<f64>,
    /// Upper end of the clock-density integration range, in units of `τ'^β`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_upper: Option<f64>,
    /// Bound on the value mass beyond the integration range.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_bound: Option<f64>,
    /// `|Σ weights − 1|` of the clock-density rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalisation_error: Option<f64>,
    /// Method-internal error estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_estimate: Option<f64>,
    /// Whether the clock could not wake up before maturity.
    pub dormant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceResult {
    pub value: f64,
    pub stderr: f64,
    pub method: PriceMethod,
    /// Paths for Monte Carlo, nodes for quadrature.
    pub samples: usize,
    pub diagnostics: Diagnostics,
}

impl PriceResult {
    pub(crate) fn dormant(value: f64, method: PriceMethod) -> Self {
        Self {
            value,
            stderr: 0.0,
            method,
            samples: 0,
            diagnostics: Diagnostics { dormant: true, ..Default::default() },
        }
    }
}

/// `E_Z[(x e^{rτ − σ²y/2 + σ√y Z} − K)^+]`: the call on the forward `x e^{rτ}`
/// with total variance `σ² y`, undiscounted.
pub fn conditional_bs(x: f64, y: f64, r: f64, sigma: f64, tau: f64, strike: f64) -> f64 {
    let forward = x * (r * tau).exp();
    let sd = sigma * y.max(0.0).sqrt();
    if sd == 0.0 {
        return (forward - strike).max(0.0);
    }
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    forward * norm_cdf(d1) - strike * norm_cdf(d1 - sd)
}

/// Put counterpart of [`conditional_bs`].
pub fn conditional_bs_put(x: f64, y: f64, r: f64, sigma: f64, tau: f64, strike: f64) -> f64 {
    let forward = x * (r * tau).exp();
    let sd = sigma * y.max(0.0).sqrt();
    if sd == 0.0 {
        return (strike - forward).max(0.0);
    }
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    strike * norm_cdf(sd - d1) - forward * norm_cdf(-d1)
}

/// Conditional expectation of the payoff given the clock value `y`.
struct Conditional {
    payoff: Payoff,
    r: f64,
    sigma: f64,
    tau: f64,
    hermite: Option<(Vec<f64>, Vec<f64>)>,
}

impl Conditional {
    fn new(payoff: &Payoff, r: f64, sigma: f64, tau: f64) -> Self {
        let hermite = matches!(payoff, Payoff::Custom { .. }).then(|| gauss_hermite_normal(HERMITE_NODES));
        Self { payoff: payoff.clone(), r, sigma, tau, hermite }
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        match &self.payoff {
            Payoff::Call { strike } => conditional_bs(x, y, self.r, self.sigma, self.tau, *strike),
            Payoff::Put { strike } => conditional_bs_put(x, y, self.r, self.sigma, self.tau, *strike),
            Payoff::Custom { f, .. } => {
                let (nodes, weights) = self.hermite.as_ref().expect("custom payoffs carry Hermite nodes");
                let sd = self.sigma * y.max(0.0).sqrt();
                let base = x * (self.r * self.tau - 0.5 * sd * sd).exp();
                nodes.iter().zip(weights).map(|(z, w)| w * f(base * (sd * z).exp())).sum()
            }
        }
    }
}

/// One draw of `L_{(τ−ã)^+}`.
fn sample_clock<R: Rng + ?Sized>(spec: &SubordinatorSpec, tau: f64, a: f64, rng: &mut R) -> Result<f64> {
    if tau <= a {
        return Ok(0.0);
    }
    match spec.kind() {
        SubordinatorKind::Stable => Ok(sample_inverse_stable(spec.beta().expect("stable kind"), tau - a, rng)),
        SubordinatorKind::Deterministic => Ok((tau - a) / spec.kappa()),
        _ => Ok(sample_inverse_path(spec, &[tau], a, rng)?.clock[0]),
    }
}

/// Rao-Blackwellised Monte Carlo: averages the conditional value over exact
/// draws of the clock.
pub fn price_by_mc(market: &MarketSpec, payoff: &PayoffSpec, state: &PricingState, n: usize, seed: u64) -> Result<PriceResult> {
    let (r, sigma) = market.scalar_coefficients()?;
    let tau = state.time_to_maturity(payoff)?;
    let disc = (-r * tau).exp();
    if tau <= state.overshoot {
        return Ok(PriceResult::dormant(payoff.kind.dormant_value(state.spot, r, tau), PriceMethod::CondBsMc));
    }
    check_paths(n)?;
    let cond = Conditional::new(&payoff.kind, r, sigma, tau);
    let values = try_par_paths(n, seed, |rng, _| {
        let y = sample_clock(market.clock(), tau, state.overshoot, rng)?;
        Ok::<f64, Error>(disc * cond.value(state.spot, y))
    })?;
    let est = Estimate::from_samples(&values);
    Ok(PriceResult {
        value: est.mean,
        stderr: est.stderr,
        method: PriceMethod::CondBsMc,
        samples: n,
        diagnostics: Diagnostics { market_uncertainty_variance: Some(est.sample_variance()), ..Default::default() },
    })
}

fn check_paths(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain("Monte Carlo needs at least two paths".into()));
    }
    Ok(())
}

/// Plain Monte Carlo: simulates `S_T` under `Q` with the market's path
/// engine and averages the discounted payoff.
pub fn price_plain_mc(market: &MarketSpec, payoff: &PayoffSpec, state: &PricingState, n: usize, seed: u64) -> Result<PriceResult> {
    let (r, _) = market.scalar_coefficients()?;
    let tau = state.time_to_maturity(payoff)?;
    check_paths(n)?;
    let disc = (-r * tau).exp();
    let shifted = market.restarted(vec![state.spot], state.overshoot)?;
    let grid = if tau > 0.0 { vec![0.0, tau] } else { vec![0.0] };
    let values = try_par_paths(n, seed, |rng, _| {
        let p = simulate_stocks(&shifted, &grid, Measure::Q, rng)?;
        Ok::<f64, Error>(disc * payoff.kind.eval(p.price(grid.len() - 1)[0]))
    })?;
    let est = Estimate::from_samples(&values);
    Ok(PriceResult {
        value: est.mean,
        stderr: est.stderr,
        method: PriceMethod::PlainMc,
        samples: n,
        diagnostics: Diagnostics::default(),
    })
}

/// Simulates under `P` and reweights by the exponential martingale of the
/// market price of risk, `E^P[M_T e^{−rτ} ψ(S_T)]`.
pub fn price_by_girsanov(
    market: &MarketSpec,
    payoff: &PayoffSpec,
    state: &PricingState,
    n: usize,
    steps: usize,
    seed: u64,
) -> Result<PriceResult> {
    let (r, _) = market.scalar_coefficients()?;
    let tau = state.time_to_maturity(payoff)?;
    check_paths(n)?;
    let disc = (-r * tau).exp();
    let shifted = market.restarted(vec![state.spot], state.overshoot)?;
    let steps = steps.max(1);
    let grid: Vec<f64> = if tau > 0.0 {
        (0..=steps).map(|k| tau * k as f64 / steps as f64).collect()
    } else {
        vec![0.0]
    };
    let b = DriftProcess::constant(market_price_of_risk(market)?);
    let values = try_par_paths(n, seed, |rng, _| {
        let p = simulate_stocks(&shifted, &grid, Measure::P, rng)?;
        let m = weight_path(&p.driver, &b)?.terminal();
        Ok::<f64, Error>(m * disc * payoff.kind.eval(p.price(grid.len() - 1)[0]))
    })?;
    let est = Estimate::from_samples(&values);
    Ok(PriceResult {
        value: est.mean,
        stderr: est.stderr,
        method: PriceMethod::GirsanovMc,
        samples: n,
        diagnostics: Diagnostics::default(),
    })
}

/// Exact value for a deterministic clock, where `L_{(τ−ã)^+} = (τ−ã)^+/κ`.
pub fn price_deterministic_clock(market: &MarketSpec, payoff: &PayoffSpec, state: &PricingState) -> Result<PriceResult> {
    let (r, sigma) = market.scalar_coefficients()?;
    if market.clock().kind() != SubordinatorKind::Deterministic {
        return Err(Error::Domain("this route needs a deterministic clock".into()));
    }
    let tau = state.time_to_maturity(payoff)?;
    let y = (tau - state.overshoot).max(0.0) / market.clock().kappa();
    let value = (-r * tau).exp() * Conditional::new(&payoff.kind, r, sigma, tau).value(state.spot, y);
    Ok(PriceResult {
        value,
        stderr: 0.0,
        method: PriceMethod::Quadrature,
        samples: 1,
        diagnostics: Diagnostics { dormant: tau <= state.overshoot, ..Default::default() },
    })
}

/// Layout of the clock-density quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub panels: usize,
    pub nodes_per_panel: usize,
    /// Target for `P(L_1 > upper)`.
    pub tail_probability: f64,
    /// Absolute accuracy of each density evaluation.
    pub density_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { panels: 32, nodes_per_panel: 20, tail_probability: 1e-14, density_tol: 1e-14 }
    }
}

/// Fixed rule for `E f(L_τ)` with `L_τ = τ^β L_1` and `L_1` inverse stable:
/// composite Gauss-Legendre in `v = √z` against the density of `L_1`.
#[derive(Debug, Clone)]
pub struct StableQuadrature {
    beta: f64,
    upper: f64,
    tail_probability: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl StableQuadrature {
    pub fn new(beta: f64, cfg: &QuadratureConfig) -> Result<Self> {
        if cfg.panels == 0 || cfg.nodes_per_panel == 0 {
            return Err(Error::Domain("quadrature needs at least one panel and one node".into()));
        }
        let density = InverseStableDensity::new(beta)?;
        let upper = density.tail_bound(1.0, cfg.tail_probability);
        let vmax = upper.sqrt();
        let (gx, gw) = gauss_legendre(cfg.nodes_per_panel);
        let h = vmax / cfg.panels as f64;
        let mut vs = Vec::with_capacity(cfg.panels * gx.len());
        let mut base = Vec::with_capacity(vs.capacity());
        for p in 0..cfg.panels {
            let mid = (p as f64 + 0.5) * h;
            for (x, w) in gx.iter().zip(&gw) {
                let v = mid + 0.5 * h * x;
                vs.push(v);
                base.push(0.5 * h * w * 2.0 * v);
            }
        }
        let dens: Vec<f64> = vs
            .par_iter()
            .map(|v| density.eval(1.0, v * v, cfg.density_tol).map(|e| e.value))
            .collect::<Result<_>>()?;
        Ok(Self {
            beta,
            upper,
            tail_probability: cfg.tail_probability,
            nodes: vs.iter().map(|v| v * v).collect(),
            weights: base.iter().zip(&dens).map(|(b, d)| b * d).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Upper end of the integration range for `L_1`.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// `Σ weights`, which approximates `P(L_1 ≤ upper)`.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `E f(L_τ)` over the truncated range.
    pub fn expect(&self, tau: f64, f: impl Fn(f64) -> f64) -> f64 {
        let scale = tau.powf(self.beta);
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(scale * z)).sum()
    }
}

/// Integrates the conditional value against the inverse-stable density.
/// Only stable clocks have a density; other clocks are rejected.
pub fn price_by_quadrature(market: &MarketSpec, payoff: &PayoffSpec, state: &PricingState, cfg: &QuadratureConfig) -> Result<PriceResult> {
    let beta = stable_index(market)?;
    let tau = state.time_to_maturity(payoff)?;
    if tau <= state.overshoot {
        return price_with_rule(market, payoff, state, None);
    }
    let rule = StableQuadrature::new(beta, cfg)?;
    price_with_rule(market, payoff, state, Some(&rule))
}

fn stable_index(market: &MarketSpec) -> Result<f64> {
    match market.clock().kind() {
        SubordinatorKind::Stable => Ok(market.clock().beta().expect("stable kind")),
        kind => Err(Error::Domain(format!(
            "quadrature needs the inverse-stable clock density, which a {kind:?} clock does not have; \
             use Monte Carlo, or the exact route for deterministic clocks"
        ))),
    }
}

/// [`price_by_quadrature`] with a prepared rule.
pub fn price_with_rule(
    market: &MarketSpec,
    payoff: &PayoffSpec,
    state: &PricingState,
    rule: Option<&StableQuadrature>,
) -> Result<PriceResult> {
    let (r, sigma) = market.scalar_coefficients()?;
    let tau = state.time_to_maturity(payoff)?;
    let disc = (-r * tau).exp();
    if tau <= state.overshoot {
        return Ok(PriceResult::dormant(payoff.kind.dormant_value(state.spot, r, tau), PriceMethod::Quadrature));
    }
    let rule = rule.ok_or_else(|| Error::Domain("an awake clock needs a quadrature rule".into()))?;
    let cond = Conditional::new(&payoff.kind, r, sigma, tau);
    let value = disc * rule.expect(tau - state.overshoot, |y| cond.value(state.spot, y));
    let forward = state.spot * (r * tau).exp();
    Ok(PriceResult {
        value,
        stderr: 0.0,
        method: PriceMethod::Quadrature,
        samples: rule.len(),
        diagnostics: Diagnostics {
            density_upper: Some(rule.upper),
            tail_bound: Some(disc * payoff.kind.envelope(forward) * rule.tail_probability),
            normalisation_error: Some((rule.mass() - 1.0).abs()),
            ..Default::default()
        },
    })
}

/// Grid point of a value surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub t: f64,
    pub x: f64,
    pub overshoot: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueSurface {
    pub method: PriceMethod,
    pub points: Vec<SurfacePoint>,
}

impl ValueSurface {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,a,value,stderr")?;
        for p in &self.points {
            writeln!(out, "{},{},{},{},{}", p.t, p.x, p.overshoot, p.value, p.stderr)?;
        }
        Ok(())
    }
}

/// Tabulates `V_t` over `ts × xs × overshoots` (in that nesting order):
/// density quadrature for stable clocks, the exact route for deterministic
/// ones and conditional Monte Carlo with `mc_paths` paths otherwise.
pub fn value_surface(
    market: &MarketSpec,
    payoff: &PayoffSpec,
    ts: &[f64],
    xs: &[f64],
    overshoots: &[f64],
    mc_paths: usize,
    seed: u64,
) -> Result<ValueSurface> {
    let mut grid = Vec::with_capacity(ts.len() * xs.len() * overshoots.len());
    for &t in ts {
        for &x in xs {
            for &a in overshoots {
                grid.push(PricingState { t, spot: x, overshoot: a });
            }
        }
    }
    let kind = market.clock().kind();
    let rule = match kind {
        SubordinatorKind::Stable => Some(StableQuadrature::new(stable_index(market)?, &QuadratureConfig::default())?),
        _ => None,
    };
    let method = match kind {
        SubordinatorKind::Stable | SubordinatorKind::Deterministic => PriceMethod::Quadrature,
        _ => PriceMethod::CondBsMc,
    };
    let points = grid
        .par_iter()
        .map(|s| {
            let res = match kind {
                SubordinatorKind::Stable => price_with_rule(market, payoff, s, rule.as_ref()),
                SubordinatorKind::Deterministic => price_deterministic_clock(market, payoff, s),
                _ => price_by_mc(market, payoff, s, mc_paths, seed),
            }?;
            Ok(SurfacePoint { t: s.t, x: s.spot, overshoot: s.overshoot, value: res.value, stderr: res.stderr })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ValueSurface { method, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subordinator::inverse_exp_moment;

    fn stable_benchmark() -> MarketSpec {
        MarketSpec::single(0.03, 0.0, 0.2, 0.0, 1.0, SubordinatorSpec::stable(0.5).unwrap()).unwrap()
    }

    #[test]
    fn conditional_bs_examples() {
        assert_eq!(conditional_bs(1.0, 0.0, 0.0, 0.2, 1.0, 2.0), 0.0);
        let v = conditional_bs(1.0, 1.0, 0.0, 0.2, 1.0, 1.0);
        assert!((v - (2.0 * norm_cdf(0.1) - 1.0)).abs() < 1e-15);
        assert!((v - 0.0796557).abs() < 1e-7);
        let big = conditional_bs(1.0, 1e8, 0.05, 0.2, 1.0, 1.0);
        assert!((big - 0.05f64.exp()).abs() < 1e-9);
        let put = conditional_bs_put(1.2, 0.7, 0.01, 0.3, 2.0, 1.1);
        let call = conditional_bs(1.2, 0.7, 0.01, 0.3, 2.0, 1.1);
        assert!((call - put - (1.2 * 0.02f64.exp() - 1.1)).abs() < 1e-14);
    }

    #[test]
    fn dormant_value_is_forward_intrinsic() {
        let m = stable_benchmark();
        let payoff = PayoffSpec::call(0.9, 1.0).unwrap();
        let state = PricingState { t: 0.2, spot: 1.0, overshoot: 0.9 };
        let want = (1.0 - 0.9 * (-0.03f64 * 0.8).exp()).max(0.0);
        for res in [
            price_by_mc(&m, &payoff, &state, 10, 1).unwrap(),
            price_by_quadrature(&m, &payoff, &state, &QuadratureConfig::default()).unwrap(),
        ] {
            assert!((res.value - want).abs() < 1e-15);
            assert_eq!(res.stderr, 0.0);
            assert!(res.diagnostics.dormant);
        }
    }

    #[test]
    fn quadrature_rejects_clocks_without_density() {
        let m = MarketSpec::single(0.0, 0.0, 0.2, 0.0, 1.0, SubordinatorSpec::deterministic(1.0).unwrap()).unwrap();
        let payoff = PayoffSpec::call(1.0, 1.0).unwrap();
        let e = price_by_quadrature(&m, &payoff, &PricingState::initial(&m), &QuadratureConfig::default()).unwrap_err();
        assert!(e.to_string().contains("density"), "{e}");
    }

    #[test]
    fn deterministic_route_is_black_scholes() {
        let m = MarketSpec::single(0.0, 0.0, 0.2, 0.0, 1.0, SubordinatorSpec::deterministic(1.0).unwrap()).unwrap();
        let payoff = PayoffSpec::call(1.0, 1.0).unwrap();
        let v = price_deterministic_clock(&m, &payoff, &PricingState::initial(&m)).unwrap();
        assert!((v.value - (2.0 * norm_cdf(0.1) - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn quadrature_rule_is_normalised() {
        let rule = StableQuadrature::new(0.5, &QuadratureConfig::default()).unwrap();
        assert!((rule.mass() - 1.0).abs() < 1e-12, "{}", rule.mass());
        let mean = rule.expect(1.0, |y| y);
        assert!((mean - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn custom_payoffs() {
        let m = stable_benchmark();
        let state = PricingState::initial(&m);
        let cfg = QuadratureConfig::default();
        // E[√S_T] = e^{rT/2} E[e^{−σ²L_T/8}] for s0 = 1.
        let root = PayoffSpec::new(
            Payoff::Custom { f: Arc::new(f64::sqrt), bound: LinearBound { constant: 0.5, slope: 0.5 } },
            1.0,
        )
        .unwrap();
        let v = price_by_quadrature(&m, &root, &state, &cfg).unwrap().value;
        let want = (-0.015f64).exp() * inverse_exp_moment(m.clock(), 1.0, -0.04 / 8.0).unwrap();
        assert!((v - want).abs() < 1e-9, "{v} vs {want}");
        // A kinked payoff is only as accurate as the Hermite rule allows.
        let call = PayoffSpec::call(1.0, 1.0).unwrap();
        let custom = PayoffSpec::new(
            Payoff::Custom { f: Arc::new(|s: f64| (s - 1.0).max(0.0)), bound: LinearBound { constant: 0.0, slope: 1.0 } },
            1.0,
        )
        .unwrap();
        let a = price_by_quadrature(&m, &call, &state, &cfg).unwrap();
        let b = price_by_quadrature(&m, &custom, &state, &cfg).unwrap();
        assert!((a.value - b.value).abs() < 5e-4, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn surface_edges() {
        let m = stable_benchmark();
        let payoff = PayoffSpec::call(1.0, 1.0).unwrap();
        let xs = [0.8, 0.9, 1.0, 1.1, 1.2];
        let s = value_surface(&m, &payoff, &[0.0, 0.5, 1.0], &xs, &[0.0, 0.6], 0, 0).unwrap();
        for p in &s.points {
            if p.t == 1.0 {
                assert_eq!(p.value, (p.x - 1.0f64).max(0.0));
            }
            if p.overshoot >= 1.0 - p.t {
                let want = (p.x - (-0.03 * (1.0 - p.t)).exp()).max(0.0);
                assert!((p.value - want).abs() < 1e-15);
            }
        }
        for t in [0.0, 0.5] {
            let row: Vec<f64> = s.points.iter().filter(|p| p.t == t && p.overshoot == 0.0).map(|p| p.value).collect();
            assert!(row.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn invalid_payoffs() {
        assert!(PayoffSpec::call(0.0, 1.0).is_err());
        assert!(PayoffSpec::put(1.0, 0.0).is_err());
    }
}
