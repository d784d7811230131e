//! Lévy measures of subordinators, described through their tail
//! `w(x) = ν([x, ∞))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::special::{gamma, ln_gamma};

/// A tail function given at knots and interpolated as a power law between
/// consecutive knots. Below the first knot and beyond the last one the
/// neighbouring segment's power law is continued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TailTableRaw", into = "TailTableRaw")]
pub struct TailTable {
    x: Vec<f64>,
    w: Vec<f64>,
    alpha: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TailTableRaw {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl TryFrom<TailTableRaw> for TailTable {
    type Error = Error;
    fn try_from(raw: TailTableRaw) -> Result<Self> {
        TailTable::new(raw.x, raw.w)
    }
}

impl From<TailTable> for TailTableRaw {
    fn from(t: TailTable) -> Self {
        TailTableRaw { x: t.x, w: t.w }
    }
}

/// A piece `w(x) = c x^{-alpha}` on `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    lo: f64,
    hi: f64,
    c: f64,
    alpha: f64,
}

impl Piece {
    fn eval(&self, x: f64) -> f64 {
        self.c * x.powf(-self.alpha)
    }

    /// `∫_a^b x^k w(x) dx`.
    fn power_integral(&self, a: f64, b: f64, k: f64) -> f64 {
        let e = 1.0 + k - self.alpha;
        if e.abs() < 1e-12 {
            self.c * (b / a).ln()
        } else if a == 0.0 {
            self.c * b.powf(e) / e
        } else {
            self.c * (b.powf(e) - a.powf(e)) / e
        }
    }
}

impl TailTable {
    /// Builds a table from knots `x` (strictly increasing, positive) and tail
    /// values `w` (positive, nonincreasing).
    pub fn new(x: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if x.len() != w.len() || x.len() < 2 {
            return Err(Error::spec("levy-table", "need at least two knots and one tail value per knot"));
        }
        if x[0] <= 0.0 || x.windows(2).any(|p| !(p[1] > p[0])) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::spec("levy-table", "knots must be positive, finite and strictly increasing"));
        }
        if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) || w.windows(2).any(|p| p[1] > p[0]) {
            return Err(Error::spec("levy-table", "tail values must be positive and nonincreasing"));
        }
        let alpha: Vec<f64> = x
            .windows(2)
            .zip(w.windows(2))
            .map(|(xs, ws)| (ws[0] / ws[1]).ln() / (xs[1] / xs[0]).ln())
            .collect();
        if alpha[0] >= 1.0 {
            return Err(Error::spec(
                "levy-integrability",
                format!("tail near zero decays like x^-{:.4}; ∫(1 ∧ x) ν(dx) needs an exponent below 1", alpha[0]),
            ));
        }
        if *alpha.last().unwrap() <= 0.0 {
            return Err(Error::spec(
                "levy-integrability",
                "tail must strictly decrease over the last segment so that w(x) → 0",
            ));
        }
        Ok(Self { x, w, alpha })
    }

    /// Samples `tail` at the given knots.
    pub fn from_fn(x: Vec<f64>, tail: impl Fn(f64) -> f64) -> Result<Self> {
        let w = x.iter().map(|&v| tail(v)).collect();
        Self::new(x, w)
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    fn pieces(&self) -> Vec<Piece> {
        let n = self.x.len();
        let mut out = Vec::with_capacity(n + 1);
        let make = |lo: f64, hi: f64, i: usize| {
            let alpha = self.alpha[i];
            Piece { lo, hi, c: self.w[i] * self.x[i].powf(alpha), alpha }
        };
        out.push(make(0.0, self.x[0], 0));
        for i in 0..n - 1 {
            out.push(make(self.x[i], self.x[i + 1], i));
        }
        out.push(make(self.x[n - 1], f64::INFINITY, n - 2));
        out
    }

    fn piece_at(&self, x: f64) -> Piece {
        let n = self.x.len();
        let i = self.x.partition_point(|&k| k <= x);
        let seg = i.saturating_sub(1).min(n - 2);
        let alpha = self.alpha[seg];
        Piece { lo: 0.0, hi: 0.0, c: self.w[seg] * self.x[seg].powf(alpha), alpha }
    }

    fn tail(&self, x: f64) -> f64 {
        self.piece_at(x).eval(x)
    }

    fn is_infinite(&self) -> bool {
        self.alpha[0] > 0.0
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        self.power_integral(a, b, 0.0)
    }

    fn power_integral(&self, a: f64, b: f64, k: f64) -> f64 {
        self.pieces()
            .iter()
            .filter(|p| p.hi > a && p.lo < b)
            .map(|p| p.power_integral(p.lo.max(a), p.hi.min(b), k))
            .sum()
    }

    fn inverse_tail(&self, y: f64) -> f64 {
        // Walk pieces from the left; the tail is continuous and nonincreasing.
        for p in self.pieces() {
            let w_hi = if p.hi.is_finite() { p.eval(p.hi) } else { 0.0 };
            if y >= w_hi {
                if p.alpha == 0.0 {
                    return p.lo;
                }
                return (p.c / y).powf(1.0 / p.alpha).clamp(p.lo, p.hi);
            }
        }
        f64::INFINITY
    }

    fn laplace(&self, lambda: f64) -> Result<f64> {
        // φ_ν(λ) = λ ∫ e^{-λx} w(x) dx, piece by piece.
        let mut total = 0.0;
        for p in self.pieces() {
            let part = if p.lo == 0.0 {
                // x = hi u^{1/(1-α)} removes the x^{-α} singularity.
                let e = 1.0 - p.alpha;
                let scale = p.c * p.hi.powf(e) / e;
                quad::integrate(|u| scale * (-lambda * p.hi * u.powf(1.0 / e)).exp(), 0.0, 1.0, 1e-14, 1e-12)?.value
            } else if p.hi.is_infinite() {
                quad::integrate_to_infinity(|x| (-lambda * x).exp() * p.eval(x), p.lo, 1e-15, 1e-12)?.value
            } else {
                quad::integrate(|x| (-lambda * x).exp() * p.eval(x), p.lo, p.hi, 1e-15, 1e-12)?.value
            };
            total += part;
        }
        Ok(lambda * total)
    }
}

/// The Lévy measure ν of a subordinator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevyMeasure {
    Null,
    /// `ν(dx) = β x^{-1-β} / Γ(1-β) dx`, normalised so that `φ(λ) = λ^β`.
    Stable { beta: f64 },
    Tabulated(TailTable),
}

impl LevyMeasure {
    pub(crate) fn validate(&self) -> Result<()> {
        if let LevyMeasure::Stable { beta } = self {
            if !(*beta > 0.0 && *beta < 1.0) {
                return Err(Error::spec("stable-index", format!("beta must lie in (0, 1), got {beta}")));
            }
        }
        Ok(())
    }

    /// Tail `w(x) = ν([x, ∞))` for `x > 0`.
    pub fn tail(&self, x: f64) -> f64 {
        match self {
            LevyMeasure::Null => 0.0,
            LevyMeasure::Stable { beta } => x.powf(-beta) / gamma(1.0 - beta),
            LevyMeasure::Tabulated(t) => t.tail(x),
        }
    }

    /// Whether `ν((0, ∞)) = ∞`.
    pub fn is_infinite(&self) -> bool {
        match self {
            LevyMeasure::Null => false,
            LevyMeasure::Stable { .. } => true,
            LevyMeasure::Tabulated(t) => t.is_infinite(),
        }
    }

    /// Total mass, finite only for finite-activity measures.
    pub fn total_mass(&self) -> f64 {
        match self {
            LevyMeasure::Null => 0.0,
            LevyMeasure::Stable { .. } => f64::INFINITY,
            LevyMeasure::Tabulated(t) => {
                if t.is_infinite() {
                    f64::INFINITY
                } else {
                    t.w[0]
                }
            }
        }
    }

    /// `∫_a^b w(x) dx`.
    pub fn tail_integral(&self, a: f64, b: f64) -> f64 {
        match self {
            LevyMeasure::Null => 0.0,
            LevyMeasure::Stable { beta } => {
                let e = 1.0 - beta;
                (b.powf(e) - a.powf(e)) / (e * gamma(e))
            }
            LevyMeasure::Tabulated(t) => t.integral(a, b),
        }
    }

    /// `∫_a^b x w(x) dx`.
    pub fn tail_first_moment(&self, a: f64, b: f64) -> f64 {
        match self {
            LevyMeasure::Null => 0.0,
            LevyMeasure::Stable { beta } => {
                let e = 2.0 - beta;
                (b.powf(e) - a.powf(e)) / (e * gamma(1.0 - beta))
            }
            LevyMeasure::Tabulated(t) => t.power_integral(a, b, 1.0),
        }
    }

    /// Mean of the jumps below `eps`: `∫_0^ε x ν(dx) = ∫_0^ε w − ε w(ε)`.
    pub fn small_jump_mean(&self, eps: f64) -> f64 {
        if eps <= 0.0 {
            return 0.0;
        }
        match self {
            LevyMeasure::Null => 0.0,
            LevyMeasure::Stable { beta } => beta * eps.powf(1.0 - beta) / ((1.0 - beta) * gamma(1.0 - beta)),
            LevyMeasure::Tabulated(t) => t.integral(0.0, eps) - eps * t.tail(eps),
        }
    }

    /// Smallest `x` with `w(x) ≤ y`; jump sizes above a cutoff are drawn as
    /// `inverse_tail(U · w(cutoff))`.
    pub fn inverse_tail(&self, y: f64) -> f64 {
        match self {
            LevyMeasure::Null => 0.0,
            LevyMeasure::Stable { beta } => (-(y.ln() + ln_gamma(1.0 - beta)) / beta).exp(),
            LevyMeasure::Tabulated(t) => t.inverse_tail(y),
        }
    }

    /// `∫ (1 - e^{-λx}) ν(dx)` for real `λ ≥ 0`.
    pub fn laplace(&self, lambda: f64) -> Result<f64> {
        if lambda == 0.0 {
            return Ok(0.0);
        }
        match self {
            LevyMeasure::Null => Ok(0.0),
            LevyMeasure::Stable { beta } => Ok(lambda.powf(*beta)),
            LevyMeasure::Tabulated(t) => t.laplace(lambda),
        }
    }
}
