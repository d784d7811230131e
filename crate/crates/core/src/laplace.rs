//! Numerical inversion of Laplace transforms.
//!
//! The fixed Talbot contour is the default; Gaver-Stehfest works on the real
//! axis only and is kept as an independent cross-check.

use num_complex::Complex64;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InversionMethod {
    Talbot,
    GaverStehfest,
}

/// Parameters of a single inversion.
#[derive(Debug, Clone, Copy)]
pub struct InversionConfig {
    pub method: InversionMethod,
    /// Talbot node count or Gaver-Stehfest order (even).
    pub nodes: usize,
    /// Abscissa shift `c`: invert `F(s + c)` and multiply by `e^{ct}`.
    pub shift: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self { method: InversionMethod::Talbot, nodes: 32, shift: 0.0 }
    }
}

impl InversionConfig {
    pub fn gaver_stehfest() -> Self {
        Self { method: InversionMethod::GaverStehfest, nodes: 16, shift: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Inversion {
    pub value: f64,
    /// Difference to the same method run at a lower order.
    pub error_estimate: f64,
    pub method: InversionMethod,
    pub nodes: usize,
}

/// Fixed Talbot nodes for horizon `t`: `(s_k, weight_k)` such that
/// `f(t) ≈ Re Σ weight_k F(s_k)`.
pub fn talbot_nodes(t: f64, m: usize, shift: f64) -> Vec<(Complex64, Complex64)> {
    let mf = m as f64;
    let r = 2.0 * mf / (5.0 * t);
    let mut nodes = Vec::with_capacity(m);
    let lead = (r / mf) * ((r + shift) * t).exp();
    nodes.push((Complex64::new(r + shift, 0.0), Complex64::new(0.5 * lead, 0.0)));
    for k in 1..m {
        let theta = k as f64 * std::f64::consts::PI / mf;
        let cot = 1.0 / theta.tan();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        let w = (r / mf) * (t * (s + shift)).exp() * Complex64::new(1.0, sigma);
        nodes.push((s + shift, w));
    }
    nodes
}

/// Rightmost real point of the Talbot contour used for horizon `t`.
pub fn talbot_apex(t: f64, m: usize, shift: f64) -> f64 {
    2.0 * m as f64 / (5.0 * t) + shift
}

pub fn talbot<F: Fn(Complex64) -> Complex64>(f: &F, t: f64, m: usize, shift: f64) -> f64 {
    talbot_nodes(t, m, shift)
        .into_iter()
        .map(|(s, w)| (w * f(s)).re)
        .sum()
}

/// Gaver-Stehfest weights `V_1..V_n`, computed and returned at `prec` bits.
pub fn stehfest_weights(n: usize, prec: u32) -> Vec<Float> {
    assert!(n.is_multiple_of(2) && n >= 2, "Gaver-Stehfest order must be even");
    let half = n / 2;
    let fact = |k: usize| Float::with_val(prec, Float::factorial(k as u32));
    (1..=n)
        .map(|k| {
            let mut v = Float::new(prec);
            for j in k.div_ceil(2)..=k.min(half) {
                let num = Float::with_val(prec, Float::u_pow_u(j as u32, half as u32)) * fact(2 * j);
                let den = fact(half - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k);
                v += num / den;
            }
            if (k + half) % 2 == 1 {
                v = -v;
            }
            v
        })
        .collect()
}

pub fn gaver_stehfest<F: Fn(f64) -> f64>(f: &F, t: f64, n: usize, shift: f64) -> f64 {
    const PREC: u32 = 128;
    let ln2t = std::f64::consts::LN_2 / t;
    let mut acc = Float::new(PREC);
    for (k, v) in stehfest_weights(n, PREC).into_iter().enumerate() {
        let fk = f((k + 1) as f64 * ln2t + shift);
        acc += v * fk;
    }
    acc.to_f64() * ln2t * (shift * t).exp()
}

/// Inverts `transform` at `t` and estimates the error from a lower-order run
/// (half the Talbot nodes, or Gaver-Stehfest order reduced by two).
pub fn invert<F: Fn(Complex64) -> Complex64>(transform: F, t: f64, cfg: &InversionConfig) -> Result<Inversion> {
    let (values, errors) = invert_many(|s| Ok(vec![transform(s)]), t, cfg)?;
    Ok(Inversion { value: values[0], error_estimate: errors[0], method: cfg.method, nodes: cfg.nodes })
}

/// Inverts a vector of transforms sharing the same nodes, returning values
/// and error estimates component by component.
pub fn invert_many<F>(transform: F, t: f64, cfg: &InversionConfig) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(Complex64) -> Result<Vec<Complex64>>,
{
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("inversion horizon must be positive, got {t}")));
    }
    let (fine, coarse) = match cfg.method {
        InversionMethod::Talbot => {
            if cfg.nodes < 4 {
                return Err(Error::Domain("Talbot needs at least 4 nodes".into()));
            }
            (
                talbot_many(&transform, t, cfg.nodes, cfg.shift)?,
                talbot_many(&transform, t, cfg.nodes / 2, cfg.shift)?,
            )
        }
        InversionMethod::GaverStehfest => {
            if cfg.nodes < 4 || cfg.nodes % 2 == 1 {
                return Err(Error::Domain("Gaver-Stehfest order must be even and at least 4".into()));
            }
            (
                stehfest_many(&transform, t, cfg.nodes, cfg.shift)?,
                stehfest_many(&transform, t, cfg.nodes - 2, cfg.shift)?,
            )
        }
    };
    if fine.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("invert", format!("non-finite result at t = {t}")));
    }
    let errors = fine.iter().zip(&coarse).map(|(a, b)| (a - b).abs()).collect();
    Ok((fine, errors))
}

fn talbot_many<F>(transform: &F, t: f64, m: usize, shift: f64) -> Result<Vec<f64>>
where
    F: Fn(Complex64) -> Result<Vec<Complex64>>,
{
    let mut acc: Vec<f64> = Vec::new();
    for (s, w) in talbot_nodes(t, m, shift) {
        let values = transform(s)?;
        if acc.is_empty() {
            acc = vec![0.0; values.len()];
        }
        for (a, v) in acc.iter_mut().zip(values) {
            *a += (w * v).re;
        }
    }
    Ok(acc)
}

fn stehfest_many<F>(transform: &F, t: f64, n: usize, shift: f64) -> Result<Vec<f64>>
where
    F: Fn(Complex64) -> Result<Vec<Complex64>>,
{
    const PREC: u32 = 128;
    let ln2t = std::f64::consts::LN_2 / t;
    let mut acc: Vec<Float> = Vec::new();
    for (k, v) in stehfest_weights(n, PREC).into_iter().enumerate() {
        let values = transform(Complex64::new((k + 1) as f64 * ln2t + shift, 0.0))?;
        if acc.is_empty() {
            acc = vec![Float::new(PREC); values.len()];
        }
        for (a, f) in acc.iter_mut().zip(values) {
            *a += Float::with_val(PREC, &v * f.re);
        }
    }
    let scale = ln2t * (shift * t).exp();
    Ok(acc.into_iter().map(|a| a.to_f64() * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_decay(s: Complex64) -> Complex64 {
        1.0 / (s + 1.0)
    }

    #[test]
    fn talbot_recovers_exponential() {
        let inv = invert(exp_decay, 1.5, &InversionConfig::default()).unwrap();
        assert!((inv.value - (-1.5f64).exp()).abs() < 1e-10, "{inv:?}");
        assert!(inv.error_estimate < 1e-6);
    }

    #[test]
    fn talbot_handles_branch_cut() {
        // 1 / sqrt(s) <-> 1 / sqrt(pi t)
        let inv = invert(|s: Complex64| 1.0 / s.sqrt(), 2.0, &InversionConfig::default()).unwrap();
        let exact = 1.0 / (std::f64::consts::PI * 2.0).sqrt();
        assert!((inv.value - exact).abs() < 1e-10);
    }

    #[test]
    fn shifted_contour_handles_growth() {
        // 1/(s - 2) <-> e^{2t}
        let cfg = InversionConfig { shift: 2.0, ..Default::default() };
        let inv = invert(|s: Complex64| 1.0 / (s - 2.0), 1.0, &cfg).unwrap();
        assert!((inv.value / 2f64.exp() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn stehfest_weights_invert_constant() {
        // F(s) = 1/s must give exactly 1.
        let w = stehfest_weights(16, 200);
        let mut total = Float::new(200);
        for (k, v) in w.iter().enumerate() {
            total += Float::with_val(200, v / (k + 1) as u32);
        }
        assert!((total.to_f64() - 1.0).abs() < 1e-30);
    }

    #[test]
    fn gaver_stehfest_recovers_exponential() {
        let inv = invert(exp_decay, 1.0, &InversionConfig::gaver_stehfest()).unwrap();
        assert!((inv.value - (-1.0f64).exp()).abs() < 1e-5, "{inv:?}");
    }

    #[test]
    fn rejects_bad_orders() {
        let cfg = InversionConfig { method: InversionMethod::GaverStehfest, nodes: 7, shift: 0.0 };
        assert!(invert(exp_decay, 1.0, &cfg).is_err());
        assert!(invert(exp_decay, 0.0, &InversionConfig::default()).is_err());
    }
}
