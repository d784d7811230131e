//! Moments and distribution function of the inverse subordinator, from the
//! Laplace transforms in the time variable:
//! `∫ e^{−λt} E[L_t^p] dt = Γ(p+1) / (λ φ(λ)^p)` and
//! `∫ e^{−λt} E[e^{γ L_t}] dt = φ(λ) / (λ (φ(λ) − γ))`.

use num_complex::Complex64;

use super::{SubordinatorKind, SubordinatorSpec};
use crate::error::{Error, Result};
use crate::laplace::{invert, talbot_apex, Inversion, InversionConfig, InversionMethod};
use crate::special::{gamma, ln_gamma};

/// φ at a transform node; the real-axis form serves tabulated measures.
fn phi_at(spec: &SubordinatorSpec, s: Complex64) -> Complex64 {
    if s.im == 0.0 && s.re >= 0.0 {
        return Complex64::new(spec.laplace_exponent(s.re).unwrap_or(f64::NAN), 0.0);
    }
    spec.laplace_exponent_complex(s).unwrap_or(Complex64::new(f64::NAN, f64::NAN))
}

fn check_horizon(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive and finite, got {t}")));
    }
    Ok(())
}

/// `E[L_t^p]`: closed form for deterministic and stable clocks, numerical
/// Laplace inversion otherwise.
pub fn inverse_moment(spec: &SubordinatorSpec, t: f64, p: f64) -> Result<f64> {
    check_horizon(t)?;
    if !(p > 0.0) {
        return Err(Error::Domain(format!("moment order must be positive, got {p}")));
    }
    match spec.kind() {
        SubordinatorKind::Deterministic => Ok((t / spec.kappa()).powf(p)),
        SubordinatorKind::Stable => {
            let beta = spec.beta().expect("stable kind");
            Ok((ln_gamma(p + 1.0) - ln_gamma(beta * p + 1.0)).exp() * t.powf(beta * p))
        }
        _ => Ok(inverse_moment_with(spec, t, p, &spec.default_inversion())?.value),
    }
}

/// `E[L_t^p]` by numerical inversion with an explicit configuration.
pub fn inverse_moment_with(spec: &SubordinatorSpec, t: f64, p: f64, cfg: &InversionConfig) -> Result<Inversion> {
    check_horizon(t)?;
    spec.check_inversion(cfg)?;
    let g = gamma(p + 1.0);
    let inv = invert(|s| g / (s * phi_at(spec, s).powf(p)), t, cfg)?;
    finite(inv, "inverse_moment")
}

/// `E[e^{γ L_t}]`, finite for every real γ. The deterministic case is exact;
/// other clocks invert the transform on a contour shifted to the pole
/// `φ(λ) = γ`.
pub fn inverse_exp_moment(spec: &SubordinatorSpec, t: f64, gamma: f64) -> Result<f64> {
    check_horizon(t)?;
    if gamma == 0.0 {
        return Ok(1.0);
    }
    if spec.kind() == SubordinatorKind::Deterministic {
        return Ok((gamma * t / spec.kappa()).exp());
    }
    let mut cfg = spec.default_inversion();
    cfg.shift = spec.inverse_exponent(gamma.max(0.0))?;
    Ok(inverse_exp_moment_with(spec, t, gamma, &cfg)?.value)
}

/// `E[e^{γ L_t}]` by numerical inversion with an explicit configuration.
///
/// Fails when the pole at `φ(λ) = γ` is not safely inside the Talbot contour,
/// or lies to the right of the Gaver-Stehfest shift.
pub fn inverse_exp_moment_with(
    spec: &SubordinatorSpec,
    t: f64,
    gamma: f64,
    cfg: &InversionConfig,
) -> Result<Inversion> {
    check_horizon(t)?;
    spec.check_inversion(cfg)?;
    if gamma > 0.0 {
        let pole = spec.inverse_exponent(gamma)?;
        let too_close = match cfg.method {
            InversionMethod::Talbot => {
                let apex = talbot_apex(t, cfg.nodes, cfg.shift);
                pole - cfg.shift > 0.5 * (apex - cfg.shift)
            }
            InversionMethod::GaverStehfest => pole > cfg.shift,
        };
        if too_close {
            return Err(Error::numeric(
                "inverse_exp_moment",
                format!(
                    "inversion contour too close to the pole φ(λ) = {gamma} at λ = {pole:.6}; shift the abscissa to at least the pole"
                ),
            ));
        }
    }
    let inv = invert(
        |s| {
            let phi = phi_at(spec, s);
            phi / (s * (phi - gamma))
        },
        t,
        cfg,
    )?;
    finite(inv, "inverse_exp_moment")
}

fn finite(inv: Inversion, routine: &'static str) -> Result<Inversion> {
    if inv.value.is_finite() {
        Ok(inv)
    } else {
        Err(Error::numeric(routine, "transform could not be evaluated at the inversion nodes"))
    }
}

/// Law of `L_t` for a fixed horizon.
#[derive(Debug, Clone)]
pub struct InverseLaw {
    spec: SubordinatorSpec,
    t: f64,
}

impl InverseLaw {
    pub fn new(spec: SubordinatorSpec, t: f64) -> Result<Self> {
        check_horizon(t)?;
        Ok(Self { spec, t })
    }

    pub fn horizon(&self) -> f64 {
        self.t
    }

    /// `P(L_t ≤ x) = P(S_x ≥ t)`, inverting `e^{−xφ(λ)} / λ` for `P(S_x < t)`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if self.spec.kind() == SubordinatorKind::Deterministic {
            return Ok(if x * self.spec.kappa() >= self.t { 1.0 } else { 0.0 });
        }
        let spec = &self.spec;
        let inv = invert(|s| (-x * phi_at(spec, s)).exp() / s, self.t, &spec.default_inversion())?;
        Ok((1.0 - inv.value).clamp(0.0, 1.0))
    }

    pub fn moment(&self, p: f64) -> Result<f64> {
        inverse_moment(&self.spec, self.t, p)
    }

    pub fn exp_moment(&self, gamma: f64) -> Result<f64> {
        inverse_exp_moment(&self.spec, self.t, gamma)
    }
}
