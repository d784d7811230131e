//! Subordinators `S_t = κt + S⁰_t`, their inverses `L_t = inf{r : S_r > t}`,
//! and the laws of `L`.

mod density;
mod levy;
mod moments;
mod sampling;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace::{InversionConfig, InversionMethod};

pub use density::{inverse_stable_density, DensityEval, InverseStableDensity};
pub use levy::{LevyMeasure, TailTable};
pub use moments::{inverse_exp_moment, inverse_exp_moment_with, inverse_moment, inverse_moment_with, InverseLaw};
pub use sampling::{
    sample_inverse_path, sample_inverse_stable, sample_positive_stable, sample_subordinator_path,
    InverseClockSample,
};

/// Small-jump cutoff used when a configuration does not set one.
pub const DEFAULT_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubordinatorKind {
    /// `S_t = κt`.
    Deterministic,
    /// Standard β-stable, `φ(λ) = λ^β`.
    Stable,
    /// `φ(λ) = κλ + λ^β` with `κ > 0`.
    DriftedStable,
    /// Drift plus a tabulated Lévy measure.
    General,
}

/// A subordinator given by its drift κ and Lévy measure ν.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClockBlock", into = "ClockBlock")]
pub struct SubordinatorSpec {
    kappa: f64,
    levy: LevyMeasure,
    epsilon: Option<f64>,
}

impl SubordinatorSpec {
    /// Validates and builds a spec. `epsilon` is the small-jump cutoff used by
    /// the path sampler for infinite-activity measures other than the pure
    /// stable one.
    pub fn new(kappa: f64, levy: LevyMeasure, epsilon: Option<f64>) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::spec("drift", format!("kappa must be finite and nonnegative, got {kappa}")));
        }
        levy.validate()?;
        if kappa == 0.0 && !levy.is_infinite() {
            return Err(Error::spec(
                "strictly-increasing",
                "a subordinator without drift needs a Lévy measure of infinite mass",
            ));
        }
        if let Some(eps) = epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::spec("small-jump-cutoff", format!("epsilon must be positive, got {eps}")));
            }
        }
        Ok(Self { kappa, levy, epsilon })
    }

    pub fn deterministic(kappa: f64) -> Result<Self> {
        Self::new(kappa, LevyMeasure::Null, None)
    }

    pub fn stable(beta: f64) -> Result<Self> {
        Self::new(0.0, LevyMeasure::Stable { beta }, None)
    }

    pub fn drifted_stable(kappa: f64, beta: f64) -> Result<Self> {
        if kappa <= 0.0 {
            return Err(Error::spec("drift", "a drifted stable subordinator needs kappa > 0"));
        }
        Self::new(kappa, LevyMeasure::Stable { beta }, Some(DEFAULT_EPSILON))
    }

    pub fn general(kappa: f64, table: TailTable, epsilon: Option<f64>) -> Result<Self> {
        Self::new(kappa, LevyMeasure::Tabulated(table), epsilon)
    }

    /// Replaces the small-jump cutoff.
    pub fn with_epsilon(self, epsilon: f64) -> Result<Self> {
        Self::new(self.kappa, self.levy, Some(epsilon))
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn levy(&self) -> &LevyMeasure {
        &self.levy
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn kind(&self) -> SubordinatorKind {
        match (&self.levy, self.kappa > 0.0) {
            (LevyMeasure::Null, _) => SubordinatorKind::Deterministic,
            (LevyMeasure::Stable { .. }, false) => SubordinatorKind::Stable,
            (LevyMeasure::Stable { .. }, true) => SubordinatorKind::DriftedStable,
            (LevyMeasure::Tabulated(_), _) => SubordinatorKind::General,
        }
    }

    /// Stability index when the Lévy part is stable.
    pub fn beta(&self) -> Option<f64> {
        match self.levy {
            LevyMeasure::Stable { beta } => Some(beta),
            _ => None,
        }
    }

    /// `φ(λ) = κλ + ∫(1 − e^{−λx}) ν(dx)`.
    pub fn laplace_exponent(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("Laplace exponent needs lambda >= 0, got {lambda}")));
        }
        Ok(self.kappa * lambda + self.levy.laplace(lambda)?)
    }

    /// Analytic continuation of φ to the plane cut along the negative axis.
    /// Only available when φ has a closed form.
    pub fn laplace_exponent_complex(&self, s: Complex64) -> Result<Complex64> {
        let levy = match self.levy {
            LevyMeasure::Null => Complex64::new(0.0, 0.0),
            LevyMeasure::Stable { beta } => s.powf(beta),
            LevyMeasure::Tabulated(_) => {
                return Err(Error::Domain(
                    "the Laplace exponent of a tabulated measure is only available on the real axis".into(),
                ))
            }
        };
        Ok(self.kappa * s + levy)
    }

    /// Whether [`laplace_exponent_complex`](Self::laplace_exponent_complex) is available.
    pub fn has_complex_exponent(&self) -> bool {
        !matches!(self.levy, LevyMeasure::Tabulated(_))
    }

    /// Inversion scheme suited to this spec: Talbot when φ continues to the
    /// complex plane, Gaver-Stehfest otherwise.
    pub fn default_inversion(&self) -> InversionConfig {
        if self.has_complex_exponent() {
            InversionConfig::default()
        } else {
            InversionConfig::gaver_stehfest()
        }
    }

    pub(crate) fn check_inversion(&self, cfg: &InversionConfig) -> Result<()> {
        if cfg.method == InversionMethod::Talbot && !self.has_complex_exponent() {
            return Err(Error::Domain(
                "Talbot inversion needs φ off the real axis; use Gaver-Stehfest for tabulated measures".into(),
            ));
        }
        Ok(())
    }

    /// Solves `φ(λ) = y` for `y ≥ 0` on the real axis.
    pub fn inverse_exponent(&self, y: f64) -> Result<f64> {
        if y <= 0.0 {
            return Ok(0.0);
        }
        match (&self.levy, self.kappa) {
            (LevyMeasure::Null, k) => return Ok(y / k),
            (LevyMeasure::Stable { beta }, 0.0) => return Ok(y.powf(1.0 / beta)),
            _ => {}
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while self.laplace_exponent(hi)? < y {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::numeric("inverse_exponent", format!("φ never reaches {y}")));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.laplace_exponent(mid)? < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Structured-text form of a [`SubordinatorSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockBlock {
    pub kind: SubordinatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TailTable>,
}

impl TryFrom<ClockBlock> for SubordinatorSpec {
    type Error = Error;

    fn try_from(b: ClockBlock) -> Result<Self> {
        let need_beta = || b.beta.ok_or_else(|| Error::spec("clock-block", "this kind needs `beta`"));
        let need_kappa = || b.kappa.ok_or_else(|| Error::spec("clock-block", "this kind needs `kappa`"));
        let spec = match b.kind {
            SubordinatorKind::Deterministic => {
                if b.beta.is_some() || b.table.is_some() {
                    return Err(Error::spec("clock-block", "a deterministic clock takes only `kappa`"));
                }
                Self::deterministic(need_kappa()?)?
            }
            SubordinatorKind::Stable => {
                if b.kappa.is_some_and(|k| k != 0.0) || b.table.is_some() {
                    return Err(Error::spec("clock-block", "a stable clock takes only `beta`"));
                }
                Self::stable(need_beta()?)?
            }
            SubordinatorKind::DriftedStable => {
                if b.table.is_some() {
                    return Err(Error::spec("clock-block", "a drifted stable clock takes no `table`"));
                }
                Self::drifted_stable(need_kappa()?, need_beta()?)?
            }
            SubordinatorKind::General => {
                if b.beta.is_some() {
                    return Err(Error::spec("clock-block", "a general clock is given by `table`, not `beta`"));
                }
                let table = b.table.ok_or_else(|| Error::spec("clock-block", "a general clock needs `table`"))?;
                Self::general(b.kappa.unwrap_or(0.0), table, Some(DEFAULT_EPSILON))?
            }
        };
        match b.epsilon {
            Some(eps) => spec.with_epsilon(eps),
            None => Ok(spec),
        }
    }
}

impl From<SubordinatorSpec> for ClockBlock {
    fn from(s: SubordinatorSpec) -> Self {
        let kind = s.kind();
        let (beta, table) = match s.levy {
            LevyMeasure::Null => (None, None),
            LevyMeasure::Stable { beta } => (Some(beta), None),
            LevyMeasure::Tabulated(t) => (None, Some(t)),
        };
        ClockBlock {
            kind,
            kappa: (s.kappa > 0.0).then_some(s.kappa),
            beta,
            epsilon: s.epsilon,
            table,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_exponent_examples() {
        assert_eq!(SubordinatorSpec::stable(0.5).unwrap().laplace_exponent(4.0).unwrap(), 2.0);
        assert_eq!(SubordinatorSpec::deterministic(1.0).unwrap().laplace_exponent(7.0).unwrap(), 7.0);
        assert_eq!(SubordinatorSpec::drifted_stable(2.0, 0.5).unwrap().laplace_exponent(9.0).unwrap(), 21.0);
    }

    #[test]
    fn kinds() {
        assert_eq!(SubordinatorSpec::deterministic(2.0).unwrap().kind(), SubordinatorKind::Deterministic);
        assert_eq!(SubordinatorSpec::stable(0.3).unwrap().kind(), SubordinatorKind::Stable);
        assert_eq!(SubordinatorSpec::drifted_stable(1.0, 0.3).unwrap().kind(), SubordinatorKind::DriftedStable);
    }

    #[test]
    fn rejects_non_increasing_clock() {
        let e = SubordinatorSpec::new(0.0, LevyMeasure::Null, None).unwrap_err();
        assert!(matches!(e, Error::InvalidSpec { invariant: "strictly-increasing", .. }));
        let finite = TailTable::new(vec![0.5, 1.0, 2.0], vec![1.0, 1.0, 0.5]).unwrap();
        assert!(SubordinatorSpec::general(0.0, finite.clone(), None).is_err());
        assert!(SubordinatorSpec::general(0.5, finite, None).is_ok());
        assert!(SubordinatorSpec::stable(1.0).is_err());
        assert!(SubordinatorSpec::deterministic(-1.0).is_err());
    }

    #[test]
    fn complex_exponent_agrees_on_real_axis() {
        let s = SubordinatorSpec::drifted_stable(0.7, 0.4).unwrap();
        let z = s.laplace_exponent_complex(Complex64::new(2.5, 0.0)).unwrap();
        assert!((z.re - s.laplace_exponent(2.5).unwrap()).abs() < 1e-14);
        assert!(z.im.abs() < 1e-14);
    }

    #[test]
    fn inverse_exponent_roundtrip() {
        let s = SubordinatorSpec::drifted_stable(0.7, 0.4).unwrap();
        let lam = s.inverse_exponent(3.0).unwrap();
        assert!((s.laplace_exponent(lam).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(SubordinatorSpec::stable(0.5).unwrap().inverse_exponent(2.0).unwrap(), 4.0);
    }

    #[test]
    fn clock_block_roundtrip() {
        let text = "kind = \"drifted-stable\"\nkappa = 0.5\nbeta = 0.7\n";
        let spec: SubordinatorSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.kind(), SubordinatorKind::DriftedStable);
        assert_eq!(spec.epsilon(), Some(DEFAULT_EPSILON));
        let back: SubordinatorSpec = toml::from_str(&toml::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);

        let general = "kind = \"general\"\n[table]\nx = [0.001, 1.0, 10.0]\nw = [30.0, 1.0, 0.1]\n";
        let g: SubordinatorSpec = toml::from_str(general).unwrap();
        assert_eq!(g.kind(), SubordinatorKind::General);
        assert_eq!(g.epsilon(), Some(DEFAULT_EPSILON));

        assert!(toml::from_str::<SubordinatorSpec>("kind = \"stable\"\nbeta = 0.5\ncolour = 1\n").is_err());
        assert!(toml::from_str::<SubordinatorSpec>("kind = \"stable\"\n").is_err());
    }
}
