//! Exact and skeleton samplers for subordinators and their inverses.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma, Open01, Poisson};
use serde::Serialize;

use super::{LevyMeasure, SubordinatorKind, SubordinatorSpec};
use crate::error::{Error, Result};

/// Jump budget per path for the compound-Poisson skeleton.
const MAX_JUMPS: usize = 20_000_000;

/// A realised inverse clock `t ↦ L_{(t−a)^+}` on a calendar grid, with the
/// overshoot `R_t = a + S_{L_{(t−a)^+}} − t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InverseClockSample {
    pub times: Vec<f64>,
    pub clock: Vec<f64>,
    pub overshoot: Vec<f64>,
}

impl InverseClockSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Clock increments `L_{t_{k+1}} − L_{t_k}`.
    pub fn increments(&self) -> Vec<f64> {
        self.clock.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Domain("time grid is empty".into()));
    }
    if !(grid[0] >= 0.0) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("time grid must start at a finite nonnegative time".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Zolotarev's function for the positive stable law of index β.
fn zolotarev(beta: f64, u: f64) -> f64 {
    let b1 = 1.0 - beta;
    (beta * u).sin().powf(beta / b1) * (b1 * u).sin() * u.sin().powf(-1.0 / b1)
}

/// One draw of a standard positive β-stable variable, `E e^{−λS} = e^{−λ^β}`
/// (Kanter's representation).
pub fn sample_positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let u = PI * rng.sample::<f64, _>(Open01);
    let e: f64 = rng.sample(Exp1);
    (zolotarev(beta, u) / e).powf((1.0 - beta) / beta)
}

/// One exact draw of `L_t` for the standard β-stable subordinator, using
/// `L_t = (t / S_1)^β`.
pub fn sample_inverse_stable<R: Rng + ?Sized>(beta: f64, t: f64, rng: &mut R) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (t / sample_positive_stable(beta, rng)).powf(beta)
}

/// Exact joint law of `(L_1, S_{L_1} − 1)` for a standard β-stable subordinator.
///
/// The pre-passage level `S_{L_1−}` is Beta(β, 1−β); independently of it,
/// `V = S_{L_1−} L_1^{−1/β}` has density proportional to `v^{−β} g_β(v)`,
/// which is Kanter's representation with a Gamma(2−β) variable in place of
/// the exponential and a tilted angle. The jump that crosses level 1 is drawn
/// from ν conditioned to exceed the remaining distance.
struct StableCrossing {
    beta: f64,
    level: Beta<f64>,
    tilt: Gamma<f64>,
    a0: f64,
}

impl StableCrossing {
    fn new(beta: f64) -> Self {
        let b1 = 1.0 - beta;
        Self {
            beta,
            level: Beta::new(beta, b1).expect("beta lies in (0, 1)"),
            tilt: Gamma::new(2.0 - beta, 1.0).expect("positive shape"),
            a0: beta.powf(beta / b1) * b1,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let b1 = 1.0 - self.beta;
        let pre = self.level.sample(rng);
        let a = loop {
            let u = PI * rng.sample::<f64, _>(Open01);
            let a = zolotarev(self.beta, u);
            if rng.random::<f64>() < (self.a0 / a).powf(b1) {
                break a;
            }
        };
        let v = (a / self.tilt.sample(rng)).powf(b1 / self.beta);
        let clock = (pre / v).powf(self.beta);
        let w: f64 = rng.sample(Open01);
        let overshoot = (1.0 - pre) * (w.powf(-1.0 / self.beta) - 1.0);
        (clock, overshoot)
    }
}

/// Samples `S` at the operational times in `grid`.
///
/// Deterministic, stable and drifted stable subordinators have exact
/// increments. Tabulated measures use compound-Poisson jumps above the cutoff
/// ε plus the drift `κ + ∫_0^ε x ν(dx)`.
pub fn sample_subordinator_path<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_grid(grid)?;
    let mut out = Vec::with_capacity(grid.len());
    let mut s = 0.0;
    let mut prev = 0.0;
    let jumps = match spec.kind() {
        SubordinatorKind::General => Some(JumpLaw::new(spec)?),
        _ => None,
    };
    for &r in grid {
        let h = r - prev;
        s += spec.kappa() * h;
        if h > 0.0 {
            match (spec.levy(), &jumps) {
                (LevyMeasure::Stable { beta }, _) => s += h.powf(1.0 / beta) * sample_positive_stable(*beta, rng),
                (_, Some(j)) => {
                    s += j.small_mean * h;
                    if j.rate > 0.0 {
                        let n = Poisson::new(j.rate * h)
                            .map_err(|e| Error::numeric("sample_subordinator_path", e.to_string()))?
                            .sample(rng) as usize;
                        if n > MAX_JUMPS {
                            return Err(Error::numeric("sample_subordinator_path", "jump budget exhausted"));
                        }
                        for _ in 0..n {
                            s += j.jump(spec.levy(), rng);
                        }
                    }
                }
                _ => {}
            }
        }
        prev = r;
        out.push(s);
    }
    Ok(out)
}

/// Compound-Poisson description of the jumps above the cutoff.
struct JumpLaw {
    rate: f64,
    small_mean: f64,
}

impl JumpLaw {
    fn new(spec: &SubordinatorSpec) -> Result<Self> {
        let levy = spec.levy();
        let eps = if levy.is_infinite() {
            spec.epsilon().ok_or_else(|| {
                Error::spec(
                    "small-jump-cutoff",
                    "an infinite-activity Lévy measure needs a small-jump cutoff epsilon for path sampling",
                )
            })?
        } else {
            0.0
        };
        let rate = if eps > 0.0 { levy.tail(eps) } else { levy.total_mass() };
        Ok(Self { rate, small_mean: levy.small_jump_mean(eps) })
    }

    fn jump<R: Rng + ?Sized>(&self, levy: &LevyMeasure, rng: &mut R) -> f64 {
        levy.inverse_tail(rng.sample::<f64, _>(Open01) * self.rate)
    }
}

/// Samples `t ↦ L_{(t−a)^+}` and the overshoot `R_t` at the calendar times in
/// `grid`.
///
/// Stable clocks are sampled exactly through the Markov chain of
/// `(L_t, R_t)`: while `R` exceeds the step the clock sleeps, otherwise the
/// subordinator restarts afresh when the current jump is used up and the
/// crossing of the remaining time is drawn from the exact scaled joint law.
/// Deterministic clocks are exact. Drifted stable and tabulated clocks invert
/// the compound-Poisson skeleton exactly, creeping at the compensated drift
/// between jumps.
pub fn sample_inverse_path<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    grid: &[f64],
    a: f64,
    rng: &mut R,
) -> Result<InverseClockSample> {
    check_grid(grid)?;
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("wake-up time must be finite and nonnegative, got {a}")));
    }
    let mut clock = Vec::with_capacity(grid.len());
    let mut overshoot = Vec::with_capacity(grid.len());
    match spec.kind() {
        SubordinatorKind::Deterministic => {
            for &t in grid {
                clock.push((t - a).max(0.0) / spec.kappa());
                overshoot.push((a - t).max(0.0));
            }
        }
        SubordinatorKind::Stable => {
            let beta = spec.beta().expect("stable kind");
            let crossing = StableCrossing::new(beta);
            let (mut now, mut l, mut r) = (0.0, 0.0, a);
            for &t in grid {
                let dt = t - now;
                if r >= dt {
                    r -= dt;
                } else {
                    let s = dt - r;
                    let (l1, o1) = crossing.sample(rng);
                    l += s.powf(beta) * l1;
                    r = s * o1;
                }
                now = t;
                clock.push(l);
                overshoot.push(r);
            }
        }
        SubordinatorKind::DriftedStable | SubordinatorKind::General => {
            let jumps = JumpLaw::new(spec)?;
            let drift = spec.kappa() + jumps.small_mean;
            let waiting = |rng: &mut R| {
                if jumps.rate > 0.0 {
                    rng.sample::<f64, _>(Exp1) / jumps.rate
                } else {
                    f64::INFINITY
                }
            };
            // Operational time and subordinator value right after the last jump.
            let (mut op, mut level) = (0.0, 0.0);
            let mut wait = waiting(rng);
            let mut count = 0usize;
            for &t in grid {
                let tau = t - a;
                if tau <= 0.0 {
                    clock.push(0.0);
                    overshoot.push(-tau);
                    continue;
                }
                loop {
                    if tau < level {
                        clock.push(op);
                        overshoot.push(level - tau);
                        break;
                    }
                    let creep_end = level + drift * wait;
                    if tau < creep_end {
                        clock.push(op + (tau - level) / drift);
                        overshoot.push(0.0);
                        break;
                    }
                    op += wait;
                    level = creep_end + jumps.jump(spec.levy(), rng);
                    wait = waiting(rng);
                    count += 1;
                    if count > MAX_JUMPS {
                        return Err(Error::numeric(
                            "sample_inverse_path",
                            format!("jump budget of {MAX_JUMPS} exhausted before t = {t}"),
                        ));
                    }
                }
            }
        }
    }
    Ok(InverseClockSample { times: grid.to_vec(), clock, overshoot })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::special::norm_cdf;
    use crate::stats::{ks_critical, ks_critical_one_sample, ks_statistic, ks_two_sample, Estimate};

    #[test]
    fn positive_stable_laplace_transform() {
        let mut rng = stream(1, 0);
        for beta in [0.3, 0.5, 0.8] {
            let xs: Vec<f64> = (0..200_000).map(|_| (-sample_positive_stable(beta, &mut rng)).exp()).collect();
            let est = Estimate::from_samples(&xs);
            assert!(est.within((-1.0f64).exp(), 4.0), "beta {beta}: {est:?}");
        }
    }

    #[test]
    fn inverse_stable_half_matches_closed_form_cdf() {
        let mut rng = stream(2, 0);
        let xs: Vec<f64> = (0..50_000).map(|_| sample_inverse_stable(0.5, 1.0, &mut rng)).collect();
        let d = ks_statistic(&xs, |x| 2.0 * norm_cdf(x / 2f64.sqrt()) - 1.0);
        assert!(d < ks_critical_one_sample(0.01, xs.len()), "KS {d}");
        assert_eq!(sample_inverse_stable(0.5, 0.0, &mut rng), 0.0);
    }

    #[test]
    fn crossing_chain_marginal_matches_exact_sampler() {
        let spec = SubordinatorSpec::stable(0.6).unwrap();
        let grid = [0.0, 0.2, 0.45, 1.0];
        let mut rng = stream(3, 0);
        let mut chain = Vec::new();
        let mut exact = Vec::new();
        for _ in 0..20_000 {
            let p = sample_inverse_path(&spec, &grid, 0.0, &mut rng).unwrap();
            chain.push(p.clock[3]);
            exact.push(sample_inverse_stable(0.6, 1.0, &mut rng));
        }
        let d = ks_two_sample(&chain, &exact);
        assert!(d < ks_critical(0.01, chain.len(), exact.len()), "KS {d}");
    }

    #[test]
    fn dormant_clock_before_wake_up() {
        let spec = SubordinatorSpec::stable(0.5).unwrap();
        let mut rng = stream(4, 0);
        let p = sample_inverse_path(&spec, &[0.0, 0.1, 0.3, 0.6], 0.3, &mut rng).unwrap();
        assert_eq!(&p.clock[..3], &[0.0, 0.0, 0.0]);
        assert!((p.overshoot[1] - 0.2).abs() < 1e-15);
        assert_eq!(p.overshoot[2], 0.0);
    }

    #[test]
    fn deterministic_clock() {
        let spec = SubordinatorSpec::deterministic(2.0).unwrap();
        let mut rng = stream(5, 0);
        let p = sample_inverse_path(&spec, &[0.0, 3.0], 0.0, &mut rng).unwrap();
        assert_eq!(p.clock, vec![0.0, 1.5]);
        assert_eq!(p.overshoot, vec![0.0, 0.0]);
        let s = sample_subordinator_path(&SubordinatorSpec::deterministic(1.0).unwrap(), &[0.0, 1.0, 2.0], &mut rng);
        assert_eq!(s.unwrap(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn stable_path_self_similarity() {
        // S_h =d h^2 S_1 for β = 1/2, so median(S_h) / h^2 does not depend on h.
        let spec = SubordinatorSpec::stable(0.5).unwrap();
        let mut rng = stream(6, 0);
        let median = |h: f64, rng: &mut crate::rng::PathRng| {
            let mut v: Vec<f64> = (0..40_000)
                .map(|_| sample_subordinator_path(&spec, &[0.0, h], rng).unwrap()[1] / (h * h))
                .collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        let m1 = median(0.25, &mut rng);
        let m2 = median(1.0, &mut rng);
        assert!((m1 / m2 - 1.0).abs() < 0.05, "{m1} vs {m2}");
    }

    #[test]
    fn drifted_stable_skeleton_mean() {
        // E L_t for φ(λ) = κλ + λ^β comes from inverting 1 / (λ φ(λ)).
        let spec = SubordinatorSpec::drifted_stable(0.5, 0.5).unwrap();
        let target = crate::subordinator::inverse_moment(&spec, 1.0, 1.0).unwrap();
        let mut rng = stream(7, 0);
        let xs: Vec<f64> = (0..40_000)
            .map(|_| sample_inverse_path(&spec, &[1.0], 0.0, &mut rng).unwrap().clock[0])
            .collect();
        let est = Estimate::from_samples(&xs);
        assert!(est.within(target, 4.0), "{est:?} vs {target}");
    }

    #[test]
    fn general_requires_cutoff() {
        let table = super::super::TailTable::new(vec![0.01, 1.0], vec![10.0, 1.0]).unwrap();
        let spec = SubordinatorSpec::general(0.0, table, None).unwrap();
        let mut rng = stream(8, 0);
        let e = sample_inverse_path(&spec, &[1.0], 0.0, &mut rng).unwrap_err();
        assert!(matches!(e, Error::InvalidSpec { invariant: "small-jump-cutoff", .. }));
    }
}
