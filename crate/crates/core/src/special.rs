//! Special functions and fixed quadrature rules.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Gamma function.
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// `ln |Γ(x)|`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// sin(pi x) with exact zeros at the integers.
pub fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).floor();
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    if r == 0.5 {
        return 1.0;
    }
    if r == 1.5 {
        return -1.0;
    }
    (PI * r).sin()
}

/// One-parameter Mittag-Leffler function E_alpha(z) = sum z^k / Gamma(alpha k + 1)
/// for z >= 0, where the series has no cancellation.
pub fn mittag_leffler(alpha: f64, z: f64) -> f64 {
    ln_mittag_leffler(alpha, z).exp()
}

/// Logarithm of [`mittag_leffler`], usable far beyond the overflow threshold.
pub fn ln_mittag_leffler(alpha: f64, z: f64) -> f64 {
    assert!(alpha > 0.0 && z >= 0.0);
    if z == 0.0 {
        return 0.0;
    }
    let lz = z.ln();
    let log_term = |k: usize| k as f64 * lz - ln_gamma(alpha * k as f64 + 1.0);
    let mut logs = Vec::new();
    let mut peak = f64::NEG_INFINITY;
    for k in 0..10_000_000usize {
        let l = log_term(k);
        logs.push(l);
        peak = peak.max(l);
        // Terms are unimodal in k; stop well down the decreasing side.
        if k > 0 && l < logs[k - 1] && l < peak - 40.0 {
            break;
        }
    }
    let sum: f64 = logs.iter().map(|l| (l - peak).exp()).sum();
    peak + sum.ln()
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Hermite rule for standard normal expectations: E[g(Z)] ~ sum w_i g(z_i).
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Physicists' rule (weight e^{-x^2}) by Newton iteration on the
    // orthonormal recurrence, then rescaled to N(0, 1).
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j + 1) as f64).sqrt() * p2 - (j as f64 / (j + 1) as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let s = PI.sqrt();
    let nodes = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
    let weights = w.iter().map(|v| v / s).collect();
    (nodes, weights)
}
