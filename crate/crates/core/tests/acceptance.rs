//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use subdiff::girsanov::law_battery;
use subdiff::laplace::InversionConfig;
use subdiff::market::{discounted_martingale_check, simulate_stock_batch, MarketSpec, Measure};
use subdiff::quad::integrate;
use subdiff::pricer::{
    price_by_mc, price_by_quadrature, price_deterministic_clock, price_plain_mc, PayoffSpec, PricingState,
    QuadratureConfig,
};
use subdiff::rng::par_paths;
use subdiff::special::norm_cdf;
use subdiff::stats::{combined_se, Estimate};
use subdiff::subordinator::{inverse_stable_density, sample_inverse_stable, InverseStableDensity, SubordinatorSpec};
use subdiff::tfpde::{
    price_by_pde, probabilistic_solution, solve_pde, verify_pde, verify_pde_with, FractionalKernel,
    GreenEvaluation, PdePayoff, PdeProblem, VerifyOptions,
};

const SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
    /// Bit patterns of every number the criterion computed.
    fingerprint: Vec<u64>,
    elapsed: Duration,
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn benchmark(r: f64, clock: SubordinatorSpec) -> MarketSpec {
    MarketSpec::single(r, 0.0, 0.2, 0.0, 1.0, clock).unwrap()
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> (bool, String, Vec<u64>)) -> Outcome {
    let start = Instant::now();
    let (pass, mut detail, fingerprint) = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    if !in_time {
        detail.push_str(&format!("; runtime {elapsed:.1?} over the {:?} limit", limit.unwrap()));
    }
    Outcome { pass: pass && in_time, detail, fingerprint, elapsed }
}

fn stable_moments() -> Outcome {
    timed(Some(Duration::from_secs(10)), || {
        let draws = par_paths(1_000_000, SEED, |rng, _| sample_inverse_stable(0.5, 1.0, rng));
        let m1 = Estimate::from_samples(&draws);
        let sq: Vec<f64> = draws.iter().map(|x| x * x).collect();
        let m2 = Estimate::from_samples(&sq);
        let want = 2.0 / std::f64::consts::PI.sqrt();
        let pass = m1.within(want, 3.0) && m2.within(2.0, 3.0);
        let detail = format!(
            "E[L_1] = {:.6} ± {:.1e} (z = {:.2}), E[L_1²] = {:.6} ± {:.1e} (z = {:.2})",
            m1.mean,
            m1.stderr,
            m1.z_against(want),
            m2.mean,
            m2.stderr,
            m2.z_against(2.0)
        );
        (pass, detail, bits(&[m1.mean, m1.stderr, m2.mean, m2.stderr]))
    })
}

fn density_closed_form() -> Outcome {
    timed(Some(Duration::from_secs(5)), || {
        let mut worst: f64 = 0.0;
        let mut values = Vec::new();
        for x in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let h = inverse_stable_density(0.5, 1.0, x, 1e-12).unwrap().value;
            let want = (-x * x / 4.0).exp() / std::f64::consts::PI.sqrt();
            worst = worst.max((h - want).abs());
            values.push(h);
        }
        // Beyond `upper` the mass is below 1e-14 by a Chernoff bound.
        let density = InverseStableDensity::new(0.5).unwrap();
        let upper = density.tail_bound(1.0, 1e-14);
        let mass = integrate(
            |x| density.eval(1.0, x, 1e-13).map(|e| e.value).unwrap_or(f64::NAN),
            0.0,
            upper,
            1e-12,
            1e-12,
        )
        .unwrap()
        .value;
        values.push(mass);
        let pass = worst < 1e-6 && (mass - 1.0).abs() < 1e-6;
        (pass, format!("max |h − closed form| = {worst:.1e}, |∫h − 1| = {:.1e}", (mass - 1.0).abs()), bits(&values))
    })
}

fn girsanov_battery() -> Outcome {
    timed(Some(Duration::from_secs(60)), || {
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let spec = SubordinatorSpec::stable(0.5).unwrap();
        let rep = law_battery(&spec, 0.0, &[0.5], &grid, 100_000, SEED, 3.0).unwrap();
        let worst = rep.lines.iter().map(|l| l.z.abs()).fold(0.0, f64::max);
        let failed: Vec<&str> = rep.lines.iter().filter(|l| !l.pass).map(|l| l.statistic.as_str()).collect();
        let detail = format!(
            "E[M_1] = {:.5} ± {:.1e}, {} statistics, max |z| = {worst:.2}{}",
            rep.martingale_mean.mean,
            rep.martingale_mean.stderr,
            rep.lines.len(),
            if failed.is_empty() { String::new() } else { format!(", failing: {}", failed.join(" ")) }
        );
        let mut fp = vec![rep.martingale_mean.mean, rep.martingale_mean.stderr];
        fp.extend(rep.lines.iter().flat_map(|l| [l.weighted.mean, l.reference.mean]));
        (rep.pass, detail, bits(&fp))
    })
}

fn martingale_measure() -> Outcome {
    timed(Some(Duration::from_secs(60)), || {
        let market = MarketSpec::single(0.03, 0.4, 0.2, 0.0, 1.0, SubordinatorSpec::stable(0.5).unwrap()).unwrap();
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let pairs = [(0.2, 0.5), (0.5, 1.0)];
        let q = simulate_stock_batch(&market, &grid, Measure::Q, 20_000, SEED).unwrap();
        let terminal: Vec<f64> = q.iter().map(|p| p.discounted_price(grid.len() - 1)[0]).collect();
        let mean = Estimate::from_samples(&terminal);
        let q_check = discounted_martingale_check(&q, &pairs, 3.0).unwrap();
        let p = simulate_stock_batch(&market, &grid, Measure::P, 20_000, SEED + 1).unwrap();
        let p_check = discounted_martingale_check(&p, &pairs, 3.0).unwrap();
        let pass = mean.within(1.0, 3.0) && q_check.pass && !p_check.pass;
        let max_z = |rep: &subdiff::market::MartingaleReport| {
            rep.lines.iter().flat_map(|l| l.coefficients.iter().map(|c| c.z.abs())).fold(0.0, f64::max)
        };
        let detail = format!(
            "E[e^(−rT) S_T] = {:.5} ± {:.1e}; Q regression max |z| = {:.2} ({}); P control max |z| = {:.1} ({})",
            mean.mean,
            mean.stderr,
            max_z(&q_check),
            if q_check.pass { "pass" } else { "fail" },
            max_z(&p_check),
            if p_check.pass { "passes, should fail" } else { "fails as expected" }
        );
        let mut fp = vec![mean.mean, mean.stderr];
        for rep in [&q_check, &p_check] {
            fp.extend(rep.lines.iter().flat_map(|l| l.coefficients.iter().map(|c| c.value)));
        }
        (pass, detail, bits(&fp))
    })
}

fn classical_limit() -> Outcome {
    timed(None, || {
        let market = benchmark(0.0, SubordinatorSpec::deterministic(1.0).unwrap());
        let payoff = PayoffSpec::call(1.0, 1.0).unwrap();
        let state = PricingState::initial(&market);
        let want = 2.0 * norm_cdf(0.1) - 1.0;
        let exact = price_deterministic_clock(&market, &payoff, &state).unwrap();
        let cond = price_by_mc(&market, &payoff, &state, 100_000, SEED).unwrap();
        let plain = price_plain_mc(&market, &payoff, &state, 100_000, SEED).unwrap();
        let plain_est = Estimate { mean: plain.value, stderr: plain.stderr, n: plain.samples };
        let pass = (exact.value - want).abs() < 1e-8 && (cond.value - want).abs() < 1e-8 && plain_est.within(want, 3.0);
        let detail = format!(
            "exact route error {:.1e}; conditional MC error {:.1e}; plain MC {:.5} ± {:.1e} vs {want:.7}",
            (exact.value - want).abs(),
            (cond.value - want).abs(),
            plain.value,
            plain.stderr
        );
        (pass, detail, bits(&[exact.value, cond.value, plain.value, plain.stderr]))
    })
}

fn triple_route() -> Outcome {
    timed(Some(Duration::from_secs(300)), || {
        let market = benchmark(0.03, SubordinatorSpec::stable(0.5).unwrap());
        let payoff = PayoffSpec::call(1.0, 1.0).unwrap();
        let state = PricingState::initial(&market);
        let quad = price_by_quadrature(&market, &payoff, &state, &QuadratureConfig::default()).unwrap();
        let mc = price_by_mc(&market, &payoff, &state, 100_000, SEED).unwrap();
        let pde = price_by_pde(&market, &payoff, &state, &InversionConfig::default()).unwrap();
        let gate = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs() <= (3.0 * combined_se(a.1, b.1)).max(1e-3);
        let (q, m, p) = ((quad.value, 0.0), (mc.value, mc.stderr), (pde.value, 0.0));
        let pass = gate(q, m) && gate(q, p) && gate(m, p);
        let detail = format!(
            "quadrature {:.7}, conditional MC {:.7} ± {:.1e}, PDE {:.7}",
            quad.value, mc.value, mc.stderr, pde.value
        );
        (pass, detail, bits(&[quad.value, mc.value, mc.stderr, pde.value]))
    })
}

fn put_call_parity() -> Outcome {
    timed(None, || {
        let market = benchmark(0.03, SubordinatorSpec::stable(0.5).unwrap());
        let state = PricingState::initial(&market);
        let cfg = QuadratureConfig::default();
        let call = price_by_quadrature(&market, &PayoffSpec::call(1.0, 1.0).unwrap(), &state, &cfg).unwrap();
        let put = price_by_quadrature(&market, &PayoffSpec::put(1.0, 1.0).unwrap(), &state, &cfg).unwrap();
        let gap = (call.value - put.value - (1.0 - (-0.03f64).exp())).abs();
        (gap < 1e-8, format!("|C − P − (s0 − K e^(−rT))| = {gap:.1e}"), bits(&[call.value, put.value]))
    })
}

fn pde_residual() -> Outcome {
    timed(None, || {
        let problem = PdeProblem {
            clock: SubordinatorSpec::stable(0.5).unwrap(),
            sigma: 0.2,
            strike: 1.0,
            payoff: PdePayoff::Call,
            wake_up: 0.0,
        };
        let times: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let xs: Vec<f64> = (0..200).map(|i| 0.5 + i as f64 / 199.0).collect();
        let u = probabilistic_solution(&problem, &times, &xs).unwrap();
        let kernel = FractionalKernel::from_spec(&problem.clock);
        let rep = verify_pde(&u, &kernel, 0.2, 1e-3);
        let control = verify_pde(&u.perturbed(|_, x| 0.01 * x), &kernel, 0.2, 1e-3);
        let full = verify_pde_with(&u, &kernel, 0.2, 1e-3, &VerifyOptions { initial_layer: 0.0, ..Default::default() });
        let detail = format!(
            "max residual {:.2e} at (t, x) = ({:.3}, {:.3}) over {} points, initial {:.1e}, \
             including the initial layer {:.1e}; perturbed surface {}",
            rep.max_residual,
            rep.at_time,
            rep.at_x,
            rep.points_checked,
            rep.initial_residual,
            full.max_residual,
            if control.pass { "passes, should fail" } else { "fails as expected" }
        );
        (rep.pass && !control.pass, detail, bits(&[rep.max_residual, control.max_residual]))
    })
}

fn dormancy() -> Outcome {
    timed(None, || {
        let market = benchmark(0.03, SubordinatorSpec::stable(0.5).unwrap());
        let payoff = PayoffSpec::call(1.0, 1.0).unwrap();
        let mut ok = true;
        let mut values = Vec::new();
        for (t, x, a) in [(0.0, 1.0, 1.0), (0.3, 1.2, 0.7), (0.5, 0.9, 2.0), (0.9, 1.05, 0.1)] {
            let tau: f64 = 1.0 - t;
            let want = (x - (-0.03 * tau).exp()).max(0.0);
            let state = PricingState { t, spot: x, overshoot: a };
            for v in [
                price_by_mc(&market, &payoff, &state, 100, SEED).unwrap().value,
                price_by_quadrature(&market, &payoff, &state, &QuadratureConfig::default()).unwrap().value,
                price_by_pde(&market, &payoff, &state, &InversionConfig::default()).unwrap().value,
            ] {
                ok &= v == want;
                values.push(v);
            }
        }
        let problem = PdeProblem {
            clock: SubordinatorSpec::stable(0.5).unwrap(),
            sigma: 0.2,
            strike: 1.0,
            payoff: PdePayoff::Call,
            wake_up: 0.5,
        };
        let times = [0.0, 0.25, 0.5];
        let xs = [0.8, 1.0, 1.3];
        let pde = solve_pde(&problem, &times, &xs, &InversionConfig::default(), GreenEvaluation::Resolvent).unwrap();
        let prob = probabilistic_solution(&problem, &times, &xs).unwrap();
        for sol in [&pde, &prob] {
            for row in &sol.values {
                for (x, u) in xs.iter().zip(row) {
                    ok &= *u == (x - 1.0f64).max(0.0);
                    values.push(*u);
                }
            }
        }
        (ok, "dormant prices equal the forward intrinsic value and u(t ≤ a) equals the payoff, exactly".into(), bits(&values))
    })
}

type Criterion = (&'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 9] = [
    ("stable-moment law", stable_moments),
    ("density closed form", density_closed_form),
    ("Girsanov battery", girsanov_battery),
    ("martingale measure", martingale_measure),
    ("classical limit", classical_limit),
    ("triple-route agreement", triple_route),
    ("put-call parity", put_call_parity),
    ("PDE residual", pde_residual),
    ("dormancy", dormancy),
];

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn main() {
    let mut all_pass = true;
    let mut first = Vec::new();
    for (i, (name, f)) in CRITERIA.iter().enumerate() {
        let o = in_pool(1, f);
        all_pass &= o.pass;
        println!(
            "criterion {:>2} {:<24} {} [{:.2?}] {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.elapsed,
            o.detail
        );
        first.push(o);
    }
    let diverged: Vec<String> = CRITERIA
        .iter()
        .zip(&first)
        .enumerate()
        .filter(|(_, ((_, f), a))| in_pool(4, f).fingerprint != a.fingerprint)
        .map(|(i, _)| (i + 1).to_string())
        .collect();
    let reproducible = diverged.is_empty();
    all_pass &= reproducible;
    println!(
        "criterion 10 {:<24} {} criteria 1-9 rerun on 4 threads vs 1 thread: {}",
        "reproducibility",
        if reproducible { "PASS" } else { "FAIL" },
        if reproducible { "bit-identical".to_string() } else { format!("differ in {}", diverged.join(", ")) }
    );
    if !all_pass {
        std::process::exit(1);
    }
}
