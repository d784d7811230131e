//! Subcommand implementations.

use serde_json::{json, Value};

use subdiff::girsanov::law_battery;
use subdiff::laplace::InversionConfig;
use subdiff::market::{simulate_stock_batch, MarketSpec, Measure};
use subdiff::pricer::{
    price_by_girsanov, price_by_mc, price_by_quadrature, price_deterministic_clock, price_plain_mc, value_surface,
    PayoffSpec, PricingState, QuadratureConfig,
};
use subdiff::stats::Estimate;
use subdiff::subordinator::{inverse_stable_density, SubordinatorKind, SubordinatorSpec};
use subdiff::tfpde::{price_by_pde, solve_pde, GreenEvaluation, PdePayoff, PdeProblem};

use crate::config::{self, RunConfig};
use crate::{CliError, Command, Outcome};

const DEFAULT_PATHS: usize = 100_000;
const GIRSANOV_STEPS: usize = 8;

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialise")
}

fn csv<F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>>(f: F) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

fn payoff(cfg: &RunConfig, kind: &Option<String>, strike: Option<f64>, maturity: Option<f64>) -> Result<PayoffSpec, CliError> {
    let kind = kind.clone().or_else(|| cfg.payoff.kind.clone()).unwrap_or_else(|| "call".into());
    let strike = strike.or(cfg.payoff.strike).unwrap_or(1.0);
    let maturity = maturity.or(cfg.payoff.maturity).unwrap_or(1.0);
    Ok(match kind.as_str() {
        "call" => PayoffSpec::call(strike, maturity)?,
        "put" => PayoffSpec::put(strike, maturity)?,
        other => return Err(CliError::Config(format!("unknown payoff {other:?}; expected call or put"))),
    })
}

fn inversion(cfg: &RunConfig, flag: &Option<String>, clock: &SubordinatorSpec) -> Result<InversionConfig, CliError> {
    let mut inv = match flag.as_deref().or(cfg.method.inversion.as_deref()) {
        None => clock.default_inversion(),
        Some("talbot") => InversionConfig::default(),
        Some("gaver-stehfest") => InversionConfig::gaver_stehfest(),
        Some(other) => {
            return Err(CliError::Config(format!("unknown inversion {other:?}; expected talbot or gaver-stehfest")))
        }
    };
    if let Some(n) = cfg.method.nodes {
        inv.nodes = n;
    }
    Ok(inv)
}

fn paths(cfg: &RunConfig, flag: Option<usize>) -> usize {
    flag.or(cfg.method.paths).unwrap_or(DEFAULT_PATHS)
}

fn grid(horizon: f64, steps: usize) -> Result<Vec<f64>, CliError> {
    if horizon.is_nan() || horizon <= 0.0 || steps == 0 {
        return Err(CliError::Config("the horizon and the step count must be positive".into()));
    }
    Ok((0..=steps).map(|k| horizon * k as f64 / steps as f64).collect())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn dispatch(cmd: &Command, cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    match cmd {
        Command::Price { market, payoff: kind, strike, maturity, method, paths: n, t, spot, overshoot } => {
            let m = config::market(cfg, market)?;
            let p = payoff(cfg, kind, *strike, *maturity)?;
            let state = PricingState {
                t: *t,
                spot: spot.unwrap_or(m.s0()[0]),
                overshoot: overshoot.unwrap_or(m.wake_up()),
            };
            price(&m, &p, &state, method.as_deref().or(cfg.method.route.as_deref()), paths(cfg, *n), seed, cfg)
        }
        Command::Simulate { market, horizon, steps, paths: n, measure } => {
            let m = config::market(cfg, market)?;
            let measure = match measure.as_str() {
                "p" | "P" => Measure::P,
                "q" | "Q" => Measure::Q,
                other => return Err(CliError::Config(format!("unknown measure {other:?}; expected p or q"))),
            };
            let g = grid(*horizon, *steps)?;
            let n = paths(cfg, *n);
            let batch = simulate_stock_batch(&m, &g, measure, n, seed)?;
            let last = g.len() - 1;
            let per_stock: Vec<Value> = (0..m.dim())
                .map(|i| {
                    let d: Vec<f64> = batch.iter().map(|p| p.discounted_price(last)[i]).collect();
                    let e = Estimate::from_samples(&d);
                    json!({ "stock": i + 1, "discounted_terminal_mean": e.mean, "stderr": e.stderr })
                })
                .collect();
            let table = csv(|buf| {
                use std::io::Write;
                let header: Vec<String> = (1..=m.dim()).map(|i| format!("S_{i}")).collect();
                writeln!(buf, "path,t,L,R,{}", header.join(","))?;
                for (k, p) in batch.iter().enumerate() {
                    for j in 0..p.len() {
                        let s: Vec<String> = p.price(j).iter().map(|v| v.to_string()).collect();
                        writeln!(
                            buf,
                            "{k},{},{},{},{}",
                            p.times()[j],
                            p.driver.clock.clock[j],
                            p.driver.clock.overshoot[j],
                            s.join(",")
                        )?;
                    }
                }
                Ok(())
            });
            Ok(Outcome {
                results: json!({ "paths": n, "steps": steps, "horizon": horizon, "measure": measure, "stocks": per_stock }),
                diagnostics: Value::Null,
                table: Some(table),
            })
        }
        Command::Density { beta, t, x, tol } => {
            let tol = tol.or(cfg.method.tolerance).unwrap_or(1e-10);
            let evals = x
                .iter()
                .map(|&x| inverse_stable_density(*beta, *t, x, tol))
                .collect::<Result<Vec<_>, _>>()?;
            let table = csv(|buf| {
                use std::io::Write;
                writeln!(buf, "beta,t,x,density,error_estimate")?;
                for e in &evals {
                    writeln!(buf, "{},{},{},{},{}", e.beta, e.t, e.x, e.value, e.est_error)?;
                }
                Ok(())
            });
            let results = if evals.len() == 1 { to_json(&evals[0]) } else { to_json(&evals) };
            Ok(Outcome { results, diagnostics: Value::Null, table: Some(table) })
        }
        Command::Pde { clock, sigma, strike, tmax, grid: dims, x_min, x_max, a, inversion: inv, put } => {
            let spec = config::clock(cfg, clock)?;
            let (nt, nx) = dims
                .split_once('x')
                .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
                .filter(|(a, b)| *a >= 1 && *b >= 1)
                .ok_or_else(|| CliError::Config(format!("grid must look like 200x200, got {dims:?}")))?;
            if !(*x_min > 0.0 && x_max > x_min && *tmax > 0.0) {
                return Err(CliError::Config("need 0 < x-min < x-max and tmax > 0".into()));
            }
            let problem = PdeProblem {
                clock: spec.clone(),
                sigma: *sigma,
                strike: strike.or(cfg.payoff.strike).unwrap_or(1.0),
                payoff: if *put { PdePayoff::Put } else { PdePayoff::Call },
                wake_up: *a,
            };
            let times = linspace(0.0, *tmax, nt);
            let xs = linspace(*x_min, *x_max, nx);
            let inv = inversion(cfg, inv, &spec)?;
            let sol = solve_pde(&problem, &times, &xs, &inv, GreenEvaluation::Resolvent)?;
            let table = csv(|buf| sol.write_csv(buf));
            Ok(Outcome {
                results: json!({
                    "times": nt,
                    "prices": nx,
                    "method": inv.method,
                    "nodes": inv.nodes,
                    "max_error_estimate": sol.max_error(),
                    "terminal_row": sol.values.last(),
                }),
                diagnostics: json!({ "x_grid": [x_min, x_max], "tmax": tmax }),
                table: Some(table),
            })
        }
        Command::VerifyGirsanov { clock, theta, horizon, steps, paths: n, a } => {
            let spec = config::clock(cfg, clock)?;
            let g = grid(*horizon, *steps)?;
            let rep = law_battery(&spec, *a, &[*theta], &g, paths(cfg, *n), seed, 3.0)?;
            let table = csv(|buf| {
                use std::io::Write;
                writeln!(buf, "statistic,weighted,weighted_se,reference,reference_se,z,pass")?;
                for l in &rep.lines {
                    writeln!(
                        buf,
                        "{},{},{},{},{},{},{}",
                        l.statistic, l.weighted.mean, l.weighted.stderr, l.reference.mean, l.reference.stderr, l.z, l.pass
                    )?;
                }
                Ok(())
            });
            Ok(Outcome { results: to_json(&rep), diagnostics: Value::Null, table: Some(table) })
        }
        Command::Surface { market, payoff: kind, strike, maturity, t_points, x_min, x_max, x_points, overshoots, paths: n } => {
            let m = config::market(cfg, market)?;
            let p = payoff(cfg, kind, *strike, *maturity)?;
            let ts = linspace(0.0, p.maturity, *t_points);
            let xs = linspace(*x_min, *x_max, *x_points);
            let surface = value_surface(&m, &p, &ts, &xs, overshoots, paths(cfg, *n), seed)?;
            let table = csv(|buf| surface.write_csv(buf));
            Ok(Outcome { results: to_json(&surface), diagnostics: Value::Null, table: Some(table) })
        }
    }
}

fn price(
    m: &MarketSpec,
    p: &PayoffSpec,
    state: &PricingState,
    method: Option<&str>,
    n: usize,
    seed: u64,
    cfg: &RunConfig,
) -> Result<Outcome, CliError> {
    let kind = m.clock().kind();
    let method = method.unwrap_or(match kind {
        SubordinatorKind::Stable | SubordinatorKind::Deterministic => "quad",
        _ => "mc",
    });
    let res = match method {
        "mc" => price_by_mc(m, p, state, n, seed)?,
        "plain-mc" => price_plain_mc(m, p, state, n, seed)?,
        "girsanov" => price_by_girsanov(m, p, state, n, GIRSANOV_STEPS, seed)?,
        "quad" if kind == SubordinatorKind::Deterministic => price_deterministic_clock(m, p, state)?,
        "quad" => {
            let mut q = QuadratureConfig::default();
            if let Some(tol) = cfg.method.tolerance {
                q.density_tol = tol;
            }
            price_by_quadrature(m, p, state, &q)?
        }
        "pde" => price_by_pde(m, p, state, &inversion(cfg, &None, m.clock())?)?,
        other => {
            return Err(CliError::Config(format!(
                "unknown method {other:?}; expected mc, quad, pde, plain-mc or girsanov"
            )))
        }
    };
    let table = csv(|buf| {
        use std::io::Write;
        writeln!(buf, "value,stderr,samples")?;
        writeln!(buf, "{},{},{}", res.value, res.stderr, res.samples)
    });
    Ok(Outcome {
        results: json!({ "value": res.value, "stderr": res.stderr, "method": res.method, "samples": res.samples }),
        diagnostics: to_json(&res.diagnostics),
        table: Some(table),
    })
}

