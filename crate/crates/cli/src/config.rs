//! Run configuration: an optional TOML file merged with command-line flags.
//! Flags win over the file, the file wins over built-in defaults.

use serde::Deserialize;
use toml::{Table, Value};

use subdiff::market::MarketSpec;
use subdiff::subordinator::SubordinatorSpec;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Market block in the library's format; its clock lives inside it.
    pub market: Option<Table>,
    /// Clock for commands without a market.
    pub clock: Option<Table>,
    #[serde(default)]
    pub payoff: PayoffBlock,
    #[serde(default)]
    pub method: MethodBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffBlock {
    pub kind: Option<String>,
    pub strike: Option<f64>,
    pub maturity: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodBlock {
    pub route: Option<String>,
    pub paths: Option<usize>,
    pub nodes: Option<usize>,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    pub inversion: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub path: Option<String>,
    pub format: Option<String>,
}

/// Config file contents with its raw text kept for hashing.
pub struct Loaded {
    pub config: RunConfig,
    pub text: String,
}

pub fn load(path: Option<&str>) -> Result<Loaded, CliError> {
    let Some(path) = path else {
        return Ok(Loaded { config: RunConfig::default(), text: String::new() });
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?;
    let config = toml::from_str(&text).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
    Ok(Loaded { config, text })
}

/// Clock flags shared by every command.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct ClockArgs {
    /// Clock kind: deterministic, stable, drifted-stable.
    #[arg(long)]
    pub clock: Option<String>,
    /// Stability index of the stable part (1/2 for a stable clock).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Drift of the subordinator (1 for a deterministic clock).
    #[arg(long)]
    pub kappa: Option<f64>,
}

impl ClockArgs {
    fn table(&self) -> Option<Table> {
        if self.clock.is_none() && self.beta.is_none() && self.kappa.is_none() {
            return None;
        }
        let kind = self.clock.clone().unwrap_or_else(|| match (self.beta, self.kappa) {
            (Some(_), Some(_)) => "drifted-stable".into(),
            (None, Some(_)) => "deterministic".into(),
            _ => "stable".into(),
        });
        let mut t = Table::new();
        t.insert("kind".into(), Value::String(kind.clone()));
        match self.beta {
            Some(b) => {
                t.insert("beta".into(), Value::Float(b));
            }
            None if kind == "stable" => {
                t.insert("beta".into(), Value::Float(0.5));
            }
            None => {}
        }
        match self.kappa {
            Some(k) => {
                t.insert("kappa".into(), Value::Float(k));
            }
            None if kind == "deterministic" => {
                t.insert("kappa".into(), Value::Float(1.0));
            }
            None => {}
        }
        Some(t)
    }
}

/// Scalar market flags.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct MarketArgs {
    #[command(flatten)]
    pub clock: ClockArgs,
    /// Interest rate.
    #[arg(allow_negative_numbers = true, long)]
    pub r: Option<f64>,
    /// Excess drift of the single stock.
    #[arg(allow_negative_numbers = true, long = "mu")]
    pub mu_bar: Option<f64>,
    /// Volatility of the single stock.
    #[arg(allow_negative_numbers = true, long)]
    pub sigma: Option<f64>,
    /// Initial price of the single stock.
    #[arg(long)]
    pub s0: Option<f64>,
    /// Wake-up time a.
    #[arg(long = "wake-up")]
    pub a: Option<f64>,
}

fn default_clock() -> Table {
    let mut t = Table::new();
    t.insert("kind".into(), Value::String("stable".into()));
    t.insert("beta".into(), Value::Float(0.5));
    t
}

fn parse<T: serde::de::DeserializeOwned>(table: Table, what: &str) -> Result<T, CliError> {
    Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{what}: {}", e.message())))
}

/// Clock from flags, then the `[clock]` block, then the market's clock, then
/// the stable(1/2) default.
pub fn clock(cfg: &RunConfig, args: &ClockArgs) -> Result<SubordinatorSpec, CliError> {
    let table = args
        .table()
        .or_else(|| cfg.clock.clone())
        .or_else(|| cfg.market.as_ref().and_then(|m| m.get("clock")).and_then(|c| c.as_table().cloned()))
        .unwrap_or_else(default_clock);
    parse(table, "clock")
}

pub fn market(cfg: &RunConfig, args: &MarketArgs) -> Result<MarketSpec, CliError> {
    let mut t = cfg.market.clone().unwrap_or_default();
    let mut set = |key: &str, v: Option<Value>, default: Value| {
        match v {
            Some(v) => {
                t.insert(key.into(), v);
            }
            None => {
                t.entry(key).or_insert(default);
            }
        };
    };
    let arr = |x: f64| Value::Array(vec![Value::Float(x)]);
    set("r", args.r.map(Value::Float), Value::Float(0.0));
    set("mu_bar", args.mu_bar.map(arr), arr(0.0));
    set("sigma", args.sigma.map(|s| Value::Array(vec![arr(s)])), Value::Array(vec![arr(0.2)]));
    set("s0", args.s0.map(arr), arr(1.0));
    set("a", args.a.map(Value::Float), Value::Float(0.0));
    let clock = args.clock.table().or_else(|| cfg.clock.clone()).map(Value::Table);
    set("clock", clock, Value::Table(default_clock()));
    parse(t, "market")
}
