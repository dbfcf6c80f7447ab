//! `simulate`: Monte Carlo scenarios from a TOML file to CSV.
//!
//! ```toml
//! seed = 20201130            # defaults shown
//! n = 2000
//! replicates = 20000
//! interval_replicates = 5000
//! level = 0.95
//! grid_points = 30
//! estimators = ["smle", "cmle", "mmle", "mme"]
//! intervals = ["cp-rstar1", "cp-r01", "asymptotic-cmle"]
//!
//! [[scenario]]
//! setting = "I"              # or explicit alpha / beta / alpha0
//! pi = 0.05
//! # pi0 = 0.02               # omit for the full pi0 grid
//! ```
//!
//! Every top-level key except `scenario` may be overridden per scenario.

use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use cape_core::estimators::EstimatorKind;
use cape_core::intervals::IntervalMethod;
use cape_core::model::ErrorRates;
use cape_core::montecarlo::{
    pi0_grid, run_scenario_with, Execution, Scenario, ScenarioResult, Setting, DEFAULT_GRID_POINTS,
    DEFAULT_SAMPLE_SIZE, DEFAULT_SEED, DESK_INTERVAL_REPLICATES, DESK_REPLICATES, FULL_REPLICATES,
};

use crate::args::SimulateArgs;
use crate::error::{CliError, Result};
use crate::format::{cell, write_csv_preamble};

pub const SIMULATE_COLUMNS: [&str; 15] = [
    "setting",
    "pi",
    "pi0",
    "n",
    "replicates",
    "seed",
    "estimator",
    "mean",
    "rmse",
    "rel_rmse_vs_cmle",
    "method",
    "coverage",
    "mean_ci_length",
    "rel_length_vs_cmle_as",
    "failures",
];

/// Keys allowed both at the top level and inside a scenario.
#[derive(Debug, Clone, Default)]
struct Defaults {
    seed: Option<u64>,
    n: Option<u64>,
    replicates: Option<u64>,
    interval_replicates: Option<u64>,
    level: Option<f64>,
    grid_points: Option<usize>,
    estimators: Option<Vec<EstimatorKind>>,
    intervals: Option<Vec<IntervalMethod>>,
}

// serde's flatten does not combine with deny_unknown_fields, hence the repetition
macro_rules! with_defaults {
    ($(#[$m:meta])* struct $name:ident { $($(#[$fm:meta])* $field:ident: $ty:ty,)* }) => {
        $(#[$m])*
        struct $name {
            $($(#[$fm])* $field: $ty,)*
            seed: Option<u64>,
            n: Option<u64>,
            replicates: Option<u64>,
            interval_replicates: Option<u64>,
            level: Option<f64>,
            grid_points: Option<usize>,
            estimators: Option<Vec<EstimatorKind>>,
            intervals: Option<Vec<IntervalMethod>>,
        }

        impl $name {
            fn defaults(&self) -> Defaults {
                Defaults {
                    seed: self.seed,
                    n: self.n,
                    replicates: self.replicates,
                    interval_replicates: self.interval_replicates,
                    level: self.level,
                    grid_points: self.grid_points,
                    estimators: self.estimators.clone(),
                    intervals: self.intervals.clone(),
                }
            }
        }
    };
}

with_defaults! {
    #[derive(Debug, Clone, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct ScenarioEntry {
        setting: Option<Setting>,
        pi: f64,
        pi0: Option<f64>,
        alpha: Option<f64>,
        beta: Option<f64>,
        alpha0: Option<f64>,
    }
}

with_defaults! {
    #[derive(Debug, Clone, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct ConfigFile {
        #[serde(default)]
        scenario: Vec<ScenarioEntry>,
    }
}

/// Parsed simulation config.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub scenarios: Vec<Scenario>,
}

fn config_error(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config { path: path.to_string(), message: message.into() }
}

impl SimulationConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| config_error(origin, e.to_string()))?;
        if file.scenario.is_empty() {
            return Err(config_error(origin, "no [[scenario]] entries"));
        }
        let defaults = file.defaults();
        let mut scenarios = Vec::new();
        for (i, entry) in file.scenario.iter().enumerate() {
            let at = |msg: String| config_error(origin, format!("scenario #{}: {msg}", i + 1));
            let d = &defaults;
            let o = &entry.defaults();
            let pick = |a: Option<u64>, b: Option<u64>| a.or(b);
            let estimators = o
                .estimators
                .clone()
                .or_else(|| d.estimators.clone())
                .unwrap_or_else(|| EstimatorKind::STUDY.to_vec());
            if estimators.is_empty() {
                return Err(at("key 'estimators': empty estimator list".into()));
            }
            let interval_methods = o.intervals.clone().or_else(|| d.intervals.clone()).unwrap_or_else(|| {
                vec![IntervalMethod::CpRstar1, IntervalMethod::CpR01, IntervalMethod::AsymptoticCmle]
            });
            let has_rates = entry.alpha.is_some() || entry.beta.is_some() || entry.alpha0.is_some();
            let rates = match (entry.setting, has_rates) {
                (Some(_), true) => {
                    return Err(at("give either 'setting' or explicit 'alpha'/'beta'/'alpha0', not both".into()))
                }
                (Some(s), false) => s.rates(),
                (None, _) => ErrorRates {
                    alpha: entry.alpha.unwrap_or(0.0),
                    beta: entry.beta.unwrap_or(0.0),
                    alpha0: entry.alpha0.unwrap_or(0.0),
                },
            };
            let grid_points = o.grid_points.or(d.grid_points).unwrap_or(DEFAULT_GRID_POINTS);
            let pi0s = match entry.pi0 {
                Some(p) => vec![p],
                None => pi0_grid(entry.pi, rates.alpha0, grid_points).map_err(|e| at(e.to_string()))?,
            };
            for pi0 in pi0s {
                let scenario = Scenario {
                    setting: entry.setting,
                    pi: entry.pi,
                    pi0,
                    rates,
                    n: pick(o.n, d.n).unwrap_or(DEFAULT_SAMPLE_SIZE),
                    replicates: pick(o.replicates, d.replicates).unwrap_or(DESK_REPLICATES),
                    interval_replicates: pick(o.interval_replicates, d.interval_replicates)
                        .unwrap_or(DESK_INTERVAL_REPLICATES),
                    seed: pick(o.seed, d.seed).unwrap_or(DEFAULT_SEED),
                    estimators: estimators.clone(),
                    interval_methods: interval_methods.clone(),
                    level: o.level.or(d.level).unwrap_or(0.95),
                };
                scenario.validate().map_err(|e| at(e.to_string()))?;
                scenarios.push(scenario);
            }
        }
        Ok(SimulationConfig { scenarios })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(&path.display().to_string(), e.to_string()))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies command-line overrides.
    pub fn apply(&mut self, seed: Option<u64>, replicates: Option<u64>, full_reps: bool) {
        for s in &mut self.scenarios {
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if full_reps {
                s.replicates = FULL_REPLICATES;
                s.interval_replicates = FULL_REPLICATES;
            }
            if let Some(r) = replicates {
                s.replicates = r;
                s.interval_replicates = s.interval_replicates.min(r);
            }
        }
    }
}

pub fn execution(workers: Option<usize>) -> Execution {
    match workers {
        None => Execution::Parallel,
        Some(0) => Execution::Sequential,
        Some(k) => Execution::ParallelWith(k),
    }
}

/// Runs every scenario in order and writes the CSV.
pub fn write_simulation<W: Write + ?Sized>(
    config: &SimulationConfig,
    execution: Execution,
    out: &mut W,
) -> Result<Vec<ScenarioResult>> {
    let mut results = Vec::with_capacity(config.scenarios.len());
    for s in &config.scenarios {
        results.push(run_scenario_with(s, execution)?);
    }
    write_preamble(out)?;
    let mut w = csv::Writer::from_writer(&mut *out);
    w.write_record(SIMULATE_COLUMNS)?;
    for r in &results {
        write_rows(&mut w, r)?;
    }
    w.flush()?;
    Ok(results)
}

fn write_preamble<W: Write + ?Sized>(out: &mut W) -> std::io::Result<()> {
    write_csv_preamble(
        out,
        &[
            "pi0 grid: points equally spaced from max(1.025*alpha0, 0.025*pi) to 0.975*pi".into(),
            "estimator rows leave method columns empty; interval rows leave estimator columns empty".into(),
            "moment estimators are summarized on their unclamped values".into(),
        ],
    )
}

fn write_rows<W: Write>(w: &mut csv::Writer<W>, r: &ScenarioResult) -> Result<()> {
    let s = &r.scenario;
    let head = |replicates: u64| {
        vec![
            s.setting_label().to_string(),
            s.pi.to_string(),
            s.pi0.to_string(),
            s.n.to_string(),
            replicates.to_string(),
            s.seed.to_string(),
        ]
    };
    for e in &r.estimators {
        let mut row = head(e.replicates);
        row.extend([
            e.kind.label(),
            cell(Some(e.mean)),
            cell(Some(e.rmse)),
            cell(e.rel_rmse_vs_cmle),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            e.failures.to_string(),
        ]);
        w.write_record(&row)?;
    }
    for c in &r.intervals {
        let mut row = head(c.replicates);
        row.extend([
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            c.method.label().to_string(),
            cell(Some(c.coverage)),
            cell(Some(c.mean_length)),
            cell(c.rel_length_vs_cmle_as),
            c.failures.to_string(),
        ]);
        w.write_record(&row)?;
    }
    Ok(())
}

pub fn run<W: Write + ?Sized>(args: &SimulateArgs, out: &mut W) -> Result<()> {
    let mut config = SimulationConfig::load(&args.config)?;
    config.apply(args.seed, args.replicates, args.full_reps);
    let exec = execution(args.workers);
    match &args.output {
        Some(path) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
            write_simulation(&config, exec, &mut file)?;
            file.flush()?;
        }
        None => {
            write_simulation(&config, exec, out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_overrides() {
        let c = SimulationConfig::parse(
            "replicates = 10\n[[scenario]]\nsetting = \"II\"\npi = 0.2\ngrid_points = 4\n[[scenario]]\npi = 0.1\npi0 = 0.05\nbeta = 0.1\nn = 50\n",
            "t.toml",
        )
        .unwrap();
        assert_eq!(c.scenarios.len(), 5);
        assert_eq!(c.scenarios[0].rates, Setting::II.rates());
        assert_eq!(c.scenarios[0].replicates, 10);
        assert_eq!(c.scenarios[4].n, 50);
        assert_eq!(c.scenarios[4].setting_label(), "custom");
    }

    #[test]
    fn strict_keys() {
        let e = SimulationConfig::parse("[[scenario]]\nsetting = \"I\"\npi = 0.05\nrepliactes = 3\n", "t.toml");
        assert!(matches!(e, Err(CliError::Config { .. })));
        let e = SimulationConfig::parse("estimators = []\n[[scenario]]\nsetting = \"I\"\npi = 0.05\n", "t.toml");
        assert!(e.unwrap_err().to_string().contains("empty estimator list"));
    }
}
