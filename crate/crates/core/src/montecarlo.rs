//! Monte Carlo engine for the efficiency and coverage study, plus the
//! closed-form efficiency ratios it is checked against.
//!
//! Replicates are independent: replicate `i` of a scenario always draws from
//! stream `i` of the scenario seed. Outcomes are collected in replicate order
//! and reduced sequentially, so a result is bit-identical whether it was
//! produced by one worker or many.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CapeError, Result};
use crate::estimators::{
    estimate, fisher_information, mme_variance, survey_mle_variance, EstimatorKind, PrevalenceEstimate,
};
use crate::intervals::{asymptotic_interval, cp_mme_interval, cp_survey_interval, IntervalMethod};
use crate::model::{tau_probabilities, ErrorRates, OfficialContext, SurveyCounts};
use crate::rng::{sample_multinomial4, ReplicateRng};

pub const DEFAULT_SEED: u64 = 20_201_130;
pub const DEFAULT_SAMPLE_SIZE: u64 = 2_000;
/// Replicates used for point-estimator metrics at desk scale.
pub const DESK_REPLICATES: u64 = 20_000;
/// Replicates used for interval metrics at desk scale.
pub const DESK_INTERVAL_REPLICATES: u64 = 5_000;
/// Replicates of the full-scale study.
pub const FULL_REPLICATES: u64 = 50_000;
pub const DEFAULT_GRID_POINTS: usize = 30;

/// Misclassification presets of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    /// No misclassification.
    I,
    /// Survey false negatives only (beta = 2%).
    II,
    /// Survey false positives and negatives (alpha = 1%, beta = 2%).
    III,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::I, Setting::II, Setting::III];

    pub fn rates(self) -> ErrorRates {
        match self {
            Setting::I => ErrorRates { alpha: 0.0, beta: 0.0, alpha0: 0.0 },
            Setting::II => ErrorRates { alpha: 0.0, beta: 0.02, alpha0: 0.0 },
            Setting::III => ErrorRates { alpha: 0.01, beta: 0.02, alpha0: 0.0 },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Setting::I => "I",
            Setting::II => "II",
            Setting::III => "III",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Setting {
    type Err = CapeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Setting::I),
            "II" | "2" => Ok(Setting::II),
            "III" | "3" => Ok(Setting::III),
            other => Err(CapeError::Domain(format!("unknown setting '{other}'"))),
        }
    }
}

/// One simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Preset the rates came from, if any.
    pub setting: Option<Setting>,
    /// True prevalence.
    pub pi: f64,
    pub pi0: f64,
    pub rates: ErrorRates,
    pub n: u64,
    /// Replicates used for the estimator metrics.
    pub replicates: u64,
    /// Leading replicates also used for the interval metrics (capped at `replicates`).
    pub interval_replicates: u64,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub interval_methods: Vec<IntervalMethod>,
    pub level: f64,
}

impl Scenario {
    /// A desk-scale scenario for a preset with the study's estimators and
    /// the three interval methods compared in the study.
    pub fn new(setting: Setting, pi: f64, pi0: f64) -> Self {
        Scenario {
            setting: Some(setting),
            pi,
            pi0,
            rates: setting.rates(),
            n: DEFAULT_SAMPLE_SIZE,
            replicates: DESK_REPLICATES,
            interval_replicates: DESK_INTERVAL_REPLICATES,
            seed: DEFAULT_SEED,
            estimators: EstimatorKind::STUDY.to_vec(),
            interval_methods: vec![
                IntervalMethod::CpRstar1,
                IntervalMethod::CpR01,
                IntervalMethod::AsymptoticCmle,
            ],
            level: 0.95,
        }
    }

    pub fn context(&self) -> Result<OfficialContext> {
        OfficialContext::new(self.pi0, &self.rates)
    }

    pub fn setting_label(&self) -> &'static str {
        self.setting.map_or("custom", Setting::label)
    }

    pub fn interval_replicate_count(&self) -> u64 {
        self.interval_replicates.min(self.replicates)
    }

    pub fn validate(&self) -> Result<OfficialContext> {
        let ctx = self.context()?;
        if !ctx.admits(self.pi) {
            return Err(CapeError::Domain(format!(
                "true prevalence {} outside admissible range [{}, 1]",
                self.pi, ctx.pi_lower
            )));
        }
        if self.n == 0 {
            return Err(CapeError::Domain("sample size must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(CapeError::Domain("at least one replicate is required".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CapeError::Domain(format!("confidence level {} must lie in (0, 1)", self.level)));
        }
        Ok(ctx)
    }
}

/// How replicates are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Global rayon pool. Runs sequentially when the `parallel` feature is off.
    #[default]
    Parallel,
    /// Dedicated pool with the given number of workers.
    ParallelWith(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub kind: EstimatorKind,
    pub replicates: u64,
    pub failures: u64,
    pub mean: f64,
    pub rmse: f64,
    /// Empirical variance (denominator `successes - 1`; zero for a single success).
    pub variance: f64,
    /// RMSE relative to the conditional MLE, when that estimator was run.
    pub rel_rmse_vs_cmle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalSummary {
    pub method: IntervalMethod,
    pub replicates: u64,
    pub failures: u64,
    pub coverage: f64,
    pub mean_length: f64,
    /// Mean length relative to the asymptotic conditional-MLE interval, when run.
    pub rel_length_vs_cmle_as: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub estimators: Vec<EstimatorSummary>,
    pub intervals: Vec<IntervalSummary>,
}

impl ScenarioResult {
    pub fn estimator(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.kind == kind)
    }

    pub fn interval(&self, method: IntervalMethod) -> Option<&IntervalSummary> {
        self.intervals.iter().find(|s| s.method == method)
    }
}

/// Draws the cell counts of one replicate.
pub fn sample_counts(scenario: &Scenario, replicate_index: u64) -> Result<SurveyCounts> {
    let ctx = scenario.context()?;
    let tau = tau_probabilities(scenario.pi, &ctx, &scenario.rates)?;
    Ok(draw(scenario, &tau.as_array(), replicate_index))
}

fn draw(scenario: &Scenario, tau: &[f64; 4], replicate_index: u64) -> SurveyCounts {
    let mut rng = ReplicateRng::new(scenario.seed, replicate_index);
    let [r11, r10, r01, r00] = sample_multinomial4(&mut rng, scenario.n, *tau);
    SurveyCounts { n: scenario.n, r11, r10, r01, r00 }
}

struct Outcome {
    estimates: Vec<Option<f64>>,
    intervals: Vec<Option<(f64, f64)>>,
}

struct Plan {
    ctx: OfficialContext,
    tau: [f64; 4],
    /// Estimators to compute: requested ones first, then those only needed by intervals.
    kinds: Vec<EstimatorKind>,
}

fn plan(scenario: &Scenario) -> Result<Plan> {
    let ctx = scenario.validate()?;
    let tau = tau_probabilities(scenario.pi, &ctx, &scenario.rates)?.as_array();
    let mut kinds = Vec::new();
    for &k in &scenario.estimators {
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    for m in &scenario.interval_methods {
        let k = m.estimator();
        let needs_estimate = matches!(m, IntervalMethod::AsymptoticCmle | IntervalMethod::AsymptoticMmle);
        if needs_estimate && !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    Ok(Plan { ctx, tau, kinds })
}

fn run_replicate(scenario: &Scenario, plan: &Plan, index: u64) -> Outcome {
    let counts = draw(scenario, &plan.tau, index);
    let fitted: Vec<Option<PrevalenceEstimate>> = plan
        .kinds
        .iter()
        .map(|&k| estimate(k, &counts, &plan.ctx, &scenario.rates).ok())
        .collect();
    let estimates = fitted[..scenario.estimators.len().min(fitted.len())]
        .iter()
        .zip(&plan.kinds)
        .map(|(e, k)| e.map(|e| if k.is_moment_type() { e.raw } else { e.point }))
        .collect();

    let with_intervals = index < scenario.interval_replicate_count();
    let intervals = scenario
        .interval_methods
        .iter()
        .map(|m| {
            if !with_intervals {
                return None;
            }
            let ci = match m {
                IntervalMethod::CpRstar1 => cp_survey_interval(&counts, &scenario.rates, scenario.level),
                IntervalMethod::CpR01 => cp_mme_interval(&counts, &plan.ctx, &scenario.rates, scenario.level),
                IntervalMethod::AsymptoticCmle | IntervalMethod::AsymptoticMmle => {
                    let pos = plan.kinds.iter().position(|&k| k == m.estimator());
                    match pos.and_then(|p| fitted[p]) {
                        Some(e) => asymptotic_interval(&e, counts.n, scenario.level),
                        None => return None,
                    }
                }
            };
            ci.ok().map(|c| (c.lower, c.upper))
        })
        .collect();
    Outcome { estimates, intervals }
}

fn run_all(scenario: &Scenario, plan: &Plan, execution: Execution) -> Result<Vec<Outcome>> {
    let seq = || (0..scenario.replicates).map(|i| run_replicate(scenario, plan, i)).collect();
    match execution {
        Execution::Sequential => Ok(seq()),
        #[cfg(feature = "parallel")]
        Execution::Parallel => Ok(par_collect(scenario, plan)),
        #[cfg(feature = "parallel")]
        Execution::ParallelWith(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| CapeError::Execution(e.to_string()))?;
            Ok(pool.install(|| par_collect(scenario, plan)))
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel | Execution::ParallelWith(_) => Ok(seq()),
    }
}

#[cfg(feature = "parallel")]
fn par_collect(scenario: &Scenario, plan: &Plan) -> Vec<Outcome> {
    use rayon::prelude::*;
    (0..scenario.replicates)
        .into_par_iter()
        .map(|i| run_replicate(scenario, plan, i))
        .collect()
}

/// Runs a scenario with the default execution (parallel when available).
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioResult> {
    run_scenario_with(scenario, Execution::default())
}

pub fn run_scenario_with(scenario: &Scenario, execution: Execution) -> Result<ScenarioResult> {
    let plan = plan(scenario)?;
    let outcomes = run_all(scenario, &plan, execution)?;
    let pi = scenario.pi;

    let mut estimators: Vec<EstimatorSummary> = scenario
        .estimators
        .iter()
        .enumerate()
        .filter(|(j, k)| !scenario.estimators[..*j].contains(k))
        .map(|(_, &kind)| {
            let j = plan.kinds.iter().position(|&k| k == kind).expect("planned");
            let values: Vec<f64> = outcomes.iter().filter_map(|o| o.estimates[j]).collect();
            summarize_estimator(kind, &values, scenario.replicates, pi)
        })
        .collect();
    if let Some(cmle_rmse) = estimators
        .iter()
        .find(|s| s.kind == EstimatorKind::ConditionalMle)
        .map(|s| s.rmse)
    {
        for s in &mut estimators {
            s.rel_rmse_vs_cmle = Some(s.rmse / cmle_rmse);
        }
    }

    let attempted = scenario.interval_replicate_count();
    let mut intervals: Vec<IntervalSummary> = scenario
        .interval_methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let bounds: Vec<(f64, f64)> = outcomes[..attempted as usize]
                .iter()
                .filter_map(|o| o.intervals[j])
                .collect();
            summarize_interval(method, &bounds, attempted, pi)
        })
        .collect();
    if let Some(base) = intervals
        .iter()
        .find(|s| s.method == IntervalMethod::AsymptoticCmle)
        .map(|s| s.mean_length)
    {
        for s in &mut intervals {
            s.rel_length_vs_cmle_as = Some(s.mean_length / base);
        }
    }

    Ok(ScenarioResult { scenario: scenario.clone(), estimators, intervals })
}

fn summarize_estimator(kind: EstimatorKind, values: &[f64], attempted: u64, pi: f64) -> EstimatorSummary {
    let count = values.len();
    let failures = attempted - count as u64;
    if count == 0 {
        return EstimatorSummary {
            kind,
            replicates: attempted,
            failures,
            mean: f64::NAN,
            rmse: f64::NAN,
            variance: f64::NAN,
            rel_rmse_vs_cmle: None,
        };
    }
    let m = count as f64;
    let mean = values.iter().sum::<f64>() / m;
    let mse = values.iter().map(|v| (v - pi) * (v - pi)).sum::<f64>() / m;
    let variance = if count > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    EstimatorSummary {
        kind,
        replicates: attempted,
        failures,
        mean,
        rmse: mse.sqrt(),
        variance,
        rel_rmse_vs_cmle: None,
    }
}

fn summarize_interval(method: IntervalMethod, bounds: &[(f64, f64)], attempted: u64, pi: f64) -> IntervalSummary {
    let count = bounds.len();
    let failures = attempted - count as u64;
    let (coverage, mean_length) = if count == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let m = count as f64;
        let covered = bounds.iter().filter(|(lo, hi)| *lo <= pi && pi <= *hi).count();
        (covered as f64 / m, bounds.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / m)
    };
    IntervalSummary { method, replicates: attempted, failures, coverage, mean_length, rel_length_vs_cmle_as: None }
}

/// `pi0` values of the study grid: `points` equally spaced values from
/// `max(1.025 alpha0, 0.025 pi)` to `0.975 pi`.
pub fn pi0_grid(pi: f64, alpha0: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(CapeError::Domain(format!("a grid needs at least 2 points, got {points}")));
    }
    if !(pi > 0.0 && pi <= 1.0) {
        return Err(CapeError::Domain(format!("prevalence {pi} must lie in (0, 1]")));
    }
    let lo = (1.025 * alpha0).max(0.025 * pi);
    let hi = 0.975 * pi;
    if lo > hi {
        return Err(CapeError::Domain(format!("empty pi0 grid: lower end {lo} exceeds upper end {hi}")));
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| if i + 1 == points { hi } else { lo + step * i as f64 })
        .collect())
}

/// Middle point (index `points / 2`) of the study grid.
pub fn mid_grid_pi0(pi: f64, alpha0: f64, points: usize) -> Result<f64> {
    Ok(pi0_grid(pi, alpha0, points)?[points / 2])
}

/// One desk-scale scenario per `pi0` of the study grid.
pub fn scenario_grid(setting: Setting, pi: f64, points: usize) -> Result<Vec<Scenario>> {
    let rates = setting.rates();
    Ok(pi0_grid(pi, rates.alpha0, points)?
        .into_iter()
        .map(|pi0| Scenario::new(setting, pi, pi0))
        .collect())
}

/// `Var(survey MLE) / Var(MME)` without misclassification.
pub fn efficiency_ratio(pi: f64, pi0: f64) -> Result<f64> {
    if pi == pi0 {
        return Err(CapeError::Domain("efficiency ratio is undefined at pi = pi0".into()));
    }
    if !(0.0..=1.0).contains(&pi0) || !(pi > pi0 && pi <= 1.0) {
        return Err(CapeError::Domain(format!("need 0 <= pi0 < pi <= 1, got pi = {pi}, pi0 = {pi0}")));
    }
    Ok(pi * (1.0 - pi) / ((pi - pi0) * (1.0 + pi0 - pi)))
}

/// Sample size the survey MLE needs, relative to `n`, to match the variance
/// of the MME without misclassification.
pub fn equivalent_sample_ratio(pi: f64, pi0: f64) -> Result<f64> {
    if !(pi0 >= 0.0 && pi0 < pi && pi <= 1.0) {
        return Err(CapeError::Domain(format!("need 0 <= pi0 < pi <= 1, got pi = {pi}, pi0 = {pi0}")));
    }
    Ok((1.0 - pi0) / (1.0 - pi0 / pi))
}

/// `I(pi)^-1 / (n Var(survey MLE))`: efficiency of the survey MLE relative
/// to the Cramer-Rao bound.
pub fn survey_mle_efficiency(pi: f64, ctx: &OfficialContext, rates: &ErrorRates) -> Result<f64> {
    let info = fisher_information(pi, ctx, rates)?;
    Ok(1.0 / (info * survey_mle_variance(pi, 1, rates)))
}

/// `I(pi)^-1 / (n Var(MME))`: efficiency of the MME relative to the Cramer-Rao bound.
pub fn mme_efficiency(pi: f64, ctx: &OfficialContext, rates: &ErrorRates) -> Result<f64> {
    let info = fisher_information(pi, ctx, rates)?;
    Ok(1.0 / (info * mme_variance(pi, 1, ctx, rates)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_endpoints() {
        let g = pi0_grid(0.05, 0.0, 30).unwrap();
        assert_eq!(g.len(), 30);
        assert_abs_diff_eq!(g[0], 0.025 * 0.05, epsilon = 1e-18);
        assert_eq!(g[29], 0.975 * 0.05);
        let g = pi0_grid(0.2, 0.0, 2).unwrap();
        assert_eq!(g, vec![0.025 * 0.2, 0.975 * 0.2]);
        assert!(pi0_grid(0.2, 0.0, 1).is_err());
        // alpha0 pushes the lower end up
        assert_abs_diff_eq!(pi0_grid(0.05, 0.01, 5).unwrap()[0], 0.01025, epsilon = 1e-15);
    }

    #[test]
    fn setting_presets() {
        let grid = scenario_grid(Setting::II, 0.2, 30).unwrap();
        assert_eq!(grid.len(), 30);
        assert!(grid.iter().all(|s| s.rates == ErrorRates { alpha: 0.0, beta: 0.02, alpha0: 0.0 }));
        assert_eq!(Setting::III.rates(), ErrorRates { alpha: 0.01, beta: 0.02, alpha0: 0.0 });
        assert_eq!("iii".parse::<Setting>().unwrap(), Setting::III);
    }

    #[test]
    fn efficiency_values() {
        assert_abs_diff_eq!(efficiency_ratio(0.2, 0.1).unwrap(), 0.16 / 0.09, epsilon = 1e-14);
        assert_abs_diff_eq!(efficiency_ratio(0.3, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(efficiency_ratio(0.76, 0.5).unwrap() < 1.0);
        assert!(efficiency_ratio(0.2, 0.2).is_err());

        assert_abs_diff_eq!(equivalent_sample_ratio(0.2, 0.1).unwrap(), 1.8, epsilon = 1e-14);
        assert_abs_diff_eq!(equivalent_sample_ratio(0.02, 0.01).unwrap(), 1.98, epsilon = 1e-12);
        assert_abs_diff_eq!(equivalent_sample_ratio(0.3, 1e-12).unwrap(), 1.0, epsilon = 1e-10);
        assert!(equivalent_sample_ratio(0.1, 0.1).is_err());
    }

    #[test]
    fn no_new_cases_when_pi_equals_pi0() {
        let mut s = Scenario::new(Setting::I, 0.04, 0.04);
        s.replicates = 200;
        for i in 0..200 {
            let c = sample_counts(&s, i).unwrap();
            assert_eq!((c.r01, c.r10), (0, 0));
        }
        let mut s = Scenario::new(Setting::I, 1.0, 1.0);
        s.replicates = 10;
        for i in 0..10 {
            assert_eq!(sample_counts(&s, i).unwrap().r11, s.n);
        }
    }

    #[test]
    fn single_replicate_rmse_is_absolute_error() {
        let mut s = Scenario::new(Setting::III, 0.05, 0.02);
        s.replicates = 1;
        s.interval_replicates = 1;
        let result = run_scenario(&s).unwrap();
        let counts = sample_counts(&s, 0).unwrap();
        let ctx = s.context().unwrap();
        for summary in &result.estimators {
            let e = estimate(summary.kind, &counts, &ctx, &s.rates).unwrap();
            let v = if summary.kind.is_moment_type() { e.raw } else { e.point };
            assert_abs_diff_eq!(summary.rmse, (v - 0.05).abs(), epsilon = 1e-15);
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut s = Scenario::new(Setting::III, 0.2, 0.1);
        s.replicates = 300;
        s.interval_replicates = 100;
        let a = run_scenario_with(&s, Execution::Sequential).unwrap();
        let b = run_scenario_with(&s, Execution::ParallelWith(4)).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
