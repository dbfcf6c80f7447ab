use serde::{Deserialize, Serialize};

use cape_core::estimators::{estimate, optimal_gmm, EstimatorKind, PrevalenceEstimate};
use cape_core::intervals::{asymptotic_interval, cp_mme_interval, cp_survey_interval, ConfidenceInterval, IntervalMethod};
use cape_core::model::{validate_design, Cell, ErrorRates, OfficialContext, SurveyCounts};

use crate::args::{DataArgs, Dataset, EstimateArgs};
use crate::case_study::AUSTRIA;
use crate::error::{CliError, Result};

/// Survey counts as supplied by the user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum CountsInput {
    /// Full cross tabulation; `R00` is implied by `n`.
    Full { n: u64, r11: u64, r10: u64, r01: u64 },
    /// Only the survey positives and those among them already declared;
    /// `R10` is taken as 0.
    Partial { n: u64, r_star1: u64, r11: u64 },
}

impl CountsInput {
    pub fn to_counts(self) -> Result<SurveyCounts> {
        let counts = match self {
            CountsInput::Full { n, r11, r10, r01 } => SurveyCounts::from_cells(n, r11, r10, r01),
            CountsInput::Partial { n, r_star1, r11 } => SurveyCounts::from_partial(n, r_star1, r11),
        };
        Ok(counts?)
    }

    pub fn is_partial(&self) -> bool {
        matches!(self, CountsInput::Partial { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateRequest {
    pub counts: CountsInput,
    pub pi0: f64,
    #[serde(default)]
    pub rates: ErrorRates,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub intervals: Vec<IntervalMethod>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub clamp: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot: Option<f64>,
}

fn default_level() -> f64 {
    0.95
}

/// Natural interval of an estimator, if it has one.
pub fn default_interval(kind: EstimatorKind) -> Option<IntervalMethod> {
    match kind {
        EstimatorKind::SurveyMle => Some(IntervalMethod::CpRstar1),
        EstimatorKind::Mme => Some(IntervalMethod::CpR01),
        EstimatorKind::ConditionalMle => Some(IntervalMethod::AsymptoticCmle),
        EstimatorKind::MarginalMle => Some(IntervalMethod::AsymptoticMmle),
        EstimatorKind::CellMme(_) | EstimatorKind::OptimalGmm => None,
    }
}

pub fn parse_estimators(names: &[String], cell: Option<usize>) -> Result<Vec<EstimatorKind>> {
    let mut kinds = Vec::new();
    for name in names {
        let kind = if name.trim().eq_ignore_ascii_case("cell-mme") {
            let l = cell.ok_or_else(|| CliError::Input("estimator cell-mme needs --cell 1..4".into()))?;
            EstimatorKind::CellMme(Cell::from_number(l)?)
        } else {
            name.parse()?
        };
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    Ok(kinds)
}

/// Counts, pi0 and rates from the data flags, with a dataset as the base.
pub fn resolve_data(data: &DataArgs) -> Result<(CountsInput, f64, ErrorRates)> {
    let base = data.dataset.map(|d| match d {
        Dataset::Austria => AUSTRIA,
    });
    let n = data.n.or(base.map(|b| b.n));
    let pi0 = data
        .pi0
        .or(base.map(|b| b.pi0))
        .ok_or_else(|| CliError::Input("missing required value: --pi0".into()))?;
    let n = n.ok_or_else(|| CliError::Input("missing required value: --n".into()))?;
    let full = data.r10.is_some() || data.r01.is_some();
    let counts = if full {
        let need = |v: Option<u64>, flag: &str| {
            v.ok_or_else(|| CliError::Input(format!("full counts need --r11, --r10 and --r01 (missing {flag})")))
        };
        CountsInput::Full {
            n,
            r11: need(data.r11, "--r11")?,
            r10: need(data.r10, "--r10")?,
            r01: need(data.r01, "--r01")?,
        }
    } else {
        let r_star1 = data.r_star1.or(base.map(|b| b.r_star1)).ok_or_else(|| {
            CliError::Input("missing counts: give --r11 --r10 --r01, or --r-star1 --r11".into())
        })?;
        let r11 = data
            .r11
            .or(base.map(|b| b.r11))
            .ok_or_else(|| CliError::Input("missing required value: --r11".into()))?;
        CountsInput::Partial { n, r_star1, r11 }
    };
    let rates = ErrorRates { alpha: data.alpha, beta: data.beta, alpha0: data.alpha0 };
    Ok((counts, pi0, rates))
}

impl EstimateRequest {
    pub fn from_args(args: &EstimateArgs) -> Result<Self> {
        let (counts, pi0, rates) = resolve_data(&args.data)?;
        let names = if args.estimator.is_empty() {
            EstimatorKind::STUDY.iter().map(|k| k.label()).collect()
        } else {
            args.estimator.clone()
        };
        let estimators = parse_estimators(&names, args.cell)?;
        let intervals = if args.ci.is_empty() {
            estimators.iter().filter_map(|&k| default_interval(k)).collect()
        } else {
            args.ci.iter().map(|s| s.parse()).collect::<cape_core::Result<Vec<_>>>()?
        };
        Ok(EstimateRequest {
            counts,
            pi0,
            rates,
            estimators,
            intervals,
            level: args.level,
            clamp: args.clamp,
            pilot: args.pilot,
        })
    }

    /// Reads either a bare request or a JSON report carrying one.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let value = match value {
            serde_json::Value::Object(mut map) if map.contains_key("request") => map.remove("request").unwrap(),
            other => other,
        };
        Ok(serde_json::from_value(value)?)
    }

    /// Checks the model assumptions and the request itself.
    pub fn validate(&self) -> Result<(SurveyCounts, OfficialContext)> {
        let report = validate_design(self.pi0, &self.rates);
        if let Some(failed) = report.failures().next() {
            return Err(CliError::Input(format!("assumption violated: {}: {}", failed.name, failed.detail)));
        }
        if self.estimators.is_empty() {
            return Err(CliError::Input("no estimator selected".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::Input(format!("confidence level {} must lie in (0, 1)", self.level)));
        }
        let counts = self.counts.to_counts()?;
        let ctx = OfficialContext::new(self.pi0, &self.rates)?;
        Ok((counts, ctx))
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.counts.is_partial() && self.rates.beta > 0.0 {
            out.push(format!(
                "partial counts: R10 = 0 is assumed, but with beta = {} some declared cases may test negative",
                self.rates.beta
            ));
        }
        out
    }

    pub fn evaluate(&self) -> Result<EstimateReport> {
        let (counts, ctx) = self.validate()?;
        let mut estimates = Vec::with_capacity(self.estimators.len());
        for &kind in &self.estimators {
            let e = match (kind, self.pilot) {
                (EstimatorKind::OptimalGmm, Some(p)) => optimal_gmm(&counts, &ctx, &self.rates, Some(p))?.0,
                _ => estimate(kind, &counts, &ctx, &self.rates)?,
            };
            estimates.push(e);
        }
        let mut intervals = Vec::with_capacity(self.intervals.len());
        for &method in &self.intervals {
            let ci = match method {
                IntervalMethod::CpRstar1 => cp_survey_interval(&counts, &self.rates, self.level)?,
                IntervalMethod::CpR01 => cp_mme_interval(&counts, &ctx, &self.rates, self.level)?,
                IntervalMethod::AsymptoticCmle | IntervalMethod::AsymptoticMmle => {
                    let kind = method.estimator();
                    let e = match estimates.iter().find(|e| e.kind == kind) {
                        Some(e) => *e,
                        None => estimate(kind, &counts, &ctx, &self.rates)?,
                    };
                    asymptotic_interval(&e, counts.n, self.level)?
                }
            };
            intervals.push(if self.clamp { ci.clamp_to(ctx.pi_lower)? } else { ci });
        }
        Ok(EstimateReport {
            request: self.clone(),
            counts,
            pi_lower: ctx.pi_lower,
            estimates,
            intervals,
            warnings: self.warnings(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub request: EstimateRequest,
    /// Full cross tabulation used.
    pub counts: SurveyCounts,
    pub pi_lower: f64,
    pub estimates: Vec<PrevalenceEstimate>,
    pub intervals: Vec<ConfidenceInterval>,
    pub warnings: Vec<String>,
}
