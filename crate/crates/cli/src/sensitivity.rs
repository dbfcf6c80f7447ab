use std::io::Write;

use serde::Serialize;

use cape_core::estimators::{estimate, EstimatorKind};
use cape_core::intervals::{asymptotic_interval, cp_mme_interval, cp_survey_interval};
use cape_core::model::{ErrorRates, OfficialContext, SurveyCounts};

use crate::args::SensitivityArgs;
use crate::error::{CliError, Result};
use crate::format::{cell, write_csv_preamble};
use crate::request::{parse_estimators, resolve_data};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub beta: f64,
    pub estimator: EstimatorKind,
    pub point: f64,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

/// `steps` equally spaced values from `beta_min` to `beta_max`.
pub fn beta_grid(beta_min: f64, beta_max: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(CliError::Input("--steps must be positive".into()));
    }
    if !(0.0 <= beta_min && beta_min <= beta_max) {
        return Err(CliError::Input(format!("need 0 <= beta-min <= beta-max, got [{beta_min}, {beta_max}]")));
    }
    if steps == 1 {
        return Ok(vec![beta_min]);
    }
    let step = (beta_max - beta_min) / (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| if i + 1 == steps { beta_max } else { beta_min + step * i as f64 })
        .collect())
}

/// Point estimate and interval of each estimator at every `beta`.
/// `base.beta` is ignored.
pub fn sweep(
    counts: &SurveyCounts,
    pi0: f64,
    base: ErrorRates,
    betas: &[f64],
    estimators: &[EstimatorKind],
    level: f64,
) -> Result<Vec<SensitivityRow>> {
    let beta_max = betas.iter().cloned().fold(0.0, f64::max);
    if base.alpha + beta_max >= 1.0 {
        return Err(CliError::Input(format!(
            "alpha + beta-max = {} must stay below 1",
            base.alpha + beta_max
        )));
    }
    let mut rows = Vec::with_capacity(betas.len() * estimators.len());
    for &beta in betas {
        let rates = ErrorRates { beta, ..base };
        let ctx = OfficialContext::new(pi0, &rates)?;
        for &kind in estimators {
            let e = estimate(kind, counts, &ctx, &rates)?;
            let ci = match kind {
                EstimatorKind::SurveyMle => Some(cp_survey_interval(counts, &rates, level)?),
                EstimatorKind::Mme => Some(cp_mme_interval(counts, &ctx, &rates, level)?),
                EstimatorKind::ConditionalMle | EstimatorKind::MarginalMle => {
                    asymptotic_interval(&e, counts.n, level).ok()
                }
                _ => None,
            };
            rows.push(SensitivityRow {
                beta,
                estimator: kind,
                point: e.point,
                ci_lower: ci.map(|c| c.lower),
                ci_upper: ci.map(|c| c.upper),
            });
        }
    }
    Ok(rows)
}

/// Sum of absolute changes of the point estimate of `kind` along the sweep.
pub fn total_variation(rows: &[SensitivityRow], kind: EstimatorKind) -> f64 {
    let points: Vec<f64> = rows.iter().filter(|r| r.estimator == kind).map(|r| r.point).collect();
    points.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

pub fn run<W: Write + ?Sized>(args: &SensitivityArgs, out: &mut W, err: &mut dyn Write) -> Result<()> {
    if args.data.beta != 0.0 {
        return Err(CliError::Input("--beta is swept here; use --beta-min and --beta-max".into()));
    }
    let (input, pi0, rates) = resolve_data(&args.data)?;
    let counts = input.to_counts()?;
    let estimators = parse_estimators(&args.estimator, None)?;
    if estimators.is_empty() {
        return Err(CliError::Input("no estimator selected".into()));
    }
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Input(format!("confidence level {} must lie in (0, 1)", args.level)));
    }
    let betas = beta_grid(args.beta_min, args.beta_max, args.steps)?;
    let rows = sweep(&counts, pi0, rates, &betas, &estimators, args.level)?;
    if input.is_partial() && args.beta_max > 0.0 {
        writeln!(err, "warning: partial counts: R10 = 0 is assumed for every beta in the sweep")?;
    }
    write_csv_preamble(
        out,
        &[format!(
            "sensitivity: alpha = {}, alpha0 = {}, pi0 = {}, level = {}",
            rates.alpha, rates.alpha0, pi0, args.level
        )],
    )?;
    let mut w = csv::Writer::from_writer(&mut *out);
    w.write_record(["beta", "estimator", "point", "ci_lower", "ci_upper"])?;
    for r in &rows {
        w.write_record([
            r.beta.to_string(),
            r.estimator.label(),
            r.point.to_string(),
            cell(r.ci_lower),
            cell(r.ci_upper),
        ])?;
    }
    w.flush()?;
    Ok(())
}
