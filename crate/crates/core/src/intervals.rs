//! Exact Clopper-Pearson intervals mapped onto the prevalence scale, and
//! asymptotic normal intervals from the Fisher information.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CapeError, Result};
use crate::estimators::{EstimatorKind, PrevalenceEstimate};
use crate::model::{ErrorRates, OfficialContext, SurveyCounts};
use crate::special;

/// How an interval was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum IntervalMethod {
    /// Clopper-Pearson on the survey positives `R*1`.
    CpRstar1,
    /// Clopper-Pearson on the newly found cases `R01`.
    CpR01,
    /// Normal approximation around the conditional MLE.
    AsymptoticCmle,
    /// Normal approximation around the marginal MLE.
    AsymptoticMmle,
}

impl IntervalMethod {
    pub const ALL: [IntervalMethod; 4] = [
        IntervalMethod::CpRstar1,
        IntervalMethod::CpR01,
        IntervalMethod::AsymptoticCmle,
        IntervalMethod::AsymptoticMmle,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            IntervalMethod::CpRstar1 => "cp-rstar1",
            IntervalMethod::CpR01 => "cp-r01",
            IntervalMethod::AsymptoticCmle => "asymptotic-cmle",
            IntervalMethod::AsymptoticMmle => "asymptotic-mmle",
        }
    }

    /// The estimator whose point estimate the interval accompanies.
    pub fn estimator(&self) -> EstimatorKind {
        match self {
            IntervalMethod::CpRstar1 => EstimatorKind::SurveyMle,
            IntervalMethod::CpR01 => EstimatorKind::Mme,
            IntervalMethod::AsymptoticCmle => EstimatorKind::ConditionalMle,
            IntervalMethod::AsymptoticMmle => EstimatorKind::MarginalMle,
        }
    }
}

impl fmt::Display for IntervalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for IntervalMethod {
    type Err = CapeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cp-rstar1" | "cp-survey" => Ok(IntervalMethod::CpRstar1),
            "cp-r01" | "cp-mme" => Ok(IntervalMethod::CpR01),
            "asymptotic-cmle" | "asymptotic" => Ok(IntervalMethod::AsymptoticCmle),
            "asymptotic-mmle" => Ok(IntervalMethod::AsymptoticMmle),
            other => Err(CapeError::Domain(format!("unknown interval method '{other}'"))),
        }
    }
}

impl From<IntervalMethod> for String {
    fn from(m: IntervalMethod) -> String {
        m.label().to_string()
    }
}

impl TryFrom<String> for IntervalMethod {
    type Error = CapeError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
    pub clamped: bool,
}

impl ConfidenceInterval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, pi: f64) -> bool {
        self.lower <= pi && pi <= self.upper
    }

    /// Intersects the interval with `[pi_lower, 1]`.
    pub fn clamp_to(self, pi_lower: f64) -> Result<Self> {
        let lower = self.lower.max(pi_lower);
        let upper = self.upper.min(1.0);
        if lower > upper {
            return Err(CapeError::EmptyInterval { lower, upper });
        }
        Ok(ConfidenceInterval { lower, upper, clamped: true, ..self })
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(0.0..1.0).contains(&level) {
        return Err(CapeError::Domain(format!("confidence level {level} must lie in [0, 1)")));
    }
    Ok(())
}

/// Quantile of the Beta(v, w) distribution.
pub fn beta_quantile(p: f64, v: f64, w: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CapeError::Domain(format!("probability {p} must lie in [0, 1]")));
    }
    if !(v > 0.0 && w > 0.0) {
        return Err(CapeError::Domain(format!("shape parameters ({v}, {w}) must be positive")));
    }
    Ok(special::beta_quantile(p, v, w))
}

/// `z` such that a two-sided normal interval at `level` is `point +/- z sd`.
pub fn normal_critical_value(level: f64) -> Result<f64> {
    check_level(level)?;
    Ok(special::normal_quantile(0.5 + 0.5 * level))
}

/// Clopper-Pearson bounds for a binomial proportion with `r` successes out of `n`.
pub fn clopper_pearson(r: u64, n: u64, level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    if n == 0 || r > n {
        return Err(CapeError::InvalidCounts(format!("need 0 <= r <= n and n > 0, got r = {r}, n = {n}")));
    }
    let half = 0.5 * (1.0 - level);
    let (r_f, n_f) = (r as f64, n as f64);
    let lower = if r == 0 { 0.0 } else { special::beta_quantile(half, r_f, n_f - r_f + 1.0) };
    let upper = if r == n { 1.0 } else { special::beta_quantile(1.0 - half, r_f + 1.0, n_f - r_f) };
    Ok((lower, upper))
}

/// Clopper-Pearson interval on `R*1`, mapped through `x -> (x - alpha) / Delta`.
pub fn cp_survey_interval(counts: &SurveyCounts, rates: &ErrorRates, level: f64) -> Result<ConfidenceInterval> {
    counts.check()?;
    rates.check()?;
    let (lo, hi) = clopper_pearson(counts.r_star1(), counts.n, level)?;
    let map = |x: f64| (x - rates.alpha) / rates.delta();
    Ok(ConfidenceInterval {
        lower: map(lo),
        upper: map(hi),
        level,
        method: IntervalMethod::CpRstar1,
        clamped: false,
    })
}

/// Clopper-Pearson interval on `R01`, mapped through the inverse of `tau01`.
pub fn cp_mme_interval(
    counts: &SurveyCounts,
    ctx: &OfficialContext,
    rates: &ErrorRates,
    level: f64,
) -> Result<ConfidenceInterval> {
    counts.check()?;
    rates.check()?;
    let (lo, hi) = clopper_pearson(counts.r01, counts.n, level)?;
    let ErrorRates { alpha, beta, alpha0 } = *rates;
    let shift = (ctx.pi0 - alpha0) * (1.0 - beta) - alpha * (1.0 - alpha0);
    let scale = rates.delta() * (1.0 - alpha0);
    let map = |x: f64| (x + shift) / scale;
    Ok(ConfidenceInterval {
        lower: map(lo),
        upper: map(hi),
        level,
        method: IntervalMethod::CpR01,
        clamped: false,
    })
}

/// Normal interval `point +/- z sqrt(1 / (n I))` around a likelihood estimate.
pub fn asymptotic_interval(estimate: &PrevalenceEstimate, n: u64, level: f64) -> Result<ConfidenceInterval> {
    let method = match estimate.kind {
        EstimatorKind::ConditionalMle => IntervalMethod::AsymptoticCmle,
        EstimatorKind::MarginalMle => IntervalMethod::AsymptoticMmle,
        other => return Err(CapeError::MissingInformation(other.label())),
    };
    if estimate.at_boundary {
        return Err(CapeError::BoundaryEstimate { point: estimate.point });
    }
    let info = match estimate.info {
        Some(i) if i > 0.0 && i.is_finite() => i,
        _ => return Err(CapeError::MissingInformation(estimate.kind.label())),
    };
    if n == 0 {
        return Err(CapeError::InvalidCounts("sample size must be positive".into()));
    }
    let half_width = normal_critical_value(level)? * (1.0 / (n as f64 * info)).sqrt();
    Ok(ConfidenceInterval {
        lower: estimate.point - half_width,
        upper: estimate.point + half_width,
        level,
        method,
        clamped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{conditional_mle, fisher_information, mme};
    use approx::assert_abs_diff_eq;

    #[test]
    fn beta_quantile_basics() {
        assert_abs_diff_eq!(beta_quantile(0.5, 1.0, 1.0).unwrap(), 0.5, epsilon = 1e-14);
        // scipy.stats.beta.ppf(0.025, 71, 2217)
        assert_abs_diff_eq!(beta_quantile(0.025, 71.0, 2217.0).unwrap(), 0.024_324_344_944_846_74, epsilon = 1e-10);
        let x = beta_quantile(0.3, 2.5, 7.0).unwrap();
        let y = beta_quantile(0.7, 7.0, 2.5).unwrap();
        assert_abs_diff_eq!(x, 1.0 - y, epsilon = 1e-12);
        assert!(beta_quantile(1.5, 1.0, 1.0).is_err());
        assert!(beta_quantile(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn clopper_pearson_conventions() {
        assert_eq!(clopper_pearson(0, 50, 0.95).unwrap().0, 0.0);
        assert_eq!(clopper_pearson(50, 50, 0.95).unwrap().1, 1.0);
        let (lo, hi) = clopper_pearson(71, 2287, 0.95).unwrap();
        // scipy.stats.beta.ppf
        assert_abs_diff_eq!(lo, 0.024_324_344_944_846_74, epsilon = 1e-10);
        assert_abs_diff_eq!(hi, 0.038_999_448_343_804_505, epsilon = 1e-10);
    }

    #[test]
    fn mapped_intervals() {
        let counts = SurveyCounts::from_partial(2287, 71, 32).unwrap();
        let exact = ErrorRates::exact();
        let survey = cp_survey_interval(&counts, &exact, 0.95).unwrap();
        let (lo, hi) = clopper_pearson(71, 2287, 0.95).unwrap();
        assert_eq!((survey.lower, survey.upper), (lo, hi));

        let rates = ErrorRates { alpha: 0.01, beta: 0.10, alpha0: 0.0 };
        let survey = cp_survey_interval(&counts, &rates, 0.95).unwrap();
        assert_abs_diff_eq!(survey.lower, (lo - 0.01) / 0.89, epsilon = 1e-15);
        assert_abs_diff_eq!(survey.upper, (hi - 0.01) / 0.89, epsilon = 1e-15);

        let ctx = OfficialContext::new(0.013105, &exact).unwrap();
        let m = cp_mme_interval(&counts, &ctx, &exact, 0.95).unwrap();
        // scipy.stats.beta.ppf for R01 = 39
        assert_abs_diff_eq!(m.lower, 0.013105 + 0.012_153_666_689_104_422, epsilon = 1e-10);
        assert_abs_diff_eq!(m.upper, 0.013105 + 0.023_238_786_052_286_04, epsilon = 1e-10);

        let ctx = OfficialContext::new(0.013105, &rates).unwrap();
        let m = cp_mme_interval(&counts, &ctx, &rates, 0.95).unwrap();
        let raw = mme(&counts, &ctx, &rates).unwrap().raw;
        assert!(m.contains(raw));
    }

    #[test]
    fn no_new_cases_gives_pi0_lower_bound() {
        let counts = SurveyCounts::from_cells(500, 10, 0, 0).unwrap();
        let rates = ErrorRates::exact();
        let ctx = OfficialContext::new(0.02, &rates).unwrap();
        assert_eq!(cp_mme_interval(&counts, &ctx, &rates, 0.95).unwrap().lower, 0.02);
    }

    #[test]
    fn asymptotic_interval_half_width() {
        let counts = SurveyCounts::from_partial(2287, 71, 32).unwrap();
        let rates = ErrorRates::exact();
        let ctx = OfficialContext::new(0.013105, &rates).unwrap();
        let e = conditional_mle(&counts, &ctx, &rates).unwrap();
        let ci = asymptotic_interval(&e, 2287, 0.95).unwrap();
        let info = fisher_information(e.point, &ctx, &rates).unwrap();
        let half = 1.959_963_984_540_054 * (1.0 / (2287.0 * info)).sqrt();
        assert_abs_diff_eq!(ci.upper - e.point, half, epsilon = 1e-12);
        assert_abs_diff_eq!(e.point - ci.lower, half, epsilon = 1e-12);

        let collapsed = asymptotic_interval(&e, 2287, 0.0).unwrap();
        assert_eq!(collapsed.lower, e.point);
        assert_eq!(collapsed.upper, e.point);
    }

    #[test]
    fn asymptotic_interval_rejects_boundary() {
        let counts = SurveyCounts::from_cells(500, 10, 0, 0).unwrap();
        let rates = ErrorRates::exact();
        let ctx = OfficialContext::new(0.02, &rates).unwrap();
        let e = conditional_mle(&counts, &ctx, &rates).unwrap();
        assert!(e.at_boundary);
        assert!(matches!(asymptotic_interval(&e, 500, 0.95), Err(CapeError::BoundaryEstimate { .. })));
    }

    #[test]
    fn clamping() {
        let ci = ConfidenceInterval {
            lower: -0.01,
            upper: 0.04,
            level: 0.95,
            method: IntervalMethod::AsymptoticCmle,
            clamped: false,
        };
        let c = ci.clamp_to(0.013).unwrap();
        assert_eq!((c.lower, c.upper, c.clamped), (0.013, 0.04, true));
        assert!(matches!(ci.clamp_to(0.05), Err(CapeError::EmptyInterval { .. })));
    }

    #[test]
    fn critical_value() {
        assert!((normal_critical_value(0.95).unwrap() - 1.959_964).abs() < 1e-6);
    }
}
