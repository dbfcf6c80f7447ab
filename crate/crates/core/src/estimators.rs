//! Point estimators of the prevalence, their variances and the Fisher
//! information of the cross-tabulation model.
//!
//! Both likelihoods handled here are sums of `w_l(pi) * ln(tau_l(pi))` with
//! affine weights and affine cell probabilities; [`AffineLogLikelihood`]
//! captures that shape once and the two maximum-likelihood estimators only
//! differ in how they fill in the weights.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CapeError, Result};
use crate::model::{Cell, ErrorRates, OfficialContext, SurveyCounts, TauAffine};
use crate::optimize::brent_maximize;

/// Distance kept from the ends of `[pi_lower, 1]` by the optimizer.
pub const OPTIMIZER_MARGIN: f64 = 1e-12;
/// Absolute tolerance of the optimizer in `pi`.
pub const OPTIMIZER_XTOL: f64 = 1e-10;
/// Closed-form estimates this close to an end of the range are placed on it.
pub const BOUNDARY_SNAP: f64 = 1e-14;
const OPTIMIZER_MAX_ITER: usize = 500;
const REFINE_HALF_WIDTH: f64 = 1e-5;

/// Which estimator produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum EstimatorKind {
    /// Survey-only maximum likelihood (sample proportion corrected for test errors).
    SurveyMle,
    /// Maximum likelihood on the full cross tabulation.
    ConditionalMle,
    /// Maximum likelihood when `R10` and `R00` are unobserved.
    MarginalMle,
    /// Moment estimator based on the newly found cases `R01`.
    Mme,
    /// Moment estimator based on a single cell.
    CellMme(Cell),
    /// Variance-minimizing combination of the cell moment estimators.
    OptimalGmm,
}

impl EstimatorKind {
    /// The estimators compared in the simulation study.
    pub const STUDY: [EstimatorKind; 4] = [
        EstimatorKind::SurveyMle,
        EstimatorKind::ConditionalMle,
        EstimatorKind::MarginalMle,
        EstimatorKind::Mme,
    ];

    pub fn label(&self) -> String {
        match self {
            EstimatorKind::SurveyMle => "smle".into(),
            EstimatorKind::ConditionalMle => "cmle".into(),
            EstimatorKind::MarginalMle => "mmle".into(),
            EstimatorKind::Mme => "mme".into(),
            EstimatorKind::CellMme(cell) => format!("cell-mme-{}", cell.number()),
            EstimatorKind::OptimalGmm => "gmm".into(),
        }
    }

    /// Moment-type estimators are unconstrained linear statistics; their raw
    /// value may leave the admissible range.
    pub fn is_moment_type(&self) -> bool {
        matches!(
            self,
            EstimatorKind::SurveyMle
                | EstimatorKind::Mme
                | EstimatorKind::CellMme(_)
                | EstimatorKind::OptimalGmm
        )
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for EstimatorKind {
    type Err = CapeError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "smle" | "survey-mle" => EstimatorKind::SurveyMle,
            "cmle" | "conditional-mle" => EstimatorKind::ConditionalMle,
            "mmle" | "marginal-mle" => EstimatorKind::MarginalMle,
            "mme" => EstimatorKind::Mme,
            "gmm" | "optimal-gmm" => EstimatorKind::OptimalGmm,
            other => match other.strip_prefix("cell-mme-") {
                Some(l) => {
                    let l: usize = l
                        .parse()
                        .map_err(|_| CapeError::Domain(format!("unknown estimator '{other}'")))?;
                    EstimatorKind::CellMme(Cell::from_number(l)?)
                }
                None => return Err(CapeError::Domain(format!("unknown estimator '{other}'"))),
            },
        })
    }
}

impl From<EstimatorKind> for String {
    fn from(k: EstimatorKind) -> String {
        k.label()
    }
}

impl TryFrom<String> for EstimatorKind {
    type Error = CapeError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A point estimate with its (plug-in) variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceEstimate {
    pub kind: EstimatorKind,
    /// Estimate clamped to the admissible range.
    pub point: f64,
    /// Unclamped value; equal to `point` for the likelihood estimators.
    pub raw: f64,
    /// Variance of the estimator evaluated at `point`. For the likelihood
    /// estimators this is the asymptotic `1 / (n I(pi))`; infinite when the
    /// information is unavailable.
    pub variance: f64,
    /// The estimate sits on (or was clamped to) an end of the admissible range.
    pub at_boundary: bool,
    /// Per-observation Fisher information at the estimate.
    pub info: Option<f64>,
}

/// Weights of the variance-minimizing combination of the cell moment estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmWeights {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    /// Lagrange multiplier of the sum-to-one constraint.
    pub lambda: f64,
}

impl GmmWeights {
    pub fn as_array(&self) -> [f64; 3] {
        [self.gamma1, self.gamma2, self.gamma3]
    }

    pub fn sum(&self) -> f64 {
        self.gamma1 + self.gamma2 + self.gamma3
    }
}

/// `sum_l (c_l + d_l pi) ln(slope_l pi + intercept_l)` up to a constant.
#[derive(Debug, Clone, Copy)]
pub struct AffineLogLikelihood {
    tau: TauAffine,
    weight_const: [f64; 4],
    weight_slope: [f64; 4],
}

impl AffineLogLikelihood {
    /// Multinomial log-likelihood of the full cross tabulation.
    pub fn conditional(counts: &SurveyCounts, ctx: &OfficialContext, rates: &ErrorRates) -> Self {
        AffineLogLikelihood {
            tau: TauAffine::new(ctx.pi0, rates),
            weight_const: counts.cells().map(|c| c as f64),
            weight_slope: [0.0; 4],
        }
    }

    /// Log-likelihood with `R10` and `R00` replaced by their expectations
    /// given `R11 + R01` survey positives.
    pub fn marginal(r11: u64, r01: u64, n: u64, ctx: &OfficialContext, rates: &ErrorRates) -> Self {
        let tau = TauAffine::new(ctx.pi0, rates);
        let n = n as f64;
        let positives = (r11 + r01) as f64;
        let (a10, b10) = (tau.slope[1], tau.intercept[1]);
        AffineLogLikelihood {
            tau,
            weight_const: [r11 as f64, n * b10, r01 as f64, n - positives - n * b10],
            weight_slope: [0.0, n * a10, 0.0, -n * a10],
        }
    }

    fn weight(&self, i: usize, pi: f64) -> f64 {
        self.weight_const[i] + self.weight_slope[i] * pi
    }

    /// Evaluates the log-likelihood, with `0 ln 0 = 0` and `-inf` when a
    /// positive weight meets a zero probability.
    pub fn eval(&self, pi: f64) -> f64 {
        let tau = self.tau.eval_all(pi);
        let mut total = 0.0;
        for (i, &t) in tau.iter().enumerate() {
            let w = self.weight(i, pi);
            if w == 0.0 {
                continue;
            }
            if t <= 0.0 {
                return f64::NEG_INFINITY;
            }
            total += w * t.ln();
        }
        total
    }

    /// `eval(pi) - eval(reference)`, computed without cancellation so that
    /// it stays accurate when `pi` is close to `reference`.
    pub fn eval_relative(&self, pi: f64, reference: f64) -> f64 {
        let step = pi - reference;
        let tau_ref = self.tau.eval_all(reference);
        let mut total = 0.0;
        for (i, &t_ref) in tau_ref.iter().enumerate() {
            let w = self.weight(i, pi);
            let w_ref = self.weight(i, reference);
            if t_ref <= 0.0 {
                // only reachable at the ends of the range
                let t = self.tau.eval(Cell::ALL[i], pi);
                if w_ref != 0.0 {
                    return f64::INFINITY;
                }
                if w != 0.0 {
                    if t <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    total += w * t.ln();
                }
                continue;
            }
            let ratio = self.tau.slope[i] * step / t_ref;
            if w != 0.0 {
                if ratio <= -1.0 {
                    return f64::NEG_INFINITY;
                }
                total += w * ratio.ln_1p();
            }
            total += self.weight_slope[i] * step * t_ref.ln();
        }
        total
    }

    /// Errors when an observed cell has zero probability over the whole
    /// admissible range, or when the likelihood does not depend on `pi`.
    pub fn check_identifiable(&self, ctx: &OfficialContext) -> Result<()> {
        let lo = self.tau.eval_all(ctx.pi_lower);
        let hi = self.tau.eval_all(1.0);
        let mut informative = false;
        for (i, cell) in Cell::ALL.iter().enumerate() {
            let w_lo = self.weight(i, ctx.pi_lower);
            let w_hi = self.weight(i, 1.0);
            if (w_lo > 0.0 || w_hi > 0.0) && lo[i] <= 0.0 && hi[i] <= 0.0 {
                return Err(CapeError::DegenerateLikelihood(format!(
                    "cell {cell:?} is observed but has zero probability for every admissible prevalence"
                )));
            }
            if self.tau.slope[i] != 0.0 && (w_lo != 0.0 || w_hi != 0.0) {
                informative = true;
            }
        }
        if !informative {
            return Err(CapeError::DegenerateLikelihood(
                "the likelihood does not depend on the prevalence".into(),
            ));
        }
        Ok(())
    }

    /// Maximizes over `[pi_lower, 1]`: a coarse Brent pass, a refinement on
    /// the relative log-likelihood around it, then a comparison with both
    /// endpoints. Returns `(argmax, at_boundary)`.
    pub fn maximize(&self, ctx: &OfficialContext) -> Result<(f64, bool)> {
        self.check_identifiable(ctx)?;
        let lo = ctx.pi_lower + OPTIMIZER_MARGIN;
        let hi = 1.0 - OPTIMIZER_MARGIN;
        if lo >= hi {
            return Ok((ctx.pi_lower.clamp(0.0, 1.0), true));
        }
        let coarse = brent_maximize(|p| self.eval(p), lo, hi, OPTIMIZER_XTOL, OPTIMIZER_MAX_ITER);
        let reference = coarse.x;
        let (rlo, rhi) = ((reference - REFINE_HALF_WIDTH).max(lo), (reference + REFINE_HALF_WIDTH).min(hi));
        let fine = brent_maximize(
            |p| self.eval_relative(p, reference),
            rlo,
            rhi,
            OPTIMIZER_XTOL,
            OPTIMIZER_MAX_ITER,
        );
        let (x, fx) = if fine.value >= 0.0 { (fine.x, fine.value) } else { (reference, 0.0) };

        let at_lower = self.eval_relative(ctx.pi_lower, reference);
        let at_upper = self.eval_relative(1.0, reference);
        if at_lower >= fx && at_lower >= at_upper {
            return Ok((ctx.pi_lower, true));
        }
        if at_upper >= fx {
            return Ok((1.0, true));
        }
        Ok((x, false))
    }
}

fn check_inputs(counts: &SurveyCounts, ctx: &OfficialContext, rates: &ErrorRates) -> Result<()> {
    counts.check()?;
    rates.check()?;
    if rates.alpha0 > ctx.pi0 {
        return Err(CapeError::Assumption(format!(
            "official procedure must be informative: alpha0 = {} exceeds pi0 = {}",
            rates.alpha0, ctx.pi0
        )));
    }
    Ok(())
}

/// Survey-only estimator `(R*1/n - alpha) / Delta`.
pub fn survey_mle(counts: &SurveyCounts, rates: &ErrorRates) -> Result<PrevalenceEstimate> {
    counts.check()?;
    rates.check()?;
    let n = counts.n as f64;
    let raw = (counts.r_star1() as f64 / n - rates.alpha) / rates.delta();
    let point = raw.clamp(0.0, 1.0);
    Ok(PrevalenceEstimate {
        kind: EstimatorKind::SurveyMle,
        point,
        raw,
        variance: survey_mle_variance(point, counts.n, rates),
        at_boundary: raw != point,
        info: None,
    })
}

/// Finite-sample variance of the survey MLE at prevalence `pi`.
pub fn survey_mle_variance(pi: f64, n: u64, rates: &ErrorRates) -> f64 {
    let delta = rates.delta();
    let positive = pi * delta + rates.alpha;
    (positive * (1.0 - positive) / (n as f64 * delta * delta)).max(0.0)
}

/// Multinomial log-likelihood of the cross tabulation at `pi` (up to a constant).
pub fn log_likelihood(pi: f64, counts: &SurveyCounts, ctx: &OfficialContext, rates: &ErrorRates) -> f64 {
    AffineLogLikelihood::conditional(counts, ctx, rates).eval(pi)
}

/// Marginal log-likelihood when only `R11` and `R01` are observed.
pub fn marginal_log_likelihood(
    pi: f64,
    r11: u64,
    r01: u64,
    n: u64,
    ctx: &OfficialContext,
    rates: &ErrorRates,
) -> f64 {
    AffineLogLikelihood::marginal(r11, r01, n, ctx, rates).eval(pi)
}

/// Closed-form conditional MLE, valid when `alpha0 == 0`. Not clamped.
pub fn conditional_mle_closed_form(
    counts: &SurveyCounts,
    ctx: &OfficialContext,
    rates: &ErrorRates,
) -> Result<f64> {
    check_inputs(counts, ctx, rates)?;
    if rates.alpha0 != 0.0 {
        return Err(CapeError::Domain("closed form requires alpha0 = 0".into()));
    }
    let (r01, r00) = (counts.r01 as f64, counts.r00 as f64);
    if r01 + r00 == 0.0 {
        return Err(CapeError::DegenerateLikelihood(
            "the likelihood does not depend on the prevalence".into(),
        ));
    }
    let delta = rates.delta();
    let pi0 = ctx.pi0;
    Ok((pi0 * r00 + r01) / (delta * (r01 + r00)) - pi0 * rates.beta / delta - rates.alpha / delta)
}

fn mle_estimate(
    kind: EstimatorKind,
    point: f64,
    at_boundary: bool,
    n: u64,
    info: Option<f64>,
) -> PrevalenceEstimate {
    let variance = match info {
        Some(i) if i > 0.0 && i.is_finite() => 1.0 / (n as f64 * i),
        _ => f64::INFINITY,
    };
    PrevalenceEstimate { kind, point, raw: point, variance, at_boundary, info }
}

/// Conditional MLE over `[pi_lower, 1]`. Uses the closed form when `alpha0 == 0`
/// (the likelihood is then concave with an explicit stationary point) and the
/// bounded optimizer otherwise.
pub fn conditional_mle(
    counts: &SurveyCounts,
    ctx: &OfficialContext,
    rates: &ErrorRates,
) -> Result<PrevalenceEstimate> {
    check_inputs(counts, ctx, rates)?;
    if rates.alpha0 != 0.0 {
        return conditional_mle_numeric(counts, ctx, rates);
    }
    let ll = AffineLogLikelihood::conditional(counts, ctx, rates);
    ll.check_identifiable(ctx)?;
    let closed = conditional_mle_closed_form(counts, ctx, rates)?;
    // rounding can leave a boundary maximum a few ulp inside the range
    let snap = BOUNDARY_SNAP * ctx.pi_lower.abs().max(1.0);
    let point = if (closed - ctx.pi_lower).abs() <= snap {
        ctx.pi_lower
    } else if (closed - 1.0).abs() <= snap {
        1.0
    } else {
        ctx.clamp(closed)
    };
    let at_boundary = point <= ctx.pi_lower || point >= 1.0;
    let info = fisher_information(point, ctx, rates).ok();
    Ok(mle_estimate(EstimatorKind::ConditionalMle, point, at_boundary, counts.n, info))
}

/// Conditional MLE by numerical maximization, whatever `alpha0` is.
pub fn conditional_mle_numeric(
    counts: &SurveyCounts,
    ctx: &OfficialContext,
    rates: &ErrorRates,
) -> Result<PrevalenceEstimate> {
    check_inputs(counts, ctx, rates)?;
    let ll = AffineLogLikelihood::conditional(counts, ctx, rates);
    let (point, at_boundary) = ll.maximize(ctx)?;
    let info = fisher_information(point, ctx, rates).ok();
    Ok(mle_estimate(EstimatorKind::ConditionalMle, point, at_boundary, counts.n, info))
}

/// Per-observation Fisher information of the cross-tabulation model,
/// `sum_l slope_l^2 / tau_l(pi)` over the cells whose probability moves with `pi`.
pub fn fisher_information(pi: f64, ctx: &OfficialContext, rates: &ErrorRates) -> Result<f64> {
    rates.check()?;
    if !ctx.admits(pi) {
        return Err(CapeError::Domain(format!(
            "prevalence {pi} outside admissible range [{}, 1]",
            ctx.pi_lower
        )));
    }
    let affine = TauAffine::new(ctx.pi0, rates);
    let tau = affine.eval_all(pi);
    let mut info = 0.0;
    for (i, &t) in tau.iter().enumerate() {
        let slope = affine.slope[i];
        if slope == 0.0 {
            continue;
        }
        if t <= 0.0 {
            return Err(CapeError::Domain(format!(
                "Fisher information is unbounded at pi = {pi}: cell {:?} has zero probability",
                Cell::ALL[i]
            )));
        }
        info += slope * slope / t;
    }
    Ok(info)
}

/// Marginal MLE from `R11` and `R01` alone.
pub fn marginal_mle(
    r11: u64,
    r01: u64,
    n: u64,
    ctx: &OfficialContext,
    rates: &ErrorRates,
) -> Result<PrevalenceEstimate> {
    rates.check()?;
    if n == 0 {
        return Err(CapeError::InvalidCounts("sample size must be positive".into()));
    }
    if r11 + r01 > n {
        return Err(CapeError::InvalidCounts(format!("r11 + r01 = {} exceeds n = {n}", r11 + r01)));
    }
    if rates.alpha0 > ctx.pi0 {
        return Err(CapeError::Assumption(format!(
            "official procedure must be informative: alpha0 = {} exceeds pi0 = {}",
            rates.alpha0, ctx.pi0
        )));
    }
    let ll = AffineLogLikelihood::marginal(r11, r01, n, ctx, rates);
    let (point, at_boundary) = ll.maximize(ctx)?;
    let info = if at_boundary { None } else { marginal_information_of(&ll, point, n, ctx) };
    Ok(mle_estimate(EstimatorKind::MarginalMle, point, at_boundary, n, info))
}

/// Observed per-observation information of the marginal likelihood at `pi`,
/// by a central second difference with step `1e-5 * max(1, pi)`.
pub fn marginal_information(
    pi: f64,
    r11: u64,
    r01: u64,
    n: u64,
    ctx: &OfficialContext,
    rates: &ErrorRates,
) -> Option<f64> {
    let ll = AffineLogLikelihood::marginal(r11, r01, n, ctx, rates);
    marginal_information_of(&ll, pi, n, ctx)
}

fn marginal_information_of(ll: &AffineLogLikelihood, pi: f64, n: u64, ctx: &OfficialContext) -> Option<f64> {
    let room = (pi - ctx.pi_lower).min(1.0 - pi);
    if room <= 0.0 {
        return None;
    }
    let h = (1e-5 * pi.max(1.0)).min(0.5 * room);
    let up = ll.eval_relative(pi + h, pi);
    let down = ll.eval_relative(pi - h, pi);
    let info = -(up + down) / (h * h * n as f64);
    (info.is_finite() && info > 0.0).then_some(info)
}

/// Moment estimator solving `tau01(pi) = R01 / n`.
pub fn mme(counts: &SurveyCounts, ctx: &OfficialContext, rates: &ErrorRates) -> Result<PrevalenceEstimate> {
    check_inputs(counts, ctx, rates)?;
    let ErrorRates { alpha, beta, alpha0 } = *rates;
    let delta = rates.delta();
    let pi0 = ctx.pi0;
    let share = counts.r01 as f64 / counts.n as f64;
    let raw = (share + pi0 - beta * pi0 - alpha0 * delta - alpha) / (delta * (1.0 - alpha0));
    let point = ctx.clamp(raw);
    Ok(PrevalenceEstimate {
        kind: EstimatorKind::Mme,
        point,
        raw,
        variance: mme_variance(point, counts.n, ctx, rates),
        at_boundary: raw < ctx.pi_lower || raw > 1.0,
        info: None,
    })
}

/// Finite-sample variance of the MME at prevalence `pi`.
pub fn mme_variance(pi: f64, n: u64, ctx: &OfficialContext, rates: &ErrorRates) -> f64 {
    cell_mme_variance(Cell::R01, pi, n, ctx, rates)
}

/// Variance of the moment estimator of one cell, `tau(1 - tau) / (n slope^2)`.
pub fn cell_mme_variance(cell: Cell, pi: f64, n: u64, ctx: &OfficialContext, rates: &ErrorRates) -> f64 {
    let affine = TauAffine::new(ctx.pi0, rates);
    let slope = affine.slope[cell.index()];
    let t = affine.eval(cell, pi).clamp(0.0, 1.0);
    t * (1.0 - t) / (n as f64 * slope * slope)
}

fn cell_moment_raw(cell: Cell, counts: &SurveyCounts, affine: &TauAffine) -> Result<f64> {
    let i = cell.index();
    let slope = affine.slope[i];
    if slope == 0.0 {
        return Err(CapeError::DegenerateCell { cell: cell.number() });
    }
    Ok((counts.get(cell) as f64 / counts.n as f64 - affine.intercept[i]) / slope)
}

/// Moment estimator `(R_l / n - intercept_l) / slope_l` for one cell.
pub fn cell_mme(
    cell: Cell,
    counts: &SurveyCounts,
    ctx: &OfficialContext,
    rates: &ErrorRates,
) -> Result<PrevalenceEstimate> {
    check_inputs(counts, ctx, rates)?;
    let affine = TauAffine::new(ctx.pi0, rates);
    let raw = cell_moment_raw(cell, counts, &affine)?;
    let point = ctx.clamp(raw);
    Ok(PrevalenceEstimate {
        kind: EstimatorKind::CellMme(cell),
        point,
        raw,
        variance: cell_mme_variance(cell, point, counts.n, ctx, rates),
        at_boundary: raw < ctx.pi_lower || raw > 1.0,
        info: None,
    })
}

/// Variance-minimizing weights of the first three cell moment estimators,
/// with cell probabilities evaluated at `pi`.
pub fn gmm_weights(pi: f64, ctx: &OfficialContext, rates: &ErrorRates) -> Result<GmmWeights> {
    rates.check()?;
    let a0 = rates.alpha0;
    let tau = TauAffine::new(ctx.pi0, rates).eval_all(pi);
    let [t11, t10, t01, t00] = tau;
    if t00 <= 0.0 || t01 <= 0.0 {
        return Err(CapeError::Domain(format!("GMM weights undefined at pi = {pi}")));
    }
    let (g1, g2) = if a0 == 0.0 {
        (0.0, 0.0)
    } else {
        if t11 <= 0.0 || t10 <= 0.0 {
            return Err(CapeError::Domain(format!("GMM weights undefined at pi = {pi}")));
        }
        (
            0.5 * a0 * ((1.0 - a0) / t00 + a0 / t11),
            0.5 * a0 * (a0 / t10 - (1.0 - a0) / t00),
        )
    };
    let g3 = 0.5 * (1.0 - a0) * ((1.0 - a0) / t00 + (1.0 - a0) / t01);
    let lambda = 1.0 / (g1 + g2 + g3);
    Ok(GmmWeights { gamma1: lambda * g1, gamma2: lambda * g2, gamma3: lambda * g3, lambda })
}

/// Variance of `sum_l gamma_l * pi_l` (cells `R11, R10, R01`) at prevalence `pi`,
/// from the multinomial covariance of the cell frequencies.
pub fn gmm_variance(weights: &GmmWeights, pi: f64, n: u64, ctx: &OfficialContext, rates: &ErrorRates) -> f64 {
    let affine = TauAffine::new(ctx.pi0, rates);
    let tau = affine.eval_all(pi);
    let gamma = weights.as_array();
    let mut var = 0.0;
    for l in 0..3 {
        if gamma[l] == 0.0 {
            continue;
        }
        for m in 0..3 {
            if gamma[m] == 0.0 {
                continue;
            }
            let cov = if l == m { tau[l] * (1.0 - tau[l]) } else { -tau[l] * tau[m] };
            var += gamma[l] * gamma[m] * cov / (affine.slope[l] * affine.slope[m]);
        }
    }
    (var / n as f64).max(0.0)
}

/// Weighted combination of the cell moment estimators with weights computed
/// at `pilot` (default: the MME, nudged into the open admissible range).
/// With `alpha0 == 0` only the `R01` cell is informative and the result is the MME.
pub fn optimal_gmm(
    counts: &SurveyCounts,
    ctx: &OfficialContext,
    rates: &ErrorRates,
    pilot: Option<f64>,
) -> Result<(PrevalenceEstimate, GmmWeights)> {
    check_inputs(counts, ctx, rates)?;
    let pilot = match pilot {
        Some(p) => {
            if !(p > ctx.pi_lower && p < 1.0) {
                return Err(CapeError::Domain(format!(
                    "pilot {p} must lie strictly inside ({}, 1)",
                    ctx.pi_lower
                )));
            }
            p
        }
        None => {
            let margin = 1e-9 * (1.0 - ctx.pi_lower).max(f64::MIN_POSITIVE);
            mme(counts, ctx, rates)?.point.clamp(ctx.pi_lower + margin, 1.0 - margin)
        }
    };
    let weights = gmm_weights(pilot, ctx, rates)?;
    let affine = TauAffine::new(ctx.pi0, rates);
    let mut raw = 0.0;
    for (gamma, cell) in weights.as_array().into_iter().zip([Cell::R11, Cell::R10, Cell::R01]) {
        if gamma != 0.0 {
            raw += gamma * cell_moment_raw(cell, counts, &affine)?;
        }
    }
    let point = ctx.clamp(raw);
    let estimate = PrevalenceEstimate {
        kind: EstimatorKind::OptimalGmm,
        point,
        raw,
        variance: gmm_variance(&weights, point, counts.n, ctx, rates),
        at_boundary: raw < ctx.pi_lower || raw > 1.0,
        info: None,
    };
    Ok((estimate, weights))
}

/// Runs the estimator `kind` on `counts`. The marginal MLE only looks at
/// `R11`, `R01` and `n`; the GMM uses its default pilot.
pub fn estimate(
    kind: EstimatorKind,
    counts: &SurveyCounts,
    ctx: &OfficialContext,
    rates: &ErrorRates,
) -> Result<PrevalenceEstimate> {
    match kind {
        EstimatorKind::SurveyMle => survey_mle(counts, rates),
        EstimatorKind::ConditionalMle => conditional_mle(counts, ctx, rates),
        EstimatorKind::MarginalMle => marginal_mle(counts.r11, counts.r01, counts.n, ctx, rates),
        EstimatorKind::Mme => mme(counts, ctx, rates),
        EstimatorKind::CellMme(cell) => cell_mme(cell, counts, ctx, rates),
        EstimatorKind::OptimalGmm => optimal_gmm(counts, ctx, rates, None).map(|(e, _)| e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn austria(rates: ErrorRates) -> (SurveyCounts, OfficialContext, ErrorRates) {
        let counts = SurveyCounts::from_partial(2287, 71, 32).unwrap();
        let ctx = OfficialContext::new(0.013105, &rates).unwrap();
        (counts, ctx, rates)
    }

    const MISCLASSIFIED: ErrorRates = ErrorRates { alpha: 0.01, beta: 0.10, alpha0: 0.0 };

    #[test]
    fn survey_mle_values() {
        let (c, _, r) = austria(ErrorRates::exact());
        assert_abs_diff_eq!(survey_mle(&c, &r).unwrap().point, 71.0 / 2287.0, epsilon = 1e-15);
        let (c, _, r) = austria(MISCLASSIFIED);
        assert_abs_diff_eq!(survey_mle(&c, &r).unwrap().point, 0.023_646_109_175_948, epsilon = 1e-12);

        let empty = SurveyCounts::new(0, 0, 0, 100).unwrap();
        let e = survey_mle(&empty, &ErrorRates::exact()).unwrap();
        assert_eq!(e.point, 0.0);
        assert!(!e.at_boundary);
        let e = survey_mle(&empty, &MISCLASSIFIED).unwrap();
        assert!(e.raw < 0.0 && e.point == 0.0 && e.at_boundary);
    }

    #[test]
    fn conditional_mle_austria() {
        let (c, x, r) = austria(ErrorRates::exact());
        let e = conditional_mle(&c, &x, &r).unwrap();
        assert_abs_diff_eq!(e.point, 0.013105 * 2216.0 / 2255.0 + 39.0 / 2255.0, epsilon = 1e-14);
        assert!(!e.at_boundary);

        let (c, x, r) = austria(MISCLASSIFIED);
        let e = conditional_mle(&c, &x, &r).unwrap();
        assert_abs_diff_eq!(e.point, 0.021_194_101_746_431, epsilon = 1e-12);
    }

    #[test]
    fn conditional_mle_without_official_cases_is_the_sample_proportion() {
        let rates = ErrorRates::exact();
        let ctx = OfficialContext::new(0.0, &rates).unwrap();
        let counts = SurveyCounts::from_cells(500, 0, 0, 37).unwrap();
        assert_abs_diff_eq!(conditional_mle(&counts, &ctx, &rates).unwrap().point, 37.0 / 500.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            conditional_mle_numeric(&counts, &ctx, &rates).unwrap().point,
            37.0 / 500.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn numeric_matches_closed_form_on_austria() {
        for rates in [ErrorRates::exact(), MISCLASSIFIED] {
            let (c, x, r) = austria(rates);
            let closed = conditional_mle_closed_form(&c, &x, &r).unwrap();
            let numeric = conditional_mle_numeric(&c, &x, &r).unwrap();
            assert!((closed - numeric.point).abs() < 1e-8, "{closed} vs {}", numeric.point);
        }
    }

    #[test]
    fn conditional_mle_boundary_is_honoured() {
        // alpha > 0 with no new cases found: closed form falls below pi_lower
        let rates = ErrorRates { alpha: 0.05, beta: 0.0, alpha0: 0.0 };
        let ctx = OfficialContext::new(0.1, &rates).unwrap();
        let counts = SurveyCounts::from_cells(200, 20, 0, 0).unwrap();
        assert!(conditional_mle_closed_form(&counts, &ctx, &rates).unwrap() < ctx.pi_lower);
        let e = conditional_mle(&counts, &ctx, &rates).unwrap();
        assert_eq!(e.point, ctx.pi_lower);
        assert!(e.at_boundary);
        let n = conditional_mle_numeric(&counts, &ctx, &rates).unwrap();
        assert_eq!(n.point, ctx.pi_lower);
        assert!(n.at_boundary);
    }

    #[test]
    fn impossible_cell_is_degenerate() {
        let rates = ErrorRates::exact();
        let ctx = OfficialContext::new(0.05, &rates).unwrap();
        let counts = SurveyCounts::new(3, 2, 10, 85).unwrap();
        for pi in [0.05, 0.2, 0.9, 1.0] {
            assert_eq!(log_likelihood(pi, &counts, &ctx, &rates), f64::NEG_INFINITY);
        }
        assert!(matches!(
            conditional_mle(&counts, &ctx, &rates),
            Err(CapeError::DegenerateLikelihood(_))
        ));
        assert!(matches!(
            conditional_mle_numeric(&counts, &ctx, &rates),
            Err(CapeError::DegenerateLikelihood(_))
        ));
    }

    #[test]
    fn log_likelihood_of_a_certain_cell_is_zero() {
        let rates = ErrorRates::exact();
        let ctx = OfficialContext::new(0.0, &rates).unwrap();
        let counts = SurveyCounts::new(0, 0, 0, 40).unwrap();
        assert_eq!(log_likelihood(0.0, &counts, &ctx, &rates), 0.0);
    }

    #[test]
    fn fisher_information_no_error_reduction() {
        let rates = ErrorRates::exact();
        let ctx = OfficialContext::new(0.1, &rates).unwrap();
        let info = fisher_information(0.2, &ctx, &rates).unwrap();
        assert_abs_diff_eq!(info, 11.25, epsilon = 1e-12);
        assert_abs_diff_eq!(1.0 / info, 0.08 / 0.9, epsilon = 1e-15);

        let ctx0 = OfficialContext::new(0.0, &rates).unwrap();
        assert_abs_diff_eq!(1.0 / fisher_information(0.3, &ctx0, &rates).unwrap(), 0.21, epsilon = 1e-15);
        assert!(fisher_information(0.1, &ctx, &rates).is_err());
    }

    #[test]
    fn marginal_mle_reduces_to_binomial() {
        let rates = ErrorRates::exact();
        let ctx = OfficialContext::new(0.0, &rates).unwrap();
        let e = marginal_mle(0, 37, 500, &ctx, &rates).unwrap();
        assert_abs_diff_eq!(e.point, 37.0 / 500.0, epsilon = 1e-9);
        assert!(!e.at_boundary);
        // observed information of a binomial at its MLE is 1 / (p (1 - p))
        let p: f64 = 37.0 / 500.0;
        assert_abs_diff_eq!(e.info.unwrap(), 1.0 / (p * (1.0 - p)), epsilon = 1e-3);
    }

    #[test]
    fn marginal_mle_close_to_conditional_on_austria() {
        let (c, x, r) = austria(ErrorRates::exact());
        let m = marginal_mle(c.r11, c.r01, c.n, &x, &r).unwrap();
        let cm = conditional_mle(&c, &x, &r).unwrap();
        assert!((m.point - cm.point).abs() < 5e-3);
    }

    #[test]
    fn marginal_mle_clamps_at_lower_bound() {
        // alpha = 5%: zero new cases pushes the stationary point below pi_lower
        let rates = ErrorRates { alpha: 0.05, beta: 0.0, alpha0: 0.0 };
        let ctx = OfficialContext::new(0.1, &rates).unwrap();
        let e = marginal_mle(20, 0, 200, &ctx, &rates).unwrap();
        assert_eq!(e.point, ctx.pi_lower);
        assert!(e.at_boundary);
        assert!(e.info.is_none());
    }

    #[test]
    fn mme_values() {
        let (c, x, r) = austria(ErrorRates::exact());
        assert_abs_diff_eq!(mme(&c, &x, &r).unwrap().point, 0.013105 + 39.0 / 2287.0, epsilon = 1e-15);
        let (c, x, r) = austria(MISCLASSIFIED);
        assert_abs_diff_eq!(
            mme(&c, &x, &r).unwrap().point,
            (39.0 / 2287.0 + 0.013105 * 0.9 - 0.01) / 0.89,
            epsilon = 1e-15
        );
        let none_new = SurveyCounts::from_cells(100, 5, 0, 0).unwrap();
        let rates = ErrorRates::exact();
        let ctx = OfficialContext::new(0.05, &rates).unwrap();
        assert_eq!(mme(&none_new, &ctx, &rates).unwrap().point, 0.05);
    }

    #[test]
    fn cell_mme_cases() {
        let (c, x, r) = austria(MISCLASSIFIED);
        assert_eq!(cell_mme(Cell::R01, &c, &x, &r).unwrap().raw, mme(&c, &x, &r).unwrap().raw);
        assert_eq!(cell_mme(Cell::R11, &c, &x, &r), Err(CapeError::DegenerateCell { cell: 1 }));
        assert_eq!(cell_mme(Cell::R10, &c, &x, &r), Err(CapeError::DegenerateCell { cell: 2 }));

        // R00 / n set to tau00(0.05): inverting the affine map returns 0.05
        let affine = TauAffine::new(0.013105, &r);
        let n = 10_000_000u64;
        let r00 = (affine.eval(Cell::R00, 0.05) * n as f64).round() as u64;
        let counts = SurveyCounts::from_cells(n, 0, 0, n - r00).unwrap();
        assert_abs_diff_eq!(cell_mme(Cell::R00, &counts, &x, &r).unwrap().raw, 0.05, epsilon = 1e-6);
    }

    #[test]
    fn gmm_falls_back_to_mme_without_official_false_positives() {
        let (c, x, r) = austria(MISCLASSIFIED);
        let (e, w) = optimal_gmm(&c, &x, &r, None).unwrap();
        assert_eq!((w.gamma1, w.gamma2, w.gamma3), (0.0, 0.0, 1.0));
        assert_abs_diff_eq!(e.raw, mme(&c, &x, &r).unwrap().raw, epsilon = 1e-15);
    }

    #[test]
    fn gmm_weights_sum_to_one_and_beat_mme() {
        let rates = ErrorRates { alpha: 0.01, beta: 0.10, alpha0: 0.001 };
        let ctx = OfficialContext::new(0.013105, &rates).unwrap();
        let w = gmm_weights(0.05, &ctx, &rates).unwrap();
        assert_abs_diff_eq!(w.sum(), 1.0, epsilon = 1e-12);
        assert!(gmm_variance(&w, 0.05, 2000, &ctx, &rates) <= mme_variance(0.05, 2000, &ctx, &rates));
    }

    #[test]
    fn kind_labels_round_trip() {
        for k in [
            EstimatorKind::SurveyMle,
            EstimatorKind::ConditionalMle,
            EstimatorKind::MarginalMle,
            EstimatorKind::Mme,
            EstimatorKind::CellMme(Cell::R00),
            EstimatorKind::OptimalGmm,
        ] {
            assert_eq!(k.label().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("cell-mme-7".parse::<EstimatorKind>().is_err());
        assert!("nope".parse::<EstimatorKind>().is_err());
    }
}
