//! The probability model linking the survey test result and the official
//! status of a participant to the unknown prevalence.
//!
//! Every participant falls in one of four cells, indexed by (survey test
//! result, official status): `R11`, `R10`, `R01`, `R00`. Their success
//! probabilities are affine in the prevalence `pi`; [`TauAffine`] holds the
//! slopes and intercepts and [`tau_probabilities`] evaluates them.

use serde::{Deserialize, Serialize};

use crate::error::{CapeError, Result};

/// Negative cell probabilities down to this magnitude are rounding noise.
pub const TAU_CLAMP_TOLERANCE: f64 = 1e-15;

/// Known misclassification rates of the survey test and the official procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    /// Survey false-positive rate (1 - specificity).
    pub alpha: f64,
    /// Survey false-negative rate (1 - sensitivity).
    pub beta: f64,
    /// Probability that a negative individual was declared positive officially.
    pub alpha0: f64,
}

impl ErrorRates {
    pub fn new(alpha: f64, beta: f64, alpha0: f64) -> Result<Self> {
        let rates = ErrorRates { alpha, beta, alpha0 };
        rates.check()?;
        Ok(rates)
    }

    /// No misclassification anywhere.
    pub const fn exact() -> Self {
        ErrorRates { alpha: 0.0, beta: 0.0, alpha0: 0.0 }
    }

    /// `1 - (alpha + beta)`, the informativeness of the survey test.
    pub fn delta(&self) -> f64 {
        1.0 - (self.alpha + self.beta)
    }

    pub fn is_exact(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0 && self.alpha0 == 0.0
    }

    pub(crate) fn check(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("alpha0", self.alpha0)] {
            if !(0.0..1.0).contains(&v) {
                return Err(CapeError::Domain(format!("{name} = {v} must lie in [0, 1)")));
            }
        }
        if self.delta() <= 0.0 {
            return Err(CapeError::Assumption(format!(
                "survey test must be informative: alpha + beta = {} must be < 1",
                self.alpha + self.beta
            )));
        }
        Ok(())
    }
}

impl Default for ErrorRates {
    fn default() -> Self {
        Self::exact()
    }
}

/// Officially declared proportion and the admissible prevalence range it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfficialContext {
    pub pi0: f64,
    /// Smallest prevalence compatible with `pi0` and `alpha0`.
    pub pi_lower: f64,
}

impl OfficialContext {
    pub fn new(pi0: f64, rates: &ErrorRates) -> Result<Self> {
        rates.check()?;
        let pi_lower = prevalence_lower_bound(pi0, rates.alpha0)?;
        Ok(OfficialContext { pi0, pi_lower })
    }

    /// Whether `pi` lies in the admissible range `[pi_lower, 1]`.
    pub fn admits(&self, pi: f64) -> bool {
        pi >= self.pi_lower && pi <= 1.0
    }

    pub fn clamp(&self, pi: f64) -> f64 {
        pi.clamp(self.pi_lower, 1.0)
    }
}

/// The four cells of the survey-by-official cross tabulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    /// Positive in the survey, declared positive officially.
    R11,
    /// Negative in the survey, declared positive officially.
    R10,
    /// Positive in the survey, not declared officially.
    R01,
    /// Negative in the survey, not declared officially.
    R00,
}

impl Cell {
    pub const ALL: [Cell; 4] = [Cell::R11, Cell::R10, Cell::R01, Cell::R00];

    /// One-based cell number, in the order `R11, R10, R01, R00`.
    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn index(self) -> usize {
        match self {
            Cell::R11 => 0,
            Cell::R10 => 1,
            Cell::R01 => 2,
            Cell::R00 => 3,
        }
    }

    pub fn from_number(l: usize) -> Result<Cell> {
        match l {
            1 => Ok(Cell::R11),
            2 => Ok(Cell::R10),
            3 => Ok(Cell::R01),
            4 => Ok(Cell::R00),
            _ => Err(CapeError::Domain(format!("cell index {l} must be in 1..=4"))),
        }
    }
}

/// Cell success probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauVector {
    pub tau11: f64,
    pub tau10: f64,
    pub tau01: f64,
    pub tau00: f64,
}

impl TauVector {
    pub fn as_array(&self) -> [f64; 4] {
        [self.tau11, self.tau10, self.tau01, self.tau00]
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.as_array()[cell.index()]
    }

    pub fn sum(&self) -> f64 {
        self.tau11 + self.tau10 + self.tau01 + self.tau00
    }
}

/// Observed survey cross tabulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyCounts {
    pub n: u64,
    pub r11: u64,
    pub r10: u64,
    pub r01: u64,
    pub r00: u64,
}

impl SurveyCounts {
    pub fn new(r11: u64, r10: u64, r01: u64, r00: u64) -> Result<Self> {
        let n = r11 + r10 + r01 + r00;
        if n == 0 {
            return Err(CapeError::InvalidCounts("sample size must be positive".into()));
        }
        Ok(SurveyCounts { n, r11, r10, r01, r00 })
    }

    /// Builds counts from the sample size and the first three cells.
    pub fn from_cells(n: u64, r11: u64, r10: u64, r01: u64) -> Result<Self> {
        let known = r11 + r10 + r01;
        if known > n {
            return Err(CapeError::InvalidCounts(format!(
                "r11 + r10 + r01 = {known} exceeds n = {n}"
            )));
        }
        Self::new(r11, r10, r01, n - known)
    }

    /// Builds counts when only the survey positives and their officially
    /// declared subset are known; `r10` is taken to be zero.
    pub fn from_partial(n: u64, r_star1: u64, r11: u64) -> Result<Self> {
        if r11 > r_star1 {
            return Err(CapeError::InvalidCounts(format!(
                "r11 = {r11} exceeds r_star1 = {r_star1}"
            )));
        }
        if r_star1 > n {
            return Err(CapeError::InvalidCounts(format!("r_star1 = {r_star1} exceeds n = {n}")));
        }
        Self::from_cells(n, r11, 0, r_star1 - r11)
    }

    /// Number of survey positives, `R11 + R01`.
    pub fn r_star1(&self) -> u64 {
        self.r11 + self.r01
    }

    pub fn cells(&self) -> [u64; 4] {
        [self.r11, self.r10, self.r01, self.r00]
    }

    pub fn get(&self, cell: Cell) -> u64 {
        self.cells()[cell.index()]
    }

    pub fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(CapeError::InvalidCounts("sample size must be positive".into()));
        }
        if self.r11 + self.r10 + self.r01 + self.r00 != self.n {
            return Err(CapeError::InvalidCounts(format!(
                "cells sum to {} but n = {}",
                self.r11 + self.r10 + self.r01 + self.r00,
                self.n
            )));
        }
        Ok(())
    }
}

/// Slopes and intercepts of the cell probabilities, `tau_l(pi) = slope_l * pi + intercept_l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauAffine {
    pub slope: [f64; 4],
    pub intercept: [f64; 4],
}

impl TauAffine {
    pub fn new(pi0: f64, rates: &ErrorRates) -> Self {
        let ErrorRates { alpha, beta, alpha0 } = *rates;
        let delta = rates.delta();
        let excess = pi0 - alpha0;
        TauAffine {
            slope: [
                delta * alpha0,
                -delta * alpha0,
                delta * (1.0 - alpha0),
                -delta * (1.0 - alpha0),
            ],
            intercept: [
                excess * (1.0 - beta) + alpha * alpha0,
                excess * beta + (1.0 - alpha) * alpha0,
                -excess * (1.0 - beta) + alpha * (1.0 - alpha0),
                -excess * beta + (1.0 - alpha) * (1.0 - alpha0),
            ],
        }
    }

    /// Unchecked evaluation of one cell.
    #[inline]
    pub fn eval(&self, cell: Cell, pi: f64) -> f64 {
        let i = cell.index();
        self.slope[i] * pi + self.intercept[i]
    }

    /// Unchecked evaluation of all four cells, with rounding noise clamped to zero.
    #[inline]
    pub fn eval_all(&self, pi: f64) -> [f64; 4] {
        std::array::from_fn(|i| {
            let v = self.slope[i] * pi + self.intercept[i];
            if (-TAU_CLAMP_TOLERANCE..0.0).contains(&v) {
                0.0
            } else {
                v
            }
        })
    }
}

/// Cell success probabilities at prevalence `pi`.
pub fn tau_probabilities(pi: f64, ctx: &OfficialContext, rates: &ErrorRates) -> Result<TauVector> {
    rates.check()?;
    if rates.alpha0 > ctx.pi0 {
        return Err(CapeError::Assumption(format!(
            "official procedure must be informative: alpha0 = {} exceeds pi0 = {}",
            rates.alpha0, ctx.pi0
        )));
    }
    if !(pi >= ctx.pi_lower && pi <= 1.0) {
        return Err(CapeError::Domain(format!(
            "prevalence {pi} outside admissible range [{}, 1]",
            ctx.pi_lower
        )));
    }
    let affine = TauAffine::new(ctx.pi0, rates);
    let mut out = [0.0; 4];
    for (slot, cell) in out.iter_mut().zip(Cell::ALL) {
        let v = affine.eval(cell, pi);
        *slot = if v >= 0.0 {
            v.min(1.0)
        } else if v >= -TAU_CLAMP_TOLERANCE {
            0.0
        } else {
            return Err(CapeError::Domain(format!(
                "cell {cell:?} probability {v} is negative at pi = {pi}"
            )));
        };
    }
    Ok(TauVector { tau11: out[0], tau10: out[1], tau01: out[2], tau00: out[3] })
}

/// `(pi0 - alpha0) / (1 - alpha0)`, the smallest admissible prevalence.
pub fn prevalence_lower_bound(pi0: f64, alpha0: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi0) {
        return Err(CapeError::Domain(format!("pi0 = {pi0} must lie in [0, 1]")));
    }
    if !(0.0..1.0).contains(&alpha0) {
        return Err(CapeError::Domain(format!("alpha0 = {alpha0} must lie in [0, 1)")));
    }
    if alpha0 > pi0 {
        return Err(CapeError::Assumption(format!(
            "official procedure must be informative: alpha0 = {alpha0} exceeds pi0 = {pi0}"
        )));
    }
    Ok(((pi0 - alpha0) / (1.0 - alpha0)).clamp(0.0, 1.0))
}

/// False-negative rate of the official procedure implied by a prevalence `pi`.
pub fn implied_official_fn_rate(pi: f64, pi0: f64, alpha0: f64) -> Result<f64> {
    let pi_lower = prevalence_lower_bound(pi0, alpha0)?;
    if !(pi > 0.0 && pi <= 1.0) {
        return Err(CapeError::Domain(format!("prevalence {pi} must lie in (0, 1]")));
    }
    if pi < pi_lower {
        return Err(CapeError::Domain(format!(
            "prevalence {pi} below the admissible lower bound {pi_lower}"
        )));
    }
    if pi == pi_lower {
        return Ok(0.0);
    }
    let beta0 = 1.0 - (pi0 - alpha0 * (1.0 - pi)) / pi;
    const SNAP: f64 = 1e-12;
    if !(-SNAP..=1.0 + SNAP).contains(&beta0) {
        return Err(CapeError::Domain(format!("implied official FN rate {beta0} outside [0, 1]")));
    }
    Ok(beta0.clamp(0.0, 1.0))
}

/// One line of a [`ValidationReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail status of the model assumptions for a given design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub const RATES_IN_RANGE: &str = "error rates in [0, 1)";
pub const INFORMATIVE_SURVEY_TEST: &str = "informative survey test (alpha + beta < 1)";
pub const INFORMATIVE_OFFICIAL_PROCEDURE: &str = "informative official procedure (alpha0 <= pi0)";
pub const OFFICIAL_PROPORTION_IN_RANGE: &str = "official proportion pi0 in [0, 1]";

/// Checks the standing assumptions. The official procedure's assumption
/// involves the unknown FN rate, so it is checked through `alpha0 <= pi0`.
pub fn validate_design(pi0: f64, rates: &ErrorRates) -> ValidationReport {
    let in_range = |v: f64| (0.0..1.0).contains(&v);
    let rates_ok = in_range(rates.alpha) && in_range(rates.beta) && in_range(rates.alpha0);
    let checks = vec![
        AssumptionCheck {
            name: RATES_IN_RANGE,
            passed: rates_ok,
            detail: format!(
                "alpha = {}, beta = {}, alpha0 = {}",
                rates.alpha, rates.beta, rates.alpha0
            ),
        },
        AssumptionCheck {
            name: OFFICIAL_PROPORTION_IN_RANGE,
            passed: (0.0..=1.0).contains(&pi0),
            detail: format!("pi0 = {pi0}"),
        },
        AssumptionCheck {
            name: INFORMATIVE_SURVEY_TEST,
            passed: rates.alpha + rates.beta < 1.0,
            detail: format!("alpha + beta = {}", rates.alpha + rates.beta),
        },
        AssumptionCheck {
            name: INFORMATIVE_OFFICIAL_PROCEDURE,
            passed: rates.alpha0 <= pi0,
            detail: format!("alpha0 = {} vs pi0 = {}", rates.alpha0, pi0),
        },
    ];
    ValidationReport { checks }
}
