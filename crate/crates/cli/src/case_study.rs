//! The Austrian November 2020 survey and its estimation table.

use std::io::Write;

use serde::Serialize;

use cape_core::estimators::{conditional_mle, mme, survey_mle, PrevalenceEstimate};
use cape_core::intervals::{asymptotic_interval, cp_mme_interval, cp_survey_interval, ConfidenceInterval};
use cape_core::model::{ErrorRates, OfficialContext, SurveyCounts};

use crate::args::{CaseStudyArgs, Format};
use crate::error::{CliError, Result};
use crate::format::{cell, percent, write_csv_preamble};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseStudyDataset {
    pub label: &'static str,
    pub n: u64,
    pub r_star1: u64,
    pub r11: u64,
    /// Official proportion as used for the published table (1.3105%).
    pub pi0: f64,
    /// Declared cases and population behind `pi0`.
    pub declared: u64,
    pub population: u64,
}

pub const AUSTRIA: CaseStudyDataset = CaseStudyDataset {
    label: "Austria November 2020",
    n: 2287,
    r_star1: 71,
    r11: 32,
    pi0: 0.013105,
    declared: 93_914,
    population: 7_166_167,
};

impl CaseStudyDataset {
    pub fn counts(&self) -> SurveyCounts {
        SurveyCounts::from_partial(self.n, self.r_star1, self.r11).expect("embedded counts are consistent")
    }
}

/// The two error settings of the table.
pub const CASE_STUDY_RATES: [(&str, ErrorRates); 2] = [
    ("no misclassification", ErrorRates { alpha: 0.0, beta: 0.0, alpha0: 0.0 }),
    ("alpha = 1%, beta = 10%, alpha0 = 0", ErrorRates { alpha: 0.01, beta: 0.10, alpha0: 0.0 }),
];

pub const LEVELS: [f64; 3] = [0.80, 0.95, 0.99];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseStudyRow {
    /// CMLE-as, MME-CP, SMLE-CP, or SMLE-CP(k=..) for a scaled survey.
    pub label: String,
    pub setting: String,
    pub rates: ErrorRates,
    pub n: u64,
    pub r_star1: u64,
    pub estimate: PrevalenceEstimate,
    /// One interval per entry of [`LEVELS`].
    pub intervals: Vec<ConfidenceInterval>,
}

impl CaseStudyRow {
    pub fn interval(&self, level: f64) -> Option<&ConfidenceInterval> {
        self.intervals.iter().find(|c| (c.level - level).abs() < 1e-12)
    }
}

/// Survey of `ceil(k n)` people with `ceil(k R*1)` positives.
pub fn scaled_counts(data: &CaseStudyDataset, k: f64) -> Result<SurveyCounts> {
    if !(k >= 1.0 && k.is_finite()) {
        return Err(CliError::Input(format!("scaling factor k = {k} must be at least 1")));
    }
    let n = (k * data.n as f64).ceil() as u64;
    let r_star1 = (k * data.r_star1 as f64).ceil() as u64;
    let r11 = (k * data.r11 as f64).ceil() as u64;
    Ok(SurveyCounts::from_partial(n, r_star1, r11)?)
}

/// All rows of the table, setting by setting.
pub fn case_study_rows(data: &CaseStudyDataset, ks: &[f64], clamp: bool) -> Result<Vec<CaseStudyRow>> {
    let counts = data.counts();
    let mut rows = Vec::new();
    for (setting, rates) in CASE_STUDY_RATES {
        let ctx = OfficialContext::new(data.pi0, &rates)?;
        let row = |label: String, counts: &SurveyCounts, estimate: PrevalenceEstimate, intervals| CaseStudyRow {
            label,
            setting: setting.to_string(),
            rates,
            n: counts.n,
            r_star1: counts.r_star1(),
            estimate,
            intervals,
        };

        let cmle = conditional_mle(&counts, &ctx, &rates)?;
        let cis = LEVELS
            .iter()
            .map(|&l| {
                let ci = asymptotic_interval(&cmle, counts.n, l)?;
                if clamp {
                    ci.clamp_to(ctx.pi_lower)
                } else {
                    Ok(ci)
                }
            })
            .collect::<cape_core::Result<Vec<_>>>()?;
        rows.push(row("CMLE-as".into(), &counts, cmle, cis));

        let m = mme(&counts, &ctx, &rates)?;
        let cis = LEVELS
            .iter()
            .map(|&l| cp_mme_interval(&counts, &ctx, &rates, l))
            .collect::<cape_core::Result<Vec<_>>>()?;
        rows.push(row("MME-CP".into(), &counts, m, cis));

        let mut surveys = vec![("SMLE-CP".to_string(), counts)];
        for &k in ks {
            surveys.push((format!("SMLE-CP(k={k})"), scaled_counts(data, k)?));
        }
        for (label, c) in surveys {
            let s = survey_mle(&c, &rates)?;
            let cis = LEVELS
                .iter()
                .map(|&l| cp_survey_interval(&c, &rates, l))
                .collect::<cape_core::Result<Vec<_>>>()?;
            rows.push(row(label, &c, s, cis));
        }
    }
    Ok(rows)
}

pub fn run<W: Write + ?Sized>(args: &CaseStudyArgs, out: &mut W) -> Result<()> {
    let data = AUSTRIA;
    let rows = case_study_rows(&data, &args.k, args.clamp)?;
    match args.format {
        Format::Json => {
            let report = serde_json::json!({
                "dataset": data.label,
                "n": data.n,
                "r_star1": data.r_star1,
                "r11": data.r11,
                "pi0": data.pi0,
                "rows": rows,
            });
            serde_json::to_writer_pretty(&mut *out, &report)?;
            writeln!(out)?;
        }
        Format::Csv => {
            write_csv_preamble(out, &[format!("{}; pi0 = {}", data.label, data.pi0)])?;
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record([
                "setting", "row", "n", "r_star1", "estimate", "level", "ci_lower", "ci_upper",
            ])?;
            for r in &rows {
                for ci in &r.intervals {
                    w.write_record([
                        r.setting.clone(),
                        r.label.clone(),
                        r.n.to_string(),
                        r.r_star1.to_string(),
                        cell(Some(r.estimate.point)),
                        ci.level.to_string(),
                        cell(Some(ci.lower)),
                        cell(Some(ci.upper)),
                    ])?;
                }
            }
            w.flush()?;
        }
        Format::Text => {
            writeln!(
                out,
                "{}: n = {}, R*1 = {}, R11 = {}, pi0 = {}%",
                data.label,
                data.n,
                data.r_star1,
                data.r11,
                percent(data.pi0)
            )?;
            for (setting, _) in CASE_STUDY_RATES {
                writeln!(out, "\n{setting}")?;
                writeln!(
                    out,
                    "{:<16} {:>9} {:>18} {:>18} {:>18}",
                    "", "est. (%)", "80% CI (%)", "95% CI (%)", "99% CI (%)"
                )?;
                for r in rows.iter().filter(|r| r.setting == setting) {
                    let cis: Vec<String> = r
                        .intervals
                        .iter()
                        .map(|c| format!("({} - {})", percent(c.lower), percent(c.upper)))
                        .collect();
                    writeln!(
                        out,
                        "{:<16} {:>9} {:>18} {:>18} {:>18}",
                        r.label,
                        percent(r.estimate.point),
                        cis[0],
                        cis[1],
                        cis[2]
                    )?;
                }
            }
        }
    }
    Ok(())
}
