//! Library side of the `cape` command-line tool. Each subcommand writes to
//! the supplied writers so it can be driven in-process.

pub mod args;
pub mod case_study;
pub mod error;
pub mod format;
pub mod request;
pub mod sensitivity;
pub mod simulate;

use std::io::Write;

use args::{Cli, Command, EstimateArgs, Format};
use error::Result;
use format::{cell, percent, write_csv_preamble};
use request::{EstimateReport, EstimateRequest};

pub use error::CliError;

/// Runs a parsed command line.
pub fn run<W: Write + ?Sized>(cli: &Cli, out: &mut W, err: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Estimate(a) => estimate(a, out, err),
        Command::Simulate(a) => simulate::run(a, out),
        Command::Sensitivity(a) => sensitivity::run(a, out, err),
        Command::CaseStudy(a) => case_study::run(a, out),
    }
}

fn estimate<W: Write + ?Sized>(args: &EstimateArgs, out: &mut W, err: &mut dyn Write) -> Result<()> {
    let request = match &args.request {
        Some(path) => EstimateRequest::from_json(&std::fs::read_to_string(path)?)?,
        None => EstimateRequest::from_args(args)?,
    };
    let report = request.evaluate()?;
    for w in &report.warnings {
        writeln!(err, "warning: {w}")?;
    }
    write_report(&report, args.format, out)
}

pub fn write_report<W: Write + ?Sized>(report: &EstimateReport, format: Format, out: &mut W) -> Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, report)?;
            writeln!(out)?;
        }
        Format::Csv => {
            write_csv_preamble(out, &[])?;
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(["kind", "name", "point", "variance", "level", "lower", "upper"])?;
            for e in &report.estimates {
                w.write_record([
                    "estimate".to_string(),
                    e.kind.label(),
                    cell(Some(e.point)),
                    cell(Some(e.variance).filter(|v| v.is_finite())),
                    String::new(),
                    String::new(),
                    String::new(),
                ])?;
            }
            for c in &report.intervals {
                w.write_record([
                    "interval".to_string(),
                    c.method.label().to_string(),
                    String::new(),
                    String::new(),
                    c.level.to_string(),
                    cell(Some(c.lower)),
                    cell(Some(c.upper)),
                ])?;
            }
            w.flush()?;
        }
        Format::Text => {
            let c = &report.counts;
            let r = &report.request.rates;
            writeln!(
                out,
                "n = {}, R11 = {}, R10 = {}, R01 = {}, R00 = {}",
                c.n, c.r11, c.r10, c.r01, c.r00
            )?;
            writeln!(
                out,
                "pi0 = {}%, alpha = {}%, beta = {}%, alpha0 = {}% (prevalence >= {}%)",
                percent(report.request.pi0),
                percent(r.alpha),
                percent(r.beta),
                percent(r.alpha0),
                percent(report.pi_lower)
            )?;
            writeln!(out, "\n{:<12} {:>10} {:>10}", "estimator", "est. (%)", "s.e. (%)")?;
            for e in &report.estimates {
                let se = if e.variance.is_finite() { percent(e.variance.sqrt()) } else { "-".into() };
                let flag = if e.at_boundary { "  (boundary)" } else { "" };
                writeln!(out, "{:<12} {:>10} {:>10}{flag}", e.kind.label(), percent(e.point), se)?;
            }
            if !report.intervals.is_empty() {
                writeln!(out, "\n{:<16} {:>6} {:>20}", "interval", "level", "CI (%)")?;
                for ci in &report.intervals {
                    writeln!(
                        out,
                        "{:<16} {:>5}% {:>20}",
                        ci.method.label(),
                        significant_level(ci.level),
                        format!("({} - {})", percent(ci.lower), percent(ci.upper))
                    )?;
                }
            }
        }
    }
    Ok(())
}

fn significant_level(level: f64) -> String {
    let s = format!("{:.2}", 100.0 * level);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
