use std::io::Write;

/// First line of every CSV this tool writes.
pub const CSV_VERSION_LINE: &str = "# cape-csv v1";

/// `100 x` with four significant digits, e.g. `0.0301579 -> "3.016"`.
pub fn percent(x: f64) -> String {
    significant(100.0 * x, 4)
}

pub fn significant(x: f64, digits: i32) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return format!("{:.*}", (digits - 1) as usize, 0.0);
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new digit (9.9996 -> 10.000)
    let rounded: f64 = s.parse().unwrap_or(x);
    if rounded != 0.0 && rounded.abs().log10().floor() as i32 > magnitude && decimals > 0 {
        format!("{x:.*}", decimals - 1)
    } else {
        s
    }
}

/// Writes the version line and any metadata comments.
pub fn write_csv_preamble<W: Write + ?Sized>(out: &mut W, comments: &[String]) -> std::io::Result<()> {
    writeln!(out, "{CSV_VERSION_LINE}")?;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    Ok(())
}

/// CSV cell for an optional number; empty when absent or NaN.
pub fn cell(x: Option<f64>) -> String {
    match x {
        Some(v) if !v.is_nan() => v.to_string(),
        _ => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_significant_digits() {
        assert_eq!(percent(0.030157907), "3.016");
        assert_eq!(percent(0.0211769), "2.118");
        assert_eq!(percent(0.12345), "12.35");
        assert_eq!(percent(0.004), "0.4000");
        assert_eq!(percent(0.0), "0.000");
        assert_eq!(percent(0.099996), "10.00");
        assert_eq!(percent(-0.0123), "-1.230");
    }
}
