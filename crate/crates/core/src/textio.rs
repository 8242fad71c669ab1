//! Shared text output helpers.
//!
//! All numeric file output goes through [`fmt_f64`] so that emitted files are
//! byte-identical across reruns: full double precision (17 significant
//! digits), fixed scientific notation, no locale dependence.

use std::fmt::Write as _;

/// Formats an `f64` with 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // normalize -0.0
        return "0.0e0".to_string();
    }
    format!("{:.16e}", x)
}

/// Joins formatted floats with commas.
pub fn csv_row(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{}", fmt_f64(*v));
    }
    s
}

/// Parses a whitespace-separated row of floats.
pub fn parse_floats(line: &str) -> Result<Vec<f64>, std::num::ParseFloatError> {
    line.split_whitespace().map(|t| t.parse::<f64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_roundtrips_exactly() {
        for &x in &[
            0.0,
            1.0,
            -1.0,
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            -2.2250738585072014e-308,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
    }

    #[test]
    fn csv_row_layout() {
        assert_eq!(csv_row(&[0.0, 1.0]), "0.0e0,1.0000000000000000e0");
    }
}
