//! Curve CSV files.
//!
//! Header: `abscissa,abscissa_unit,value,ci_low,ci_high,trials,label`.
//! Probabilities carry 10 significant digits, dB abscissae 4 decimals, and
//! analytic curves leave the interval and trial fields empty.

use std::fmt::Write as _;

use crate::analytic::{AbscissaUnit, AnalyticCurve};
use crate::error::{config_error, Result};
use crate::montecarlo::EstimatedCurve;

pub const CSV_HEADER: &str = "abscissa,abscissa_unit,value,ci_low,ci_high,trials,label";

/// Anything with a grid and values that can be compared or written.
pub trait Curve {
    fn label(&self) -> &str;
    fn unit(&self) -> AbscissaUnit;
    fn grid(&self) -> &[f64];
    fn values(&self) -> &[f64];
}

impl Curve for AnalyticCurve {
    fn label(&self) -> &str {
        &self.label
    }
    fn unit(&self) -> AbscissaUnit {
        self.unit
    }
    fn grid(&self) -> &[f64] {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Curve for EstimatedCurve {
    fn label(&self) -> &str {
        &self.label
    }
    fn unit(&self) -> AbscissaUnit {
        self.unit
    }
    fn grid(&self) -> &[f64] {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.estimates
    }
}

/// A curve read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvCurve {
    pub label: String,
    pub unit: AbscissaUnit,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl Curve for CsvCurve {
    fn label(&self) -> &str {
        &self.label
    }
    fn unit(&self) -> AbscissaUnit {
        self.unit
    }
    fn grid(&self) -> &[f64] {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Ten significant digits in scientific notation.
pub fn fmt_prob(v: f64) -> String {
    format!("{v:.9e}")
}

fn fmt_abscissa(v: f64, unit: AbscissaUnit) -> String {
    match unit {
        AbscissaUnit::SnrDb => format!("{v:.4}"),
        AbscissaUnit::NormalizedSnr => fmt_prob(v),
    }
}

pub fn analytic_csv(curve: &AnalyticCurve) -> String {
    let mut s = String::with_capacity(64 * (curve.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for (&x, &v) in curve.grid.iter().zip(&curve.values) {
        let _ = writeln!(
            s,
            "{},{},{},,,,{}",
            fmt_abscissa(x, curve.unit),
            curve.unit.name(),
            fmt_prob(v),
            curve.label
        );
    }
    s
}

pub fn estimated_csv(curve: &EstimatedCurve) -> String {
    let mut s = String::with_capacity(96 * (curve.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for i in 0..curve.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            fmt_abscissa(curve.grid[i], curve.unit),
            curve.unit.name(),
            fmt_prob(curve.estimates[i]),
            fmt_prob(curve.ci_low[i]),
            fmt_prob(curve.ci_high[i]),
            curve.trials[i],
            curve.label
        );
    }
    s
}

/// Parse a curve file written by this module. The label is taken from the
/// first row.
pub fn parse_curve_csv(text: &str) -> Result<CsvCurve> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(config_error(
                "csv",
                format!("expected header `{CSV_HEADER}`"),
            ))
        }
    }
    let mut curve = CsvCurve {
        label: String::new(),
        unit: AbscissaUnit::NormalizedSnr,
        grid: Vec::new(),
        values: Vec::new(),
    };
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(config_error(format!("csv:{row}"), "expected 7 fields"));
        }
        let num = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|_| config_error(format!("csv:{row}"), format!("bad {what} `{s}`")))
        };
        let unit = match f[1] {
            "dB" => AbscissaUnit::SnrDb,
            "x" => AbscissaUnit::NormalizedSnr,
            other => {
                return Err(config_error(
                    format!("csv:{row}"),
                    format!("unknown unit `{other}`"),
                ))
            }
        };
        if curve.grid.is_empty() {
            curve.unit = unit;
            curve.label = f[6].to_string();
        } else if unit != curve.unit {
            return Err(config_error(format!("csv:{row}"), "mixed abscissa units"));
        }
        curve.grid.push(num(f[0], "abscissa")?);
        curve.values.push(num(f[2], "value")?);
    }
    if curve.grid.is_empty() {
        return Err(config_error("csv", "no data rows"));
    }
    Ok(curve)
}
