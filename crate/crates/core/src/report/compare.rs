//! Horizontal (SNR) offsets between curves at fixed probability levels.

use serde::Serialize;

use crate::analytic::AbscissaUnit;
use crate::error::{Error, Result};

use super::csv::Curve;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffsetRow {
    pub level: f64,
    /// SNR advantage of `a` over `b` in dB: positive when `a` reaches the
    /// level with less average SNR. `None` when the level lies outside
    /// either curve.
    pub offset_db: Option<f64>,
}

impl OffsetRow {
    pub fn flagged(&self) -> bool {
        self.offset_db.is_none()
    }
}

fn abscissa_db(x: f64, unit: AbscissaUnit) -> f64 {
    match unit {
        AbscissaUnit::SnrDb => x,
        AbscissaUnit::NormalizedSnr => 10.0 * x.log10(),
    }
}

/// Usable points `(abscissa dB, ln value)`; zero values and non-positive
/// linear abscissae are dropped.
fn log_points(c: &dyn Curve) -> Vec<(f64, f64)> {
    c.grid()
        .iter()
        .zip(c.values())
        .filter(|(&x, &v)| v > 0.0 && (c.unit() == AbscissaUnit::SnrDb || x > 0.0))
        .map(|(&x, &v)| (abscissa_db(x, c.unit()), v.ln()))
        .collect()
}

/// Abscissa (dB) at which the curve crosses `ln level`, interpolating
/// linearly in `(dB, ln p)`. The first crossing is used.
fn crossing(points: &[(f64, f64)], ll: f64) -> Option<f64> {
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if (y0 - ll) * (y1 - ll) <= 0.0 {
            if y1 == y0 {
                return Some(x0);
            }
            return Some(x0 + (ll - y0) * (x1 - x0) / (y1 - y0));
        }
    }
    None
}

fn range(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    (lo <= hi).then_some((lo, hi))
}

/// SNR advantage of `a` over `b` at each probability level. Both curves
/// must share an abscissa unit.
pub fn compare_curves(a: &dyn Curve, b: &dyn Curve, levels: &[f64]) -> Result<Vec<OffsetRow>> {
    if a.unit() != b.unit() {
        return Err(crate::error::invalid(
            "unit",
            "curves have different abscissa units",
        ));
    }
    let (pa, pb) = (log_points(a), log_points(b));
    let disjoint = || {
        Error::DisjointRanges(format!(
            "`{}` and `{}` share no probability range",
            a.label(),
            b.label()
        ))
    };
    let (ra, rb) = (
        range(&pa).ok_or_else(disjoint)?,
        range(&pb).ok_or_else(disjoint)?,
    );
    if ra.1 < rb.0 || rb.1 < ra.0 {
        return Err(disjoint());
    }
    Ok(levels
        .iter()
        .map(|&level| {
            let offset_db = if level > 0.0 {
                let ll = level.ln();
                match (crossing(&pa, ll), crossing(&pb, ll)) {
                    (Some(xa), Some(xb)) => Some(match a.unit() {
                        // A larger outage threshold at equal probability
                        // means proportionally less SNR is needed.
                        AbscissaUnit::NormalizedSnr => xa - xb,
                        AbscissaUnit::SnrDb => xb - xa,
                    }),
                    _ => None,
                }
            } else {
                None
            };
            OffsetRow { level, offset_db }
        })
        .collect())
}
