//! Closed forms, bounds and approximations for outage and error rates.

mod coefficients;
mod error_rates;
mod outage;

use serde::Serialize;

use crate::error::{invalid, Result};

pub use coefficients::{
    build_coefficient_table, truncated_exp_powers, CoefficientTable, DForm, Integrity,
    INTEGRITY_PROBES, INTEGRITY_REL_TOL,
};
pub use error_rates::{
    bler_approx, genie_lower_bound_chain, invert_decreasing, linear_bler_approx,
    linear_penalty_report, mrc_avg_ber, square_system_constant, tber_approx, tber_square_highsnr,
    BlerVariant, GenieLink, GenieQuantity, LinearBler, PenaltyReport, SNR_INVERSION_TOL_DB,
};
pub use outage::{
    b1_asymptote, f1_approx_highsnr, f1_bound, f1_bound_closedform, f1_bound_closedform_strict,
    f1_bound_suboptimal_quadrature, f1_lower_exchangeable, f1_unordered,
    joint_norm_distribution_approx, marginal_pdf_phi, mrc_outage, step_outage_3x3, StepOutage,
};

pub(crate) use outage::f1_bound_suboptimal_quadrature_unclamped;

/// Unit of a curve's abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbscissaUnit {
    /// Normalized SNR `x = gamma / gamma0`, linear.
    NormalizedSnr,
    /// Average SNR `gamma0` in dB.
    SnrDb,
}

impl AbscissaUnit {
    pub fn name(&self) -> &'static str {
        match self {
            AbscissaUnit::NormalizedSnr => "x",
            AbscissaUnit::SnrDb => "dB",
        }
    }
}

/// A closed-form curve tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticCurve {
    pub label: String,
    pub unit: AbscissaUnit,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl AnalyticCurve {
    /// Evaluate `f` on a strictly increasing grid.
    pub fn tabulate(
        label: impl Into<String>,
        unit: AbscissaUnit,
        grid: &[f64],
        f: impl Fn(f64) -> Result<f64>,
    ) -> Result<Self> {
        check_grid(grid)?;
        let values = grid.iter().map(|&g| f(g)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            label: label.into(),
            unit,
            grid: grid.to_vec(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("grid", "empty"));
    }
    if grid.iter().any(|g| !g.is_finite()) {
        return Err(invalid("grid", "non-finite value"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("grid", "must be strictly increasing"));
    }
    Ok(())
}

/// Slope of `log f` against `log x` between `x_lo` and `x_hi`, i.e. the
/// apparent diversity order.
pub fn log_log_slope(f: impl Fn(f64) -> Result<f64>, x_lo: f64, x_hi: f64) -> Result<f64> {
    if !(x_lo > 0.0 && x_hi > x_lo) {
        return Err(invalid("x", format!("need 0 < {x_lo} < {x_hi}")));
    }
    let (a, b) = (f(x_lo)?, f(x_hi)?);
    if !(a > 0.0 && b > 0.0) {
        return Err(invalid("f", "slope needs positive values"));
    }
    Ok((b.ln() - a.ln()) / (x_hi.ln() - x_lo.ln()))
}

/// Logarithmically spaced grid with `points` values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
        .collect()
}
