//! First-step and per-step outage probabilities in normalized SNR `x`.

use std::f64::consts::FRAC_PI_2;

use crate::channel::SystemDims;
use crate::error::{invalid, Error, Result};
use crate::quadrature;

use super::coefficients::{build_coefficient_table, CoefficientTable};

/// Beyond this argument `exp(-x)` underflows and the MRC CDF is 1.
const MRC_CLAMP: f64 = 700.0;

fn check_x(x: f64) -> Result<()> {
    if !(x >= 0.0) {
        return Err(invalid("x", format!("{x} must be non-negative")));
    }
    Ok(())
}

pub(crate) fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

pub(crate) fn factorial_f64(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc * j as f64)
}

/// `k`-th order MRC outage, `1 - e^{-x} sum_{i<k} x^i/i!`, the regularized
/// lower incomplete gamma function `P(k, x)`. No argument checks.
pub(crate) fn mrc_cdf(k: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x > MRC_CLAMP {
        return 1.0;
    }
    let kf = k as f64;
    if x < kf + 1.0 {
        // upper tail of the Poisson sum; all terms positive, no cancellation
        let mut term = (-x).exp();
        for i in 1..=k {
            term *= x / i as f64;
        }
        let mut sum = 0.0;
        let mut i = k;
        loop {
            sum += term;
            i += 1;
            term *= x / i as f64;
            if term <= 1e-17 * sum {
                break;
            }
        }
        sum.min(1.0)
    } else {
        1.0 - mrc_ccdf(k, x)
    }
}

/// `e^{-x} sum_{i<k} x^i/i!`
pub(crate) fn mrc_ccdf(k: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x > MRC_CLAMP {
        return 0.0;
    }
    if x < k as f64 + 1.0 {
        return 1.0 - mrc_cdf(k, x);
    }
    let mut term = (-x).exp();
    let mut sum = 0.0;
    for i in 0..k {
        sum += term;
        term *= x / (i + 1) as f64;
    }
    sum
}

/// Outage probability of `order`-branch maximum ratio combining at
/// normalized SNR `x`.
pub fn mrc_outage(order: usize, x: f64) -> Result<f64> {
    if order == 0 {
        return Err(invalid("order", "MRC order must be at least 1"));
    }
    check_x(x)?;
    Ok(mrc_cdf(order, x))
}

/// Density of the angle between one channel column and the span of the
/// other `m - 1` columns.
pub fn marginal_pdf_phi(dims: SystemDims, phi: f64) -> Result<f64> {
    if dims.m() < 2 {
        return Err(Error::InvalidDims(format!(
            "{dims}: angle density needs m >= 2"
        )));
    }
    if !(0.0..=FRAC_PI_2).contains(&phi) {
        return Err(invalid("phi", format!("{phi} outside [0, pi/2]")));
    }
    Ok(pdf_phi(dims, phi))
}

fn pdf_prefactor(dims: SystemDims) -> f64 {
    let (n, m) = (dims.n(), dims.m());
    2.0 * (m - 1) as f64 * binomial_f64(n - 1, m - 1)
}

fn pdf_phi(dims: SystemDims, phi: f64) -> f64 {
    let (n, m) = (dims.n() as i32, dims.m() as i32);
    pdf_prefactor(dims) * phi.sin().powi(2 * (n - m) + 1) * phi.cos().powi(2 * m - 3)
}

/// `int f_phi(phi) g(F_MRC^{(n)}(x / sin^2 phi)) dphi` over `[0, pi/2]`.
fn angle_average<G: Fn(f64) -> f64>(dims: SystemDims, x: f64, g: G) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let n = dims.n();
    let integrand = |phi: f64| {
        let s2 = phi.sin().powi(2);
        if s2 <= 0.0 {
            return 0.0;
        }
        pdf_phi(dims, phi) * g(mrc_cdf(n, x / s2))
    };
    quadrature::integrate_with_limit(integrand, 0.0, FRAC_PI_2, 1e-300, 1e-13, 20_000).value
}

pub(crate) fn f1_bound_suboptimal_quadrature_unclamped(dims: SystemDims, x: f64) -> f64 {
    let m = dims.m() as i32;
    angle_average(dims, x, |f| f.powi(m))
}

/// Upper bound on the first-step outage of the optimally ordered receiver,
/// by direct quadrature over the angle density. Sharp for `m = 2`.
pub fn f1_bound_suboptimal_quadrature(dims: SystemDims, x: f64) -> Result<f64> {
    check_x(x)?;
    if dims.m() < 2 {
        return Ok(mrc_cdf(dims.n(), x));
    }
    Ok(f1_bound_suboptimal_quadrature_unclamped(dims, x).clamp(0.0, 1.0))
}

/// First-step outage of the unordered receiver by quadrature. Equals
/// `F_MRC^{(n-m+1)}(x)`; for `m = 1` this is plain `n`-branch MRC.
pub fn f1_unordered(dims: SystemDims, x: f64) -> Result<f64> {
    check_x(x)?;
    if dims.m() < 2 {
        return Ok(mrc_cdf(dims.n(), x));
    }
    Ok(angle_average(dims, x, |f| f).clamp(0.0, 1.0))
}

/// Lower bound from positive correlation of exchangeable column powers:
/// `F_1^u(x)^m`.
pub fn f1_lower_exchangeable(dims: SystemDims, x: f64) -> Result<f64> {
    check_x(x)?;
    Ok(mrc_cdf(dims.diversity(), x).powi(dims.m() as i32))
}

/// Closed-form upper bound evaluated from `table`. When the table failed its
/// integrity check the quadrature value is returned instead; callers that
/// must know use [`f1_bound_closedform_strict`] or inspect the table.
pub fn f1_bound_closedform(dims: SystemDims, x: f64, table: &CoefficientTable) -> Result<f64> {
    check_x(x)?;
    if table.dims() != dims {
        return Err(invalid(
            "table",
            format!("built for {}, used for {dims}", table.dims()),
        ));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if table.is_verified() {
        Ok(table.evaluate_raw(x).clamp(0.0, 1.0))
    } else {
        f1_bound_suboptimal_quadrature(dims, x)
    }
}

/// As [`f1_bound_closedform`] but refusing to fall back.
pub fn f1_bound_closedform_strict(
    dims: SystemDims,
    x: f64,
    table: &CoefficientTable,
) -> Result<f64> {
    if let Some(e) = table.integrity_error() {
        return Err(e);
    }
    f1_bound_closedform(dims, x, table)
}

/// Cached-table convenience wrapper around [`f1_bound_closedform`].
pub fn f1_bound(dims: SystemDims, x: f64) -> Result<f64> {
    if dims.m() < 2 {
        check_x(x)?;
        return Ok(mrc_cdf(dims.n(), x));
    }
    let table = build_coefficient_table(dims)?;
    f1_bound_closedform(dims, x, &table)
}

/// Small-`x` behaviour of the upper bound: `(x/2)^d / d!`, `d = n - m + 1`.
pub fn b1_asymptote(dims: SystemDims, x: f64) -> Result<f64> {
    check_x(x)?;
    let d = dims.diversity();
    Ok(((x / 2.0).powi(d as i32) / factorial_f64(d)).min(1.0))
}

/// High-SNR approximation of the optimally ordered first-step outage:
/// `(x/m)^d / d!`.
pub fn f1_approx_highsnr(dims: SystemDims, x: f64) -> Result<f64> {
    check_x(x)?;
    let d = dims.diversity();
    Ok(((x / dims.m() as f64).powi(d as i32) / factorial_f64(d)).min(1.0))
}

/// Approximate joint CDF of the `m` after-projection column powers,
/// `(sum 1/x_i)^{-d} / d!`. Its diagonal is [`f1_approx_highsnr`].
pub fn joint_norm_distribution_approx(dims: SystemDims, xs: &[f64]) -> Result<f64> {
    if xs.len() != dims.m() {
        return Err(Error::DimensionMismatch {
            expected: dims.m(),
            got: xs.len(),
        });
    }
    if let Some(bad) = xs.iter().find(|&&x| !(x > 0.0)) {
        return Err(invalid(
            "x",
            format!("thresholds must be positive, got {bad}"),
        ));
    }
    let d = dims.diversity();
    let inv: f64 = xs.iter().map(|x| 1.0 / x).sum();
    Ok((inv.powi(-(d as i32)) / factorial_f64(d)).min(1.0))
}

/// Step outage of the optimally ordered 3x3 receiver with its small-`x`
/// asymptote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutage {
    pub value: f64,
    pub asymptote: f64,
}

/// Steps 2 and 3 of the 3x3 receiver. Step 2 is the 3x2 first-step bound
/// (exact for two streams), step 3 is `F(2 - F)` with `F = F_MRC^{(3)}`.
pub fn step_outage_3x3(step: usize, x: f64) -> Result<StepOutage> {
    check_x(x)?;
    match step {
        2 => {
            let value = f1_bound(SystemDims::new(3, 2)?, x)?;
            Ok(StepOutage {
                value,
                asymptote: x * x / 8.0,
            })
        }
        3 => {
            // F(2 - F) = 1 - (1 - F)^2, monotone in floating point too.
            let f = mrc_cdf(3, x);
            let value = if f < 0.5 {
                f * (2.0 - f)
            } else {
                1.0 - mrc_ccdf(3, x).powi(2)
            };
            Ok(StepOutage {
                value: value.clamp(0.0, 1.0),
                asymptote: x.powi(3) / 3.0,
            })
        }
        _ => Err(invalid(
            "step",
            format!("{step}: only steps 2 and 3 have closed forms"),
        )),
    }
}
