//! Average error rates: MRC over Rayleigh fading and the block / total
//! error-rate approximations built on it.

use serde::Serialize;

use crate::channel::{db_to_linear, linear_to_db, Modulation, SystemDims};
use crate::error::{invalid, Result};

use super::outage::{binomial_f64, f1_bound};

fn check_snr(gamma0: f64) -> Result<()> {
    if !(gamma0 > 0.0) || !gamma0.is_finite() {
        return Err(invalid(
            "gamma0",
            format!("{gamma0} must be positive and finite"),
        ));
    }
    Ok(())
}

/// Average BER of `k`-branch MRC over i.i.d. Rayleigh fading with average
/// per-branch SNR `gamma0`.
///
/// Both formats have exact finite forms. BPSK uses the `mu = sqrt(g/(1+g))`
/// sum with `1 - mu` computed without cancellation, BFSK is
/// `(1 + gamma0/2)^{-k} / 2`.
pub fn mrc_avg_ber(k: usize, gamma0: f64, modulation: Modulation) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k", "MRC order must be at least 1"));
    }
    check_snr(gamma0)?;
    Ok(mrc_avg_ber_unchecked(k, gamma0, modulation))
}

pub(crate) fn mrc_avg_ber_unchecked(k: usize, gamma0: f64, modulation: Modulation) -> f64 {
    match modulation {
        Modulation::Bfsk => 0.5 * (1.0 + 0.5 * gamma0).powi(-(k as i32)),
        Modulation::Bpsk => {
            let mu = (gamma0 / (1.0 + gamma0)).sqrt();
            let one_minus = 1.0 / ((1.0 + gamma0) * (1.0 + mu));
            let lo = 0.5 * one_minus;
            let hi = 0.5 * (1.0 + mu);
            let mut sum = 0.0;
            let mut coef = 1.0;
            let mut hp = 1.0;
            for j in 0..k {
                if j > 0 {
                    coef *= (k - 1 + j) as f64 / j as f64;
                    hp *= hi;
                }
                sum += coef * hp;
            }
            (lo.powi(k as i32) * sum).min(0.5)
        }
    }
}

/// Which block error rate approximation to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlerVariant {
    /// First-step MRC average at `m * gamma0`.
    FirstStep,
    /// High-SNR power law of [`BlerVariant::FirstStep`].
    HighSnr,
    /// First step plus the second step treated as unordered.
    TwoStep,
}

impl BlerVariant {
    pub const ALL: [BlerVariant; 3] = [
        BlerVariant::FirstStep,
        BlerVariant::HighSnr,
        BlerVariant::TwoStep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BlerVariant::FirstStep => "first-step",
            BlerVariant::HighSnr => "high-snr",
            BlerVariant::TwoStep => "two-step",
        }
    }
}

/// Approximate average BLER of the optimally ordered receiver.
pub fn bler_approx(
    dims: SystemDims,
    gamma0: f64,
    modulation: Modulation,
    variant: BlerVariant,
) -> Result<f64> {
    check_snr(gamma0)?;
    let d = dims.diversity();
    let m = dims.m() as f64;
    let first = mrc_avg_ber_unchecked(d, m * gamma0, modulation);
    let v = match variant {
        BlerVariant::FirstStep => first,
        BlerVariant::HighSnr => match modulation {
            Modulation::Bfsk => 0.5 * (2.0 / (m * gamma0)).powi(d as i32),
            Modulation::Bpsk => binomial_f64(2 * d - 1, d) / (4.0 * m * gamma0).powi(d as i32),
        },
        BlerVariant::TwoStep => {
            if dims.m() < 2 {
                first
            } else {
                first + mrc_avg_ber_unchecked(d + 1, gamma0, modulation)
            }
        }
    };
    Ok(v.min(1.0))
}

/// Approximate average total (bit) error rate: first-step BLER over `m`,
/// since single-error blocks dominate.
pub fn tber_approx(dims: SystemDims, gamma0: f64, modulation: Modulation) -> Result<f64> {
    Ok(bler_approx(dims, gamma0, modulation, BlerVariant::FirstStep)? / dims.m() as f64)
}

/// Modulation constant of the square `m x m` power laws: BLER `~ a/(m g0)`.
pub fn square_system_constant(modulation: Modulation) -> f64 {
    match modulation {
        Modulation::Bpsk => 0.25,
        Modulation::Bfsk => 1.0,
    }
}

/// Square-system TBER power law `a / (m^2 gamma0)`. Requires `n = m`.
pub fn tber_square_highsnr(dims: SystemDims, gamma0: f64, modulation: Modulation) -> Result<f64> {
    check_snr(gamma0)?;
    if dims.n() != dims.m() {
        return Err(invalid(
            "dims",
            format!("{dims}: the power law needs n = m"),
        ));
    }
    let m = dims.m() as f64;
    Ok((square_system_constant(modulation) / (m * m * gamma0)).min(1.0))
}

/// BLER of the linear ZF interface: every stream sees the unordered
/// first-step error rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearBler {
    /// Per-stream average error rate.
    pub per_stream: f64,
    /// `1 - (1 - p)^m`
    pub exact: f64,
    /// `m p`
    pub approx: f64,
}

pub fn linear_bler_approx(
    dims: SystemDims,
    gamma0: f64,
    modulation: Modulation,
) -> Result<LinearBler> {
    check_snr(gamma0)?;
    let p = mrc_avg_ber_unchecked(dims.diversity(), gamma0, modulation);
    let m = dims.m() as i32;
    Ok(LinearBler {
        per_stream: p,
        exact: -(-p).ln_1p().mul_add(m as f64, 0.0).exp_m1(),
        approx: (m as f64 * p).min(1.0),
    })
}

/// Linear versus SIC comparison at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenaltyReport {
    pub dims: SystemDims,
    pub modulation: Modulation,
    pub gamma0_db: f64,
    pub linear: f64,
    pub unordered: f64,
    pub ordered: f64,
    pub ratio_linear_unordered: f64,
    pub ratio_linear_ordered: f64,
    pub ratio_unordered_ordered: f64,
    /// BLER level at which SNR offsets are measured.
    pub target: f64,
    /// SNR (dB) each curve needs to reach `target`.
    pub snr_linear_db: f64,
    pub snr_unordered_db: f64,
    pub snr_ordered_db: f64,
}

impl PenaltyReport {
    pub fn offset_linear_ordered_db(&self) -> f64 {
        self.snr_linear_db - self.snr_ordered_db
    }

    pub fn offset_linear_unordered_db(&self) -> f64 {
        self.snr_linear_db - self.snr_unordered_db
    }

    pub fn offset_unordered_ordered_db(&self) -> f64 {
        self.snr_unordered_db - self.snr_ordered_db
    }
}

/// Tolerance of the SNR inversion in dB.
pub const SNR_INVERSION_TOL_DB: f64 = 0.01;

/// Solve `curve(g) = target` for a curve decreasing in SNR, by bisection on
/// `log(curve)` over `[lo_db, hi_db]`.
pub fn invert_decreasing(
    curve: impl Fn(f64) -> f64,
    target: f64,
    lo_db: f64,
    hi_db: f64,
) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(invalid("target", format!("{target} must lie in (0, 1)")));
    }
    let lt = target.ln();
    let g = |db: f64| curve(db_to_linear(db)).ln() - lt;
    let (mut a, mut b) = (lo_db, hi_db);
    let (ga, gb) = (g(a), g(b));
    if ga < 0.0 || gb > 0.0 {
        return Err(invalid(
            "target",
            format!("{target} not bracketed on [{lo_db}, {hi_db}] dB"),
        ));
    }
    while b - a > SNR_INVERSION_TOL_DB / 4.0 {
        let mid = 0.5 * (a + b);
        if g(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Error-rate comparison of the linear ZF interface, unordered SIC and
/// ordered SIC at `gamma0`. SNR offsets are measured at the ordered
/// receiver's BLER at `gamma0`.
pub fn linear_penalty_report(
    dims: SystemDims,
    gamma0: f64,
    modulation: Modulation,
) -> Result<PenaltyReport> {
    check_snr(gamma0)?;
    let d = dims.diversity();
    let m = dims.m() as f64;
    let linear = |g: f64| {
        let p = mrc_avg_ber_unchecked(d, g, modulation);
        -(m * (-p).ln_1p()).exp_m1()
    };
    let unordered = |g: f64| mrc_avg_ber_unchecked(d, g, modulation);
    let ordered = |g: f64| mrc_avg_ber_unchecked(d, m * g, modulation);
    let (l, u, o) = (linear(gamma0), unordered(gamma0), ordered(gamma0));
    let target = o;
    let g0_db = linear_to_db(gamma0);
    let (lo, hi) = (g0_db - 80.0, g0_db + 120.0);
    Ok(PenaltyReport {
        dims,
        modulation,
        gamma0_db: g0_db,
        linear: l,
        unordered: u,
        ordered: o,
        ratio_linear_unordered: l / u,
        ratio_linear_ordered: l / o,
        ratio_unordered_ordered: u / o,
        target,
        snr_linear_db: invert_decreasing(linear, target, lo, hi)?,
        snr_unordered_db: invert_decreasing(unordered, target, lo, hi)?,
        snr_ordered_db: invert_decreasing(ordered, target, lo, hi)?,
    })
}

/// Quantity evaluated along the genie-aided chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenieQuantity {
    /// First-step outage upper bound at normalized SNR `x`; sharp for two
    /// streams.
    FirstStepOutage { x: f64 },
    /// Two-step BLER approximation at average SNR `gamma0`.
    Bler { gamma0: f64, modulation: Modulation },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenieLink {
    /// Streams left after the genie removes the trailing ones.
    pub k: usize,
    pub value: f64,
    pub source: &'static str,
}

/// Values for `k = m` down to `2` streams. Revealing trailing symbols can
/// only help, so the values are non-increasing; a violation is reported as
/// an invariant error.
pub fn genie_lower_bound_chain(
    dims: SystemDims,
    quantity: GenieQuantity,
) -> Result<Vec<GenieLink>> {
    let mut out = Vec::with_capacity(dims.m().saturating_sub(1));
    for k in (2..=dims.m()).rev() {
        let sub = dims.with_tx(k)?;
        let (value, source) = match quantity {
            GenieQuantity::FirstStepOutage { x } => (
                f1_bound(sub, x)?,
                if k == 2 { "exact" } else { "upper-bound" },
            ),
            GenieQuantity::Bler { gamma0, modulation } => (
                bler_approx(sub, gamma0, modulation, BlerVariant::TwoStep)?,
                "approximation",
            ),
        };
        out.push(GenieLink { k, value, source });
    }
    if let Some(w) = out
        .windows(2)
        .find(|w| w[1].value > w[0].value * (1.0 + 1e-12))
    {
        return Err(crate::error::Error::Invariant(format!(
            "genie chain increases from k = {} ({}) to k = {} ({})",
            w[0].k, w[0].value, w[1].k, w[1].value
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature;
    use std::f64::consts::FRAC_PI_2;

    fn dims(n: usize, m: usize) -> SystemDims {
        SystemDims::new(n, m).unwrap()
    }

    /// Independent oracle: `(1/pi) int_0^{pi/2} (1 + g/sin^2 t)^{-k} dt`.
    fn bpsk_mgf_oracle(k: usize, g: f64) -> f64 {
        let r = quadrature::integrate(
            |t: f64| (1.0 + g / t.sin().powi(2)).powi(-(k as i32)),
            0.0,
            FRAC_PI_2,
            1e-300,
            1e-13,
        );
        r.value / std::f64::consts::PI
    }

    #[test]
    fn bpsk_closed_form_matches_mgf_integral() {
        for k in 1..=8 {
            for &g in &[1e-3, 0.1, 1.0, 3.0, 10.0, 100.0, 1e4] {
                let got = mrc_avg_ber(k, g, Modulation::Bpsk).unwrap();
                let want = bpsk_mgf_oracle(k, g);
                assert!(
                    (got - want).abs() <= 1e-10 * want.max(1e-300) + 1e-300,
                    "k={k} g={g}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn bfsk_matches_laguerre_average() {
        // average of exp(-g t/2)/2 against t^{k-1} e^{-t} / (k-1)!
        for k in 1..=6 {
            let (t, w) = quadrature::gauss_laguerre(64, (k - 1) as f64);
            let norm = super::super::outage::factorial_f64(k - 1);
            for &g in &[0.01, 0.5, 2.0, 10.0] {
                let avg: f64 = t
                    .iter()
                    .zip(&w)
                    .map(|(t, w)| w * 0.5 * (-0.5 * g * t).exp())
                    .sum::<f64>()
                    / norm;
                let got = mrc_avg_ber(k, g, Modulation::Bfsk).unwrap();
                assert!((got - avg).abs() < 1e-10, "k={k} g={g}: {got} vs {avg}");
            }
        }
    }

    #[test]
    fn mrc_avg_ber_examples() {
        assert!((mrc_avg_ber(1, 2.0, Modulation::Bfsk).unwrap() - 0.25).abs() < 1e-15);
        for m in [Modulation::Bpsk, Modulation::Bfsk] {
            assert!((mrc_avg_ber(3, 1e-12, m).unwrap() - 0.5).abs() < 1e-6);
        }
        assert!(mrc_avg_ber(0, 1.0, Modulation::Bpsk).is_err());
        assert!(mrc_avg_ber(1, 0.0, Modulation::Bpsk).is_err());
        // high SNR against the power law
        for (n, m) in [(4, 4), (4, 3), (5, 3)] {
            let d = dims(n, m);
            let g = 1000.0;
            let a = mrc_avg_ber(d.diversity(), m as f64 * g, Modulation::Bfsk).unwrap();
            let b = bler_approx(d, g, Modulation::Bfsk, BlerVariant::HighSnr).unwrap();
            assert!((a / b - 1.0).abs() < 0.05, "{d}: {a} vs {b}");
        }
    }

    #[test]
    fn bler_variants() {
        let v = bler_approx(dims(4, 4), 100.0, Modulation::Bpsk, BlerVariant::HighSnr).unwrap();
        assert!((v - 6.25e-4).abs() < 1e-18);
        for (n, m) in [(2, 2), (3, 3), (5, 3)] {
            for &g in &[0.5, 3.0, 30.0, 300.0] {
                let d = dims(n, m);
                let e11 = bler_approx(d, g, Modulation::Bpsk, BlerVariant::FirstStep).unwrap();
                let e13 = bler_approx(d, g, Modulation::Bpsk, BlerVariant::TwoStep).unwrap();
                assert!(e13 >= e11);
            }
        }
        let g = 50.0;
        for m in [2usize, 3, 5] {
            let a = bler_approx(dims(m, m), g, Modulation::Bpsk, BlerVariant::HighSnr).unwrap();
            let b = bler_approx(
                dims(2 * m, 2 * m),
                g,
                Modulation::Bpsk,
                BlerVariant::HighSnr,
            )
            .unwrap();
            assert!((a / b - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tber_relations() {
        for (n, m) in [(3, 3), (4, 2), (6, 4)] {
            let d = dims(n, m);
            for &g in &[1.0, 10.0, 100.0] {
                let b = bler_approx(d, g, Modulation::Bpsk, BlerVariant::FirstStep).unwrap();
                let t = tber_approx(d, g, Modulation::Bpsk).unwrap();
                assert_eq!(t, b / m as f64);
                assert!(b / m as f64 <= t && t <= b);
            }
        }
        let g = 1e4;
        let r = tber_approx(dims(4, 4), g, Modulation::Bpsk).unwrap()
            / tber_approx(dims(2, 2), g, Modulation::Bpsk).unwrap();
        assert!((r - 0.25).abs() < 0.01, "{r}");
        let p = tber_square_highsnr(dims(3, 3), g, Modulation::Bpsk).unwrap();
        let q = tber_approx(dims(3, 3), g, Modulation::Bpsk).unwrap();
        assert!((p / q - 1.0).abs() < 0.01);
        assert!(tber_square_highsnr(dims(4, 3), g, Modulation::Bpsk).is_err());
    }

    #[test]
    fn linear_interface() {
        let d = dims(3, 3);
        let g = 1e4;
        let lin = linear_bler_approx(d, g, Modulation::Bpsk).unwrap();
        assert!((lin.exact / lin.per_stream / 3.0 - 1.0).abs() < 0.03);
        assert!(lin.exact <= lin.approx);
        let r = linear_penalty_report(d, g, Modulation::Bpsk).unwrap();
        assert!((r.ratio_linear_unordered / 3.0 - 1.0).abs() < 0.03);
        assert!((r.ratio_linear_ordered / 9.0 - 1.0).abs() < 0.03);
        // diversity 1: a BLER ratio of m^2 is an m^2-fold SNR penalty
        assert!((r.offset_linear_ordered_db() - 20.0 * 3f64.log10()).abs() < 0.05);
        assert!((r.offset_unordered_ordered_db() - 10.0 * 3f64.log10()).abs() < 0.05);

        let single = SystemDims::single_stream(3).unwrap();
        let r = linear_penalty_report(single, 10.0, Modulation::Bfsk).unwrap();
        assert!((r.linear - r.unordered).abs() < 1e-15 && (r.unordered - r.ordered).abs() < 1e-15);
    }

    #[test]
    fn inversion() {
        let f = |g: f64| 0.5 / (1.0 + g);
        let db = invert_decreasing(f, 0.5 / 101.0, -20.0, 60.0).unwrap();
        assert!((db - 20.0).abs() < SNR_INVERSION_TOL_DB);
        assert!(invert_decreasing(f, 1e-30, -20.0, 60.0).is_err());
    }

    #[test]
    fn genie_chain() {
        let d = dims(4, 4);
        for &x in &[0.05, 0.5, 2.0] {
            let chain = genie_lower_bound_chain(d, GenieQuantity::FirstStepOutage { x }).unwrap();
            assert_eq!(chain.first().unwrap().k, 4);
            assert_eq!(chain.first().unwrap().value, f1_bound(d, x).unwrap());
            let last = chain.last().unwrap();
            assert_eq!(last.k, 2);
            let sharp =
                super::super::outage::f1_bound_suboptimal_quadrature(dims(4, 2), x).unwrap();
            assert!((last.value - sharp).abs() <= 1e-8 * sharp);
        }
        let chain = genie_lower_bound_chain(
            d,
            GenieQuantity::Bler {
                gamma0: 10.0,
                modulation: Modulation::Bpsk,
            },
        )
        .unwrap();
        assert_eq!(chain.len(), 3);
    }
}
