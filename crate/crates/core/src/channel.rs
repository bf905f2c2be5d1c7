//! Channel substrate: system dimensions, Rayleigh channel sampling,
//! orthogonal projections, noise model and conditional bit error rates.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;

pub type ComplexVector = Vec<Complex64>;

/// Largest antenna count accepted by default. Keeps the factorials and
/// binomials of the closed-form bound within exactly representable range.
pub const DEFAULT_DIM_CAP: usize = 16;

/// Relative drop tolerance for linearly dependent columns.
pub const RANK_TOL: f64 = 1e-12;

/// `n` receive and `m` transmit antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SystemDims {
    n: usize,
    m: usize,
}

impl SystemDims {
    /// `n >= m >= 2`, both at most [`DEFAULT_DIM_CAP`].
    pub fn new(n: usize, m: usize) -> Result<Self> {
        Self::with_cap(n, m, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(n: usize, m: usize, cap: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidDims(format!(
                "m = {m}: at least two transmit antennas required"
            )));
        }
        if n < m {
            return Err(Error::InvalidDims(format!("n = {n} < m = {m}")));
        }
        if n > cap {
            return Err(Error::InvalidDims(format!("n = {n} exceeds cap {cap}")));
        }
        Ok(Self { n, m })
    }

    /// Single transmit stream: the receiver degenerates to `n`-branch MRC.
    pub fn single_stream(n: usize) -> Result<Self> {
        if n == 0 || n > DEFAULT_DIM_CAP {
            return Err(Error::InvalidDims(format!("n = {n} out of range")));
        }
        Ok(Self { n, m: 1 })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    /// Diversity order of the first detection step, `n - m + 1`.
    #[inline]
    pub fn diversity(&self) -> usize {
        self.n - self.m + 1
    }

    /// The same receiver with `k` transmitters (genie-aided reduction).
    pub fn with_tx(&self, k: usize) -> Result<Self> {
        if k == 1 {
            Self::single_stream(self.n)
        } else {
            Self::new(self.n, k)
        }
    }
}

impl std::fmt::Display for SystemDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.n, self.m)
    }
}

/// One `n x m` realization of the complex channel gains, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    dims: SystemDims,
    data: Vec<Complex64>,
}

impl ChannelMatrix {
    pub fn from_column_major(dims: SystemDims, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dims.n * dims.m {
            return Err(Error::DimensionMismatch {
                expected: dims.n * dims.m,
                got: data.len(),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("entries", "non-finite channel gain"));
        }
        Ok(Self { dims, data })
    }

    pub fn from_columns(dims: SystemDims, columns: &[ComplexVector]) -> Result<Self> {
        if columns.len() != dims.m {
            return Err(Error::DimensionMismatch {
                expected: dims.m,
                got: columns.len(),
            });
        }
        let mut data = Vec::with_capacity(dims.n * dims.m);
        for c in columns {
            if c.len() != dims.n {
                return Err(Error::DimensionMismatch {
                    expected: dims.n,
                    got: c.len(),
                });
            }
            data.extend_from_slice(c);
        }
        Self::from_column_major(dims, data)
    }

    /// The `n x m` matrix with ones on the leading diagonal.
    pub fn identity(dims: SystemDims) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); dims.n * dims.m];
        for k in 0..dims.m {
            data[k * dims.n + k] = Complex64::new(1.0, 0.0);
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.dims.n
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.dims.m
    }

    #[inline]
    pub fn column(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.dims.n..(k + 1) * self.dims.n]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[col * self.dims.n + row]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    /// Keep the columns listed in `cols`, in that order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let dims = SystemDims::with_tx_unchecked(self.dims.n, cols.len());
        let mut data = Vec::with_capacity(self.dims.n * cols.len());
        for &c in cols {
            if c >= self.dims.m {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    len: self.dims.m,
                });
            }
            data.extend_from_slice(self.column(c));
        }
        Ok(Self { dims, data })
    }

    /// `H s`
    pub fn mul_vec(&self, s: &[Complex64]) -> Result<ComplexVector> {
        if s.len() != self.dims.m {
            return Err(Error::DimensionMismatch {
                expected: self.dims.m,
                got: s.len(),
            });
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.dims.n];
        for (k, sk) in s.iter().enumerate() {
            for (o, h) in out.iter_mut().zip(self.column(k)) {
                *o += h * sk;
            }
        }
        Ok(out)
    }

    pub fn column_norm_sqr(&self, k: usize) -> f64 {
        linalg::norm_sqr(self.column(k))
    }
}

impl SystemDims {
    pub(crate) fn with_tx_unchecked(n: usize, m: usize) -> Self {
        Self { n, m }
    }
}

/// Random stream for one trial: a ChaCha8 generator keyed by the run seed,
/// with the trial index selecting an independent 64-bit stream. Results are
/// therefore identical whichever worker executes the trial.
pub fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

/// One circularly-symmetric `CN(0, 1)` draw.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// i.i.d. Rayleigh channel. Columns are drawn one after another, so a
/// channel with fewer transmitters drawn from the same stream is a column
/// prefix of the larger one.
pub fn sample_channel<R: Rng + ?Sized>(dims: SystemDims, rng: &mut R) -> ChannelMatrix {
    let data = (0..dims.n * dims.m).map(|_| complex_normal(rng)).collect();
    ChannelMatrix { dims, data }
}

/// Refill `h` in place with fresh i.i.d. `CN(0, 1)` entries.
pub fn resample_channel<R: Rng + ?Sized>(h: &mut ChannelMatrix, rng: &mut R) {
    for z in h.data.iter_mut() {
        *z = complex_normal(rng);
    }
}

/// Orthonormal basis of the span of `columns` by modified Gram-Schmidt with
/// one re-orthogonalisation pass. Columns whose residual norm falls below
/// [`RANK_TOL`] times the largest column norm are dropped.
pub fn orthonormal_basis(columns: &[&[Complex64]]) -> Vec<ComplexVector> {
    let largest = columns
        .iter()
        .map(|c| linalg::norm_sqr(c).sqrt())
        .fold(0.0_f64, f64::max);
    let mut basis: Vec<ComplexVector> = Vec::with_capacity(columns.len());
    for col in columns {
        let mut v = col.to_vec();
        for _pass in 0..2 {
            for q in &basis {
                let coef = linalg::dot_conj(q, &v);
                linalg::axpy_sub(&mut v, coef, q);
            }
        }
        let norm = linalg::norm_sqr(&v).sqrt();
        if norm > RANK_TOL * largest && norm > 0.0 {
            v.iter_mut().for_each(|z| *z /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Component of `v` orthogonal to the span of `span_columns`.
pub fn project_orthogonal(v: &[Complex64], span_columns: &[&[Complex64]]) -> Result<ComplexVector> {
    if let Some(bad) = span_columns.iter().find(|c| c.len() != v.len()) {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            got: bad.len(),
        });
    }
    let basis = orthonormal_basis(span_columns);
    let mut out = v.to_vec();
    for _pass in 0..2 {
        for q in &basis {
            let coef = linalg::dot_conj(q, &out);
            linalg::axpy_sub(&mut out, coef, q);
        }
    }
    Ok(out)
}

/// Additive white Gaussian noise `CN(0, sigma0^2 I)`; `gamma0 = 1 / sigma0^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    sigma0_sq: f64,
}

impl NoiseModel {
    pub fn from_sigma_sq(sigma0_sq: f64) -> Result<Self> {
        if !(sigma0_sq > 0.0) || !sigma0_sq.is_finite() {
            return Err(invalid(
                "sigma0_sq",
                format!("{sigma0_sq} must be positive and finite"),
            ));
        }
        Ok(Self { sigma0_sq })
    }

    pub fn from_snr(gamma0: f64) -> Result<Self> {
        if !(gamma0 > 0.0) || !gamma0.is_finite() {
            return Err(invalid(
                "gamma0",
                format!("{gamma0} must be positive and finite"),
            ));
        }
        Ok(Self {
            sigma0_sq: 1.0 / gamma0,
        })
    }

    pub fn from_snr_db(db: f64) -> Result<Self> {
        Self::from_snr(db_to_linear(db))
    }

    #[inline]
    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }

    #[inline]
    pub fn gamma0(&self) -> f64 {
        1.0 / self.sigma0_sq
    }
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// After-processing SNR of one detection step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSnr {
    /// `gamma_i = |h_i_perp|^2 gamma0`
    pub snr: f64,
    /// `x_i = |h_i_perp|^2`, the SNR normalized to `gamma0`.
    pub norm: f64,
}

/// SNR after nulling the columns in `excluded` (the yet-to-be-detected set).
pub fn after_projection_snr(
    h: &ChannelMatrix,
    column_index: usize,
    excluded: &[usize],
    noise: NoiseModel,
) -> Result<StepSnr> {
    let m = h.cols();
    if column_index >= m {
        return Err(Error::IndexOutOfRange {
            index: column_index,
            len: m,
        });
    }
    if let Some(&bad) = excluded.iter().find(|&&k| k >= m) {
        return Err(Error::IndexOutOfRange { index: bad, len: m });
    }
    if excluded.contains(&column_index) {
        return Err(invalid("excluded", "contains the detected column"));
    }
    let span: Vec<&[Complex64]> = excluded.iter().map(|&k| h.column(k)).collect();
    let perp = project_orthogonal(h.column(column_index), &span)?;
    let norm = linalg::norm_sqr(&perp);
    Ok(StepSnr {
        snr: norm * noise.gamma0(),
        norm,
    })
}

/// Binary modulation formats with their conditional AWGN bit error rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modulation {
    /// Coherent BPSK, bit `b` mapped to `1 - 2b`.
    Bpsk,
    /// Non-coherent orthogonal BFSK with square-law detection.
    Bfsk,
}

impl Modulation {
    /// Conditional BER at SNR `gamma` without argument checks.
    #[inline]
    pub fn ber(&self, gamma: f64) -> f64 {
        match self {
            Modulation::Bpsk => q_function((2.0 * gamma).sqrt()),
            Modulation::Bfsk => 0.5 * (-0.5 * gamma).exp(),
        }
    }

    /// Number of orthogonal signalling dimensions used in simulation.
    #[inline]
    pub fn branches(&self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Bfsk => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Bfsk => "bfsk",
        }
    }
}

impl std::str::FromStr for Modulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "bfsk" => Ok(Modulation::Bfsk),
            other => Err(invalid(
                "modulation",
                format!("unknown modulation `{other}`"),
            )),
        }
    }
}

/// Gaussian tail probability `Q(x) = erfc(x / sqrt 2) / 2`.
#[inline]
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// BPSK: `Q(sqrt(2 gamma))`; BFSK: `exp(-gamma / 2) / 2`.
pub fn ber_conditional(modulation: Modulation, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", format!("{gamma} must be non-negative")));
    }
    Ok(modulation.ber(gamma))
}
