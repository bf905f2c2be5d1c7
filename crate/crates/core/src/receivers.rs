//! ZF-SIC (V-BLAST) detection under three ordering rules, the linear ZF and
//! MMSE interfaces, and the D-BLAST symbol-cycling wrapper.
//!
//! The geometric part of every receiver (detection order, nulling vectors,
//! per-step normalized powers) depends only on the channel, so it is built
//! once as a plan and then applied to any number of received vectors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMatrix, ComplexVector, Modulation, NoiseModel, RANK_TOL};
use crate::error::{invalid, Error, Result};
use crate::linalg;

/// How the V-BLAST detection order is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingStrategy {
    /// Greedy: at every step detect the remaining column with the largest
    /// after-projection power.
    Optimal,
    /// Sort once by raw column power, largest first.
    Suboptimal,
    /// Natural transmitter order.
    None,
}

impl OrderingStrategy {
    pub const ALL: [OrderingStrategy; 3] = [Self::Optimal, Self::Suboptimal, Self::None];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Suboptimal => "suboptimal",
            Self::None => "none",
        }
    }
}

impl std::str::FromStr for OrderingStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "optimal" => Ok(Self::Optimal),
            "suboptimal" => Ok(Self::Suboptimal),
            "none" | "unordered" => Ok(Self::None),
            other => Err(invalid("ordering", format!("unknown ordering `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiverKind {
    ZfSic,
    LinearZf,
    LinearMmse,
    DblastCycled,
}

impl ReceiverKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ZfSic => "zf-sic",
            Self::LinearZf => "linear-zf",
            Self::LinearMmse => "linear-mmse",
            Self::DblastCycled => "dblast-cycled",
        }
    }
}

impl std::str::FromStr for ReceiverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zf-sic" | "vblast" => Ok(Self::ZfSic),
            "linear-zf" => Ok(Self::LinearZf),
            "linear-mmse" => Ok(Self::LinearMmse),
            "dblast-cycled" | "dblast" => Ok(Self::DblastCycled),
            other => Err(invalid("receiver", format!("unknown receiver `{other}`"))),
        }
    }
}

/// Outcome of detecting one transmit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Transmitter index detected at each step.
    pub order: Vec<usize>,
    /// `gamma_i` per step, from channel geometry.
    pub step_snr: Vec<f64>,
    /// `x_i = gamma_i / gamma0` per step.
    pub step_norm: Vec<f64>,
    /// Detected bit per transmitter.
    pub detected_bits: Vec<u8>,
    /// Error flag per step (detection order).
    pub step_errors: Vec<bool>,
    pub block_error: bool,
}

impl DetectionResult {
    pub fn bit_errors(&self) -> usize {
        self.step_errors.iter().filter(|&&e| e).count()
    }

    /// Index of the first erroneous step, if any.
    pub fn first_error_step(&self) -> Option<usize> {
        self.step_errors.iter().position(|&e| e)
    }
}

/// Detection order and the normalized after-projection power at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Ordering {
    pub order: Vec<usize>,
    pub norms: Vec<f64>,
}

/// Channel-only part of the ZF-SIC receiver.
#[derive(Debug, Clone)]
pub struct SicPlan {
    order: Vec<usize>,
    norms: Vec<f64>,
    /// Nulling vector per step, scaled so that `w^H h_i = 1`.
    nulling: Vec<ComplexVector>,
}

/// Scratch space for repeated Gram inversions.
struct GramWork {
    gram: Vec<Complex64>,
}

impl GramWork {
    fn new(m: usize) -> Self {
        Self {
            gram: vec![Complex64::new(0.0, 0.0); m * m],
        }
    }

    /// Inverse Gram matrix of `remaining`; on return `self.gram[..k*k]`
    /// holds it, column-major.
    fn invert(&mut self, h: &ChannelMatrix, remaining: &[usize]) -> Result<()> {
        let k = remaining.len();
        linalg::gram_of_columns(h.as_slice(), h.rows(), remaining, &mut self.gram[..k * k]);
        linalg::hermitian_pd_inverse(&mut self.gram[..k * k], k, RANK_TOL)
    }

    #[inline]
    fn entry(&self, k: usize, row: usize, col: usize) -> Complex64 {
        self.gram[col * k + row]
    }
}

/// `w = H_R P e_pos`, the row of the pseudo-inverse belonging to `remaining[pos]`.
fn nulling_vector(
    h: &ChannelMatrix,
    remaining: &[usize],
    work: &GramWork,
    pos: usize,
) -> ComplexVector {
    let k = remaining.len();
    let mut w = vec![Complex64::new(0.0, 0.0); h.rows()];
    for (j, &col) in remaining.iter().enumerate() {
        let p = work.entry(k, j, pos);
        for (wi, hi) in w.iter_mut().zip(h.column(col)) {
            *wi += hi * p;
        }
    }
    w
}

impl SicPlan {
    pub fn new(h: &ChannelMatrix, strategy: OrderingStrategy) -> Result<Self> {
        let m = h.cols();
        let mut work = GramWork::new(m);
        let mut remaining: Vec<usize> = match strategy {
            OrderingStrategy::None | OrderingStrategy::Optimal => (0..m).collect(),
            OrderingStrategy::Suboptimal => suboptimal_order(h),
        };
        let mut order = Vec::with_capacity(m);
        let mut norms = Vec::with_capacity(m);
        let mut nulling = Vec::with_capacity(m);
        while !remaining.is_empty() {
            work.invert(h, &remaining)?;
            let k = remaining.len();
            let pos = match strategy {
                OrderingStrategy::Optimal => {
                    // remaining is kept sorted by original index, so the
                    // first maximum is the lowest-index tie winner.
                    let mut best = 0;
                    let mut best_norm = f64::NEG_INFINITY;
                    for j in 0..k {
                        let x = 1.0 / work.entry(k, j, j).re;
                        if x > best_norm {
                            best_norm = x;
                            best = j;
                        }
                    }
                    best
                }
                _ => 0,
            };
            norms.push(1.0 / work.entry(k, pos, pos).re);
            nulling.push(nulling_vector(h, &remaining, &work, pos));
            order.push(remaining.remove(pos));
        }
        Ok(Self {
            order,
            norms,
            nulling,
        })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Normalized after-projection powers `x_i` in detection order.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn into_ordering(self) -> Ordering {
        Ordering {
            order: self.order,
            norms: self.norms,
        }
    }

    /// Run the nulling/cancellation loop on `received` (one vector per
    /// modulation branch, consumed as scratch). Detected bits are written per
    /// transmitter into `bits`.
    pub fn detect_in_place(
        &self,
        h: &ChannelMatrix,
        received: &mut [ComplexVector],
        modulation: Modulation,
        bits: &mut [u8],
    ) {
        for (step, &tx) in self.order.iter().enumerate() {
            let w = &self.nulling[step];
            let col = h.column(tx);
            match modulation {
                Modulation::Bpsk => {
                    let z = linalg::dot_conj(w, &received[0]);
                    let b = u8::from(z.re < 0.0);
                    bits[tx] = b;
                    let s = 1.0 - 2.0 * f64::from(b);
                    linalg::axpy_sub(&mut received[0], Complex64::new(s, 0.0), col);
                }
                Modulation::Bfsk => {
                    let z0 = linalg::dot_conj(w, &received[0]).norm_sqr();
                    let z1 = linalg::dot_conj(w, &received[1]).norm_sqr();
                    let b = u8::from(z1 > z0);
                    bits[tx] = b;
                    linalg::axpy_sub(&mut received[usize::from(b)], Complex64::new(1.0, 0.0), col);
                }
            }
        }
    }
}

fn suboptimal_order(h: &ChannelMatrix) -> Vec<usize> {
    let powers: Vec<f64> = (0..h.cols()).map(|k| h.column_norm_sqr(k)).collect();
    let mut idx: Vec<usize> = (0..h.cols()).collect();
    // stable sort keeps lowest index first among ties
    idx.sort_by(|&a, &b| powers[b].total_cmp(&powers[a]));
    idx
}

/// Detection order and per-step normalized powers for `strategy`.
pub fn choose_order(h: &ChannelMatrix, strategy: OrderingStrategy) -> Result<Ordering> {
    Ok(SicPlan::new(h, strategy)?.into_ordering())
}

/// Baseband symbols of one transmit vector, one vector per modulation branch.
pub fn modulate(bits: &[u8], modulation: Modulation) -> Vec<ComplexVector> {
    match modulation {
        Modulation::Bpsk => vec![bits
            .iter()
            .map(|&b| Complex64::new(1.0 - 2.0 * f64::from(b), 0.0))
            .collect()],
        Modulation::Bfsk => (0..2u8)
            .map(|tone| {
                bits.iter()
                    .map(|&b| Complex64::new(f64::from(u8::from(b == tone)), 0.0))
                    .collect()
            })
            .collect(),
    }
}

/// `r = H s + sigma0 xi` for every modulation branch; `xi` holds unit-variance
/// noise draws per branch.
pub fn transmit(
    h: &ChannelMatrix,
    bits: &[u8],
    modulation: Modulation,
    noise: NoiseModel,
    xi: &[ComplexVector],
) -> Result<Vec<ComplexVector>> {
    check_bits(h, bits)?;
    let symbols = modulate(bits, modulation);
    if xi.len() != symbols.len() {
        return Err(Error::DimensionMismatch {
            expected: symbols.len(),
            got: xi.len(),
        });
    }
    let sigma = noise.sigma0_sq().sqrt();
    symbols
        .iter()
        .zip(xi)
        .map(|(s, x)| {
            if x.len() != h.rows() {
                return Err(Error::DimensionMismatch {
                    expected: h.rows(),
                    got: x.len(),
                });
            }
            let mut r = h.mul_vec(s)?;
            for (ri, xi) in r.iter_mut().zip(x) {
                *ri += xi * sigma;
            }
            Ok(r)
        })
        .collect()
}

fn check_bits(h: &ChannelMatrix, bits: &[u8]) -> Result<()> {
    if bits.len() != h.cols() {
        return Err(Error::DimensionMismatch {
            expected: h.cols(),
            got: bits.len(),
        });
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(invalid("tx_bits", "bits must be 0 or 1"));
    }
    Ok(())
}

fn check_received(h: &ChannelMatrix, r: &[ComplexVector], modulation: Modulation) -> Result<()> {
    if r.len() != modulation.branches() {
        return Err(Error::DimensionMismatch {
            expected: modulation.branches(),
            got: r.len(),
        });
    }
    if let Some(bad) = r.iter().find(|v| v.len() != h.rows()) {
        return Err(Error::DimensionMismatch {
            expected: h.rows(),
            got: bad.len(),
        });
    }
    Ok(())
}

fn finish(
    order: Vec<usize>,
    norms: Vec<f64>,
    detected_bits: Vec<u8>,
    tx_bits: &[u8],
    noise: NoiseModel,
) -> DetectionResult {
    let step_errors: Vec<bool> = order
        .iter()
        .map(|&k| detected_bits[k] != tx_bits[k])
        .collect();
    let block_error = step_errors.iter().any(|&e| e);
    DetectionResult {
        step_snr: norms.iter().map(|x| x * noise.gamma0()).collect(),
        step_norm: norms,
        order,
        detected_bits,
        step_errors,
        block_error,
    }
}

/// ZF-SIC V-BLAST detection of one received vector.
///
/// Cancellation uses the detected symbols, so wrong decisions propagate.
/// Step SNRs come from the channel geometry, not from the realized noise.
pub fn zf_sic_detect(
    h: &ChannelMatrix,
    r: &[ComplexVector],
    strategy: OrderingStrategy,
    modulation: Modulation,
    noise: NoiseModel,
    tx_bits: &[u8],
) -> Result<DetectionResult> {
    check_bits(h, tx_bits)?;
    check_received(h, r, modulation)?;
    let plan = SicPlan::new(h, strategy)?;
    let mut scratch = r.to_vec();
    let mut bits = vec![0u8; h.cols()];
    plan.detect_in_place(h, &mut scratch, modulation, &mut bits);
    let Ordering { order, norms } = plan.into_ordering();
    Ok(finish(order, norms, bits, tx_bits, noise))
}

/// Linear ZF or MMSE front end: one filter row per stream.
#[derive(Debug, Clone)]
pub struct LinearPlan {
    weights: Vec<ComplexVector>,
    norms: Vec<f64>,
}

impl LinearPlan {
    pub fn new(h: &ChannelMatrix, kind: ReceiverKind, noise: NoiseModel) -> Result<Self> {
        let m = h.cols();
        let all: Vec<usize> = (0..m).collect();
        let mut work = GramWork::new(m);
        let mut norms = Vec::with_capacity(m);
        match kind {
            ReceiverKind::LinearZf => {
                work.invert(h, &all)?;
                for k in 0..m {
                    norms.push(1.0 / work.entry(m, k, k).re);
                }
            }
            ReceiverKind::LinearMmse => {
                let s2 = noise.sigma0_sq();
                linalg::gram_of_columns(h.as_slice(), h.rows(), &all, &mut work.gram);
                for k in 0..m {
                    work.gram[k * m + k] += s2;
                }
                linalg::hermitian_pd_inverse(&mut work.gram, m, RANK_TOL)?;
                for k in 0..m {
                    // post-MMSE SINR = 1 / (sigma^2 Q_kk) - 1
                    let sinr = 1.0 / (s2 * work.entry(m, k, k).re) - 1.0;
                    norms.push(sinr * s2);
                }
            }
            other => {
                return Err(invalid(
                    "kind",
                    format!("{} is not a linear receiver", other.name()),
                ));
            }
        }
        let weights = (0..m).map(|k| nulling_vector(h, &all, &work, k)).collect();
        Ok(Self { weights, norms })
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Filter outputs `r'` for every branch.
    pub fn decision_variables(&self, r: &[ComplexVector]) -> Vec<ComplexVector> {
        r.iter()
            .map(|rb| {
                self.weights
                    .iter()
                    .map(|w| linalg::dot_conj(w, rb))
                    .collect()
            })
            .collect()
    }

    pub fn detect_into(&self, r: &[ComplexVector], modulation: Modulation, bits: &mut [u8]) {
        for (k, w) in self.weights.iter().enumerate() {
            bits[k] = match modulation {
                Modulation::Bpsk => u8::from(linalg::dot_conj(w, &r[0]).re < 0.0),
                Modulation::Bfsk => {
                    let z0 = linalg::dot_conj(w, &r[0]).norm_sqr();
                    let z1 = linalg::dot_conj(w, &r[1]).norm_sqr();
                    u8::from(z1 > z0)
                }
            };
        }
    }
}

/// Decision variables `(H^H H)^-1 H^H r` or `(H^H H + sigma0^2 I)^-1 H^H r`.
pub fn linear_decision_variables(
    h: &ChannelMatrix,
    r: &[ComplexVector],
    kind: ReceiverKind,
    noise: NoiseModel,
) -> Result<Vec<ComplexVector>> {
    if let Some(bad) = r.iter().find(|v| v.len() != h.rows()) {
        return Err(Error::DimensionMismatch {
            expected: h.rows(),
            got: bad.len(),
        });
    }
    Ok(LinearPlan::new(h, kind, noise)?.decision_variables(r))
}

/// Component-wise detection after linear ZF or MMSE filtering. Steps are
/// reported in natural stream order.
pub fn linear_detect(
    h: &ChannelMatrix,
    r: &[ComplexVector],
    kind: ReceiverKind,
    modulation: Modulation,
    noise: NoiseModel,
    tx_bits: &[u8],
) -> Result<DetectionResult> {
    check_bits(h, tx_bits)?;
    check_received(h, r, modulation)?;
    let plan = LinearPlan::new(h, kind, noise)?;
    let mut bits = vec![0u8; h.cols()];
    plan.detect_into(r, modulation, &mut bits);
    Ok(finish(
        (0..h.cols()).collect(),
        plan.norms,
        bits,
        tx_bits,
        noise,
    ))
}

/// Antenna carrying stream `stream` at channel use `t`.
#[inline]
pub fn dblast_antenna(stream: usize, t: usize, m: usize) -> usize {
    (stream + t) % m
}

/// Map per-stream bits to per-antenna bits for channel use `t`.
pub fn dblast_antenna_bits(stream_bits: &[u8], t: usize) -> Vec<u8> {
    let m = stream_bits.len();
    let mut out = vec![0u8; m];
    for (s, &b) in stream_bits.iter().enumerate() {
        out[dblast_antenna(s, t, m)] = b;
    }
    out
}

/// Uncoded D-BLAST: stream `k` rides antenna `(k + t) mod m` at channel use
/// `t`. Each use is detected by ZF-SIC and relabelled back to stream indices;
/// `order` and `detected_bits` in the results refer to streams.
pub fn dblast_cycle_detect(
    h: &ChannelMatrix,
    r_sequence: &[Vec<ComplexVector>],
    strategy: OrderingStrategy,
    modulation: Modulation,
    noise: NoiseModel,
    tx_bits_sequence: &[Vec<u8>],
) -> Result<Vec<DetectionResult>> {
    if r_sequence.len() != tx_bits_sequence.len() {
        return Err(Error::DimensionMismatch {
            expected: tx_bits_sequence.len(),
            got: r_sequence.len(),
        });
    }
    let m = h.cols();
    let plan = SicPlan::new(h, strategy)?;
    let mut out = Vec::with_capacity(r_sequence.len());
    for (t, (r, stream_bits)) in r_sequence.iter().zip(tx_bits_sequence).enumerate() {
        check_bits(h, stream_bits)?;
        check_received(h, r, modulation)?;
        let mut scratch = r.clone();
        let mut antenna_bits = vec![0u8; m];
        plan.detect_in_place(h, &mut scratch, modulation, &mut antenna_bits);
        let stream_of_antenna = |a: usize| (a + m - t % m) % m;
        let order: Vec<usize> = plan.order().iter().map(|&a| stream_of_antenna(a)).collect();
        let detected: Vec<u8> = (0..m)
            .map(|s| antenna_bits[dblast_antenna(s, t, m)])
            .collect();
        out.push(finish(
            order,
            plan.norms().to_vec(),
            detected,
            stream_bits,
            noise,
        ));
    }
    Ok(out)
}
