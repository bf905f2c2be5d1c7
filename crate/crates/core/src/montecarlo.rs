//! Reproducible Monte-Carlo estimation of outage and error rates.
//!
//! Trial `t` draws its channel from stream `t` of the configured seed and its
//! noise and data bits from stream `t` of a derived seed. Channels are drawn
//! column by column, so an `n x k` experiment sees the first `k` columns of
//! the `n x m` channels with the same seed, and every receiver variant sees
//! the same channels (common random numbers).

use std::ops::Range;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{check_grid, AbscissaUnit};
use crate::channel::{
    complex_normal, db_to_linear, resample_channel, sample_channel, trial_rng, ChannelMatrix,
};
use crate::channel::{ComplexVector, Modulation, NoiseModel, SystemDims};
use crate::error::{invalid, Error, Result};
use crate::exec::{self, Execution, BLOCK_TRIALS};
use crate::receivers::{dblast_antenna, LinearPlan, OrderingStrategy, ReceiverKind, SicPlan};
use crate::stats::{mean_interval, wilson_interval, Z95};

/// Salt separating the noise/data streams from the channel streams.
const NOISE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Blocks per early-stopping round.
const ROUND_BLOCKS: u64 = 64;

/// Default channel realizations per experiment.
pub const DEFAULT_CHANNEL_TRIALS: u64 = 1_000_000;
/// Default noise/data realizations per channel.
pub const DEFAULT_NOISE_TRIALS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Full detection with noise, data and error propagation.
    #[default]
    SymbolLevel,
    /// Per-channel `1 - prod(1 - P_e(gamma_i))` averaged over channels.
    /// Block error rate only.
    SemiAnalytic,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::SymbolLevel => "symbol-level",
            Estimator::SemiAnalytic => "semi-analytic",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symbol-level" => Ok(Estimator::SymbolLevel),
            "semi-analytic" => Ok(Estimator::SemiAnalytic),
            other => Err(invalid("estimator", format!("unknown estimator `{other}`"))),
        }
    }
}

/// Everything needed to reproduce one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dims: SystemDims,
    pub receiver: ReceiverKind,
    pub ordering: OrderingStrategy,
    pub modulation: Modulation,
    /// Average SNR grid for error rates, dB.
    pub snr_grid_db: Vec<f64>,
    /// Normalized SNR grid for outage, linear.
    pub x_grid: Vec<f64>,
    pub channel_trials: u64,
    pub noise_trials_per_channel: u64,
    pub seed: u64,
    pub estimator: Estimator,
    /// Stop once every grid point's 95% half-width is below this fraction
    /// of its estimate. Checked every `64 * 1024` trials.
    pub early_stop: Option<f64>,
    #[serde(skip)]
    pub execution: Execution,
}

impl ExperimentConfig {
    pub fn new(dims: SystemDims) -> Self {
        Self {
            dims,
            receiver: ReceiverKind::ZfSic,
            ordering: OrderingStrategy::Optimal,
            modulation: Modulation::Bpsk,
            snr_grid_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            x_grid: crate::analytic::log_grid(1e-3, 10.0, 25),
            channel_trials: DEFAULT_CHANNEL_TRIALS,
            noise_trials_per_channel: DEFAULT_NOISE_TRIALS,
            seed: 1,
            estimator: Estimator::SymbolLevel,
            early_stop: None,
            execution: Execution::Parallel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_trials == 0 {
            return Err(invalid("channel_trials", "must be at least 1"));
        }
        if self.noise_trials_per_channel == 0 {
            return Err(invalid("noise_trials_per_channel", "must be at least 1"));
        }
        check_grid(&self.snr_grid_db).map_err(|e| rename(e, "snr_grid_db"))?;
        check_grid(&self.x_grid).map_err(|e| rename(e, "x_grid"))?;
        if self.x_grid[0] < 0.0 {
            return Err(invalid("x_grid", "normalized SNR must be non-negative"));
        }
        if let Some(r) = self.early_stop {
            if !(r > 0.0 && r < 1.0) {
                return Err(invalid("early_stop", format!("{r} must lie in (0, 1)")));
            }
        }
        Ok(())
    }

    fn noise_at(&self, g: usize) -> NoiseModel {
        NoiseModel::from_snr(db_to_linear(self.snr_grid_db[g])).expect("validated grid")
    }
}

fn rename(e: Error, name: &'static str) -> Error {
    match e {
        Error::InvalidArgument { reason, .. } => Error::InvalidArgument { name, reason },
        other => other,
    }
}

/// Monte-Carlo curve with 95% intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatedCurve {
    pub label: String,
    pub unit: AbscissaUnit,
    pub grid: Vec<f64>,
    pub estimates: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub trials: Vec<u64>,
}

impl EstimatedCurve {
    fn from_counts(
        label: String,
        unit: AbscissaUnit,
        grid: &[f64],
        hits: &[u64],
        trials: &[u64],
    ) -> Self {
        let mut c = Self::empty(label, unit, grid);
        for (&k, &n) in hits.iter().zip(trials) {
            let (lo, hi) = wilson_interval(k, n, Z95);
            c.estimates
                .push(if n > 0 { k as f64 / n as f64 } else { 0.0 });
            c.ci_low.push(lo);
            c.ci_high.push(hi);
            c.trials.push(n);
        }
        c
    }

    fn from_moments(
        label: String,
        unit: AbscissaUnit,
        grid: &[f64],
        sums: &[(f64, f64)],
        count: u64,
    ) -> Self {
        let mut c = Self::empty(label, unit, grid);
        for &(s, s2) in sums {
            let (mean, lo, hi) = mean_interval(s, s2, count, Z95);
            c.estimates.push(mean);
            c.ci_low.push(lo.min(mean));
            c.ci_high.push(hi.max(mean));
            c.trials.push(count);
        }
        c
    }

    fn empty(label: String, unit: AbscissaUnit, grid: &[f64]) -> Self {
        Self {
            label,
            unit,
            grid: grid.to_vec(),
            estimates: Vec::with_capacity(grid.len()),
            ci_low: Vec::with_capacity(grid.len()),
            ci_high: Vec::with_capacity(grid.len()),
            trials: Vec::with_capacity(grid.len()),
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Does the 95% interval at grid index `i` intersect `[lo, hi]`?
    pub fn overlaps(&self, i: usize, lo: f64, hi: f64) -> bool {
        self.ci_low[i] <= hi && lo <= self.ci_high[i]
    }
}

fn half_width_ok(lo: &[f64], hi: &[f64], est: &[f64], rel: f64) -> bool {
    est.iter()
        .zip(lo.iter().zip(hi))
        .all(|(&e, (&l, &h))| e > 0.0 && 0.5 * (h - l) < rel * e)
}

/// Block-mergeable accumulator.
trait Accumulator: Send + Sized {
    fn merge(&mut self, other: Self);
    /// Early-stop criterion at the current totals.
    fn converged(&self, rel: f64) -> bool;
}

/// Run `trials` trials (possibly fewer with early stopping). Returns the
/// accumulator and the number of trials consumed.
fn run_trials<A, F>(
    exec: Execution,
    trials: u64,
    early_stop: Option<f64>,
    init: impl Fn() -> A,
    f: F,
) -> Result<(A, u64)>
where
    A: Accumulator,
    F: Fn(Range<u64>) -> Result<A> + Sync + Send,
{
    let merge = |acc: &mut A, part: A| acc.merge(part);
    let Some(rel) = early_stop else {
        return Ok((
            exec::map_reduce(exec, 0, trials, init(), &f, merge)?,
            trials,
        ));
    };
    let round = ROUND_BLOCKS * BLOCK_TRIALS;
    let mut acc = init();
    let mut done = 0;
    while done < trials {
        let n = round.min(trials - done);
        let part = exec::map_reduce(exec, done, n, init(), &f, merge)?;
        acc.merge(part);
        done += n;
        if acc.converged(rel) {
            break;
        }
    }
    Ok((acc, done))
}

fn noise_rng(seed: u64, trial: u64) -> rand_chacha::ChaCha8Rng {
    trial_rng(seed ^ NOISE_SEED_SALT, trial)
}

/// Per-trial normalized step powers in detection order for the configured
/// receiver. Linear receivers report per-stream ZF powers.
struct GeometryRunner {
    dims: SystemDims,
    receiver: ReceiverKind,
    ordering: OrderingStrategy,
}

impl GeometryRunner {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        if config.receiver == ReceiverKind::LinearMmse {
            return Err(Error::Unsupported(
                "MMSE output SINR depends on the noise level; outage is defined for ZF receivers"
                    .into(),
            ));
        }
        Ok(Self {
            dims: config.dims,
            receiver: config.receiver,
            ordering: config.ordering,
        })
    }

    fn norms(&self, h: &ChannelMatrix) -> Result<Vec<f64>> {
        match self.receiver {
            ReceiverKind::LinearZf => {
                Ok(
                    LinearPlan::new(h, ReceiverKind::LinearZf, NoiseModel::from_snr(1.0)?)?
                        .norms()
                        .to_vec(),
                )
            }
            _ => Ok(SicPlan::new(h, self.ordering)?.norms().to_vec()),
        }
    }

    /// Visit the step powers of every trial in `range`.
    fn for_each(&self, seed: u64, range: Range<u64>, mut visit: impl FnMut(&[f64])) -> Result<()> {
        let mut h: Option<ChannelMatrix> = None;
        for t in range {
            let mut rng = trial_rng(seed, t);
            match h.as_mut() {
                Some(h) => resample_channel(h, &mut rng),
                None => h = Some(sample_channel(self.dims, &mut rng)),
            }
            let x = self.norms(h.as_ref().expect("sampled"))?;
            visit(&x);
        }
        Ok(())
    }
}

struct OutageAccum {
    /// `hist[step][b]`: trials whose step power falls in bin `b`, where bin
    /// `b` collects `grid[b-1] < x <= grid[b]`.
    hist: Vec<Vec<u64>>,
    trials: u64,
    grid: Vec<f64>,
}

impl OutageAccum {
    fn new(m: usize, grid: &[f64]) -> Self {
        Self {
            hist: vec![vec![0; grid.len() + 1]; m],
            trials: 0,
            grid: grid.to_vec(),
        }
    }

    fn record(&mut self, x: &[f64]) {
        for (step, &xi) in x.iter().enumerate() {
            let bin = self.grid.partition_point(|&g| g < xi);
            self.hist[step][bin] += 1;
        }
        self.trials += 1;
    }

    fn cumulative(&self, step: usize) -> Vec<u64> {
        let mut acc = 0;
        self.hist[step][..self.grid.len()]
            .iter()
            .map(|&c| {
                acc += c;
                acc
            })
            .collect()
    }

    fn curves(&self, label: impl Fn(usize) -> String) -> Vec<EstimatedCurve> {
        let trials = vec![self.trials; self.grid.len()];
        (0..self.hist.len())
            .map(|s| {
                EstimatedCurve::from_counts(
                    label(s),
                    AbscissaUnit::NormalizedSnr,
                    &self.grid,
                    &self.cumulative(s),
                    &trials,
                )
            })
            .collect()
    }
}

impl Accumulator for OutageAccum {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.hist.iter_mut().zip(other.hist) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.trials += other.trials;
    }

    fn converged(&self, rel: f64) -> bool {
        // first step is the rarest event at every threshold
        let c = &self.curves(|_| String::new())[0];
        half_width_ok(&c.ci_low, &c.ci_high, &c.estimates, rel)
    }
}

/// Empirical CDF of the normalized power at every detection step.
/// Steps after the first assume correct cancellation (geometry only).
pub fn estimate_step_outage(config: &ExperimentConfig) -> Result<Vec<EstimatedCurve>> {
    config.validate()?;
    let runner = GeometryRunner::new(config)?;
    let m = config.dims.m();
    let (acc, _) = run_trials(
        config.execution,
        config.channel_trials,
        config.early_stop,
        || OutageAccum::new(m, &config.x_grid),
        |range| {
            let mut acc = OutageAccum::new(m, &config.x_grid);
            runner.for_each(config.seed, range, |x| acc.record(x))?;
            Ok(acc)
        },
    )?;
    let tag = curve_tag(config);
    Ok(acc.curves(|s| format!("mc-outage-step{}-{tag}", s + 1)))
}

fn curve_tag(config: &ExperimentConfig) -> String {
    match config.receiver {
        ReceiverKind::ZfSic => format!("{}-{}", config.dims, config.ordering.name()),
        other => format!(
            "{}-{}-{}",
            config.dims,
            other.name(),
            config.ordering.name()
        ),
    }
}

/// Raw per-step normalized powers, `out[step][trial]`, for distributional
/// checks.
pub fn collect_step_norms(config: &ExperimentConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let runner = GeometryRunner::new(config)?;
    let m = config.dims.m();
    let parts = exec::map_blocks(
        config.execution,
        &exec::blocks(0, config.channel_trials),
        |range| {
            let mut out = vec![Vec::with_capacity((range.end - range.start) as usize); m];
            runner.for_each(config.seed, range, |x| {
                for (o, &v) in out.iter_mut().zip(x) {
                    o.push(v);
                }
            })?;
            Ok(out)
        },
    )?;
    let mut out = vec![Vec::with_capacity(config.channel_trials as usize); m];
    for part in parts {
        for (o, p) in out.iter_mut().zip(part) {
            o.extend(p);
        }
    }
    Ok(out)
}

/// Block, total and per-step error rates on the SNR grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRates {
    pub bler: EstimatedCurve,
    /// Absent for the semi-analytic estimator.
    pub tber: Option<EstimatedCurve>,
    /// Step `i` error rate given correct decisions at steps `< i` (linear
    /// receivers: per stream).
    pub per_step_ber: Vec<EstimatedCurve>,
    pub channel_trials: u64,
}

impl ErrorRates {
    /// The TBER curve, or an explanation why this estimator has none.
    pub fn tber(&self) -> Result<&EstimatedCurve> {
        self.tber.as_ref().ok_or_else(|| {
            Error::Unsupported(
                "the semi-analytic estimator has no total error rate: error propagation after the first wrong step is not modelled".into(),
            )
        })
    }
}

struct SymbolAccum {
    block: Vec<u64>,
    bits: Vec<u64>,
    step_err: Vec<Vec<u64>>,
    step_trials: Vec<Vec<u64>>,
    draws: u64,
    channels: u64,
}

impl SymbolAccum {
    fn new(m: usize, g: usize) -> Self {
        Self {
            block: vec![0; g],
            bits: vec![0; g],
            step_err: vec![vec![0; g]; m],
            step_trials: vec![vec![0; g]; m],
            draws: 0,
            channels: 0,
        }
    }

    fn bler_curve(&self, label: String, grid: &[f64]) -> EstimatedCurve {
        EstimatedCurve::from_counts(
            label,
            AbscissaUnit::SnrDb,
            grid,
            &self.block,
            &vec![self.draws; grid.len()],
        )
    }
}

impl Accumulator for SymbolAccum {
    fn merge(&mut self, o: Self) {
        add_into(&mut self.block, &o.block);
        add_into(&mut self.bits, &o.bits);
        for (a, b) in self.step_err.iter_mut().zip(&o.step_err) {
            add_into(a, b);
        }
        for (a, b) in self.step_trials.iter_mut().zip(&o.step_trials) {
            add_into(a, b);
        }
        self.draws += o.draws;
        self.channels += o.channels;
    }

    fn converged(&self, rel: f64) -> bool {
        let c = self.bler_curve(String::new(), &vec![0.0; self.block.len()]);
        half_width_ok(&c.ci_low, &c.ci_high, &c.estimates, rel)
    }
}

fn add_into(a: &mut [u64], b: &[u64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

struct SemiAccum {
    pb: Vec<(f64, f64)>,
    pe: Vec<Vec<(f64, f64)>>,
    channels: u64,
}

impl SemiAccum {
    fn new(m: usize, g: usize) -> Self {
        Self {
            pb: vec![(0.0, 0.0); g],
            pe: vec![vec![(0.0, 0.0); g]; m],
            channels: 0,
        }
    }
}

impl Accumulator for SemiAccum {
    fn merge(&mut self, o: Self) {
        for (a, b) in self.pb.iter_mut().zip(&o.pb) {
            a.0 += b.0;
            a.1 += b.1;
        }
        for (ra, rb) in self.pe.iter_mut().zip(&o.pe) {
            for (a, b) in ra.iter_mut().zip(rb) {
                a.0 += b.0;
                a.1 += b.1;
            }
        }
        self.channels += o.channels;
    }

    fn converged(&self, rel: f64) -> bool {
        self.pb.iter().all(|&(s, s2)| {
            let (m, lo, hi) = mean_interval(s, s2, self.channels, Z95);
            m > 0.0 && 0.5 * (hi - lo) < rel * m
        })
    }
}

/// Per-channel detector state.
enum Detector {
    Sic(SicPlan),
    Cycled(SicPlan),
    /// One plan per grid point (MMSE depends on the noise level).
    Linear(Vec<LinearPlan>),
}

/// Reusable buffers for one block.
struct Scratch {
    stream_bits: Vec<u8>,
    tx_bits: Vec<u8>,
    detected: Vec<u8>,
    xi: Vec<ComplexVector>,
    hs: Vec<ComplexVector>,
    r: Vec<ComplexVector>,
}

impl Scratch {
    fn new(n: usize, m: usize, branches: usize) -> Self {
        let z = || vec![vec![Complex64::new(0.0, 0.0); n]; branches];
        Self {
            stream_bits: vec![0; m],
            tx_bits: vec![0; m],
            detected: vec![0; m],
            xi: z(),
            hs: z(),
            r: z(),
        }
    }
}

struct ErrorRunner<'a> {
    config: &'a ExperimentConfig,
    sigmas: Vec<f64>,
    noise: Vec<NoiseModel>,
}

impl<'a> ErrorRunner<'a> {
    fn new(config: &'a ExperimentConfig) -> Self {
        let noise: Vec<NoiseModel> = (0..config.snr_grid_db.len())
            .map(|g| config.noise_at(g))
            .collect();
        Self {
            config,
            sigmas: noise.iter().map(|n| n.sigma0_sq().sqrt()).collect(),
            noise,
        }
    }

    fn detector(&self, h: &ChannelMatrix) -> Result<Detector> {
        let c = self.config;
        Ok(match c.receiver {
            ReceiverKind::ZfSic => Detector::Sic(SicPlan::new(h, c.ordering)?),
            ReceiverKind::DblastCycled => Detector::Cycled(SicPlan::new(h, c.ordering)?),
            ReceiverKind::LinearZf => {
                Detector::Linear(vec![LinearPlan::new(h, c.receiver, self.noise[0])?])
            }
            ReceiverKind::LinearMmse => Detector::Linear(
                self.noise
                    .iter()
                    .map(|&nm| LinearPlan::new(h, c.receiver, nm))
                    .collect::<Result<_>>()?,
            ),
        })
    }

    fn symbol_block(&self, range: Range<u64>) -> Result<SymbolAccum> {
        let c = self.config;
        let (n, m) = (c.dims.n(), c.dims.m());
        let grid_len = c.snr_grid_db.len();
        let branches = c.modulation.branches();
        let mut acc = SymbolAccum::new(m, grid_len);
        let mut s = Scratch::new(n, m, branches);
        let mut h: Option<ChannelMatrix> = None;
        for t in range {
            let mut rng = trial_rng(c.seed, t);
            match h.as_mut() {
                Some(h) => resample_channel(h, &mut rng),
                None => h = Some(sample_channel(c.dims, &mut rng)),
            }
            let h = h.as_ref().expect("sampled");
            let det = self.detector(h)?;
            let mut nrng = noise_rng(c.seed, t);
            for use_idx in 0..c.noise_trials_per_channel {
                self.draw(&mut nrng, h, &det, use_idx as usize, &mut s);
                for g in 0..grid_len {
                    self.detect_once(h, &det, g, &mut s, &mut acc);
                }
                acc.draws += 1;
            }
            acc.channels += 1;
        }
        Ok(acc)
    }

    /// Draw data and noise for one channel use and form `H s`.
    fn draw(
        &self,
        rng: &mut impl Rng,
        h: &ChannelMatrix,
        det: &Detector,
        use_idx: usize,
        s: &mut Scratch,
    ) {
        let m = s.stream_bits.len();
        let word: u64 = rng.random();
        for (k, b) in s.stream_bits.iter_mut().enumerate() {
            *b = ((word >> k) & 1) as u8;
        }
        match det {
            Detector::Cycled(_) => {
                for k in 0..m {
                    s.tx_bits[dblast_antenna(k, use_idx, m)] = s.stream_bits[k];
                }
            }
            _ => s.tx_bits.copy_from_slice(&s.stream_bits),
        }
        for branch in s.xi.iter_mut() {
            for v in branch.iter_mut() {
                *v = complex_normal(rng);
            }
        }
        for hs in s.hs.iter_mut() {
            hs.fill(Complex64::new(0.0, 0.0));
        }
        for (k, &b) in s.tx_bits.iter().enumerate() {
            let col = h.column(k);
            let (branch, amp) = match self.config.modulation {
                Modulation::Bpsk => (0, 1.0 - 2.0 * f64::from(b)),
                Modulation::Bfsk => (usize::from(b), 1.0),
            };
            for (o, hv) in s.hs[branch].iter_mut().zip(col) {
                *o += hv * amp;
            }
        }
    }

    fn detect_once(
        &self,
        h: &ChannelMatrix,
        det: &Detector,
        g: usize,
        s: &mut Scratch,
        acc: &mut SymbolAccum,
    ) {
        let sigma = self.sigmas[g];
        for ((r, hs), xi) in s.r.iter_mut().zip(&s.hs).zip(&s.xi) {
            for ((ri, &hv), &nv) in r.iter_mut().zip(hs).zip(xi) {
                *ri = hv + nv * sigma;
            }
        }
        let m = s.tx_bits.len();
        let mut any = false;
        let mut bit_errors = 0u64;
        match det {
            Detector::Sic(plan) | Detector::Cycled(plan) => {
                plan.detect_in_place(h, &mut s.r, self.config.modulation, &mut s.detected);
                let mut clean = true;
                for (step, &a) in plan.order().iter().enumerate() {
                    let err = s.detected[a] != s.tx_bits[a];
                    if clean {
                        acc.step_trials[step][g] += 1;
                        acc.step_err[step][g] += u64::from(err);
                    }
                    clean &= !err;
                    any |= err;
                    bit_errors += u64::from(err);
                }
            }
            Detector::Linear(plans) => {
                let plan = if plans.len() == 1 {
                    &plans[0]
                } else {
                    &plans[g]
                };
                plan.detect_into(&s.r, self.config.modulation, &mut s.detected);
                for k in 0..m {
                    let err = s.detected[k] != s.tx_bits[k];
                    acc.step_trials[k][g] += 1;
                    acc.step_err[k][g] += u64::from(err);
                    any |= err;
                    bit_errors += u64::from(err);
                }
            }
        }
        acc.block[g] += u64::from(any);
        acc.bits[g] += bit_errors;
    }

    fn semi_block(&self, range: Range<u64>) -> Result<SemiAccum> {
        let c = self.config;
        let m = c.dims.m();
        let gammas: Vec<f64> = self.noise.iter().map(|nm| nm.gamma0()).collect();
        let mut acc = SemiAccum::new(m, gammas.len());
        let mut h: Option<ChannelMatrix> = None;
        for t in range {
            let mut rng = trial_rng(c.seed, t);
            match h.as_mut() {
                Some(h) => resample_channel(h, &mut rng),
                None => h = Some(sample_channel(c.dims, &mut rng)),
            }
            let plan = SicPlan::new(h.as_ref().expect("sampled"), c.ordering)?;
            for (g, &g0) in gammas.iter().enumerate() {
                let mut log_ok = 0.0;
                for (step, &x) in plan.norms().iter().enumerate() {
                    let pe = c.modulation.ber(g0 * x);
                    log_ok += (-pe).ln_1p();
                    let e = &mut acc.pe[step][g];
                    e.0 += pe;
                    e.1 += pe * pe;
                }
                let pb = -log_ok.exp_m1();
                acc.pb[g].0 += pb;
                acc.pb[g].1 += pb * pb;
            }
            acc.channels += 1;
        }
        Ok(acc)
    }
}

/// Average BLER, TBER and per-step error rates on the SNR grid.
pub fn estimate_error_rates(config: &ExperimentConfig) -> Result<ErrorRates> {
    config.validate()?;
    let runner = ErrorRunner::new(config);
    let m = config.dims.m();
    let g = config.snr_grid_db.len();
    let tag = curve_tag(config);
    let grid = &config.snr_grid_db;
    match config.estimator {
        Estimator::SymbolLevel => {
            let (acc, _) = run_trials(
                config.execution,
                config.channel_trials,
                config.early_stop,
                || SymbolAccum::new(m, g),
                |r| runner.symbol_block(r),
            )?;
            let bits_total = vec![acc.draws * m as u64; g];
            Ok(ErrorRates {
                bler: acc.bler_curve(format!("mc-bler-{tag}-{}", config.modulation.name()), grid),
                tber: Some(EstimatedCurve::from_counts(
                    format!("mc-tber-{tag}-{}", config.modulation.name()),
                    AbscissaUnit::SnrDb,
                    grid,
                    &acc.bits,
                    &bits_total,
                )),
                per_step_ber: (0..m)
                    .map(|s| {
                        EstimatedCurve::from_counts(
                            format!("mc-step{}-ber-{tag}-{}", s + 1, config.modulation.name()),
                            AbscissaUnit::SnrDb,
                            grid,
                            &acc.step_err[s],
                            &acc.step_trials[s],
                        )
                    })
                    .collect(),
                channel_trials: acc.channels,
            })
        }
        Estimator::SemiAnalytic => {
            if !matches!(
                config.receiver,
                ReceiverKind::ZfSic | ReceiverKind::DblastCycled
            ) {
                return Err(Error::Unsupported(format!(
                    "semi-analytic estimation needs independent per-step errors; {} streams share correlated noise",
                    config.receiver.name()
                )));
            }
            let (acc, _) = run_trials(
                config.execution,
                config.channel_trials,
                config.early_stop,
                || SemiAccum::new(m, g),
                |r| runner.semi_block(r),
            )?;
            Ok(ErrorRates {
                bler: EstimatedCurve::from_moments(
                    format!("sa-bler-{tag}-{}", config.modulation.name()),
                    AbscissaUnit::SnrDb,
                    grid,
                    &acc.pb,
                    acc.channels,
                ),
                tber: None,
                per_step_ber: (0..m)
                    .map(|s| {
                        EstimatedCurve::from_moments(
                            format!("sa-step{}-ber-{tag}-{}", s + 1, config.modulation.name()),
                            AbscissaUnit::SnrDb,
                            grid,
                            &acc.pe[s],
                            acc.channels,
                        )
                    })
                    .collect(),
                channel_trials: acc.channels,
            })
        }
    }
}

/// Horizontal offset between two first-step outage curves at one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainRow {
    pub level: f64,
    pub better: OrderingStrategy,
    pub worse: OrderingStrategy,
    /// `10 log10(q_worse / q_better)` where `q` is the outage quantile.
    pub offset_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingGainReport {
    pub dims: SystemDims,
    pub trials: u64,
    /// First-step outage for optimal, suboptimal and no ordering.
    pub curves: Vec<EstimatedCurve>,
    pub rows: Vec<GainRow>,
}

impl OrderingGainReport {
    pub fn offset(
        &self,
        better: OrderingStrategy,
        worse: OrderingStrategy,
        level: f64,
    ) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.better == better && r.worse == worse && r.level == level)
            .map(|r| r.offset_db)
    }
}

/// Outage levels used by [`estimate_ordering_gain`].
pub const GAIN_LEVELS: [f64; 2] = [1e-2, 1e-3];

/// First-step SNR gains of ordering, measured on shared channels. Offsets
/// come from empirical quantiles of the first-step power, i.e. the exact
/// horizontal distance between the empirical CDFs.
pub fn estimate_ordering_gain(
    dims: SystemDims,
    x_grid: &[f64],
    trials: u64,
    seed: u64,
    execution: Execution,
) -> Result<OrderingGainReport> {
    check_grid(x_grid)?;
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    const STRATS: [OrderingStrategy; 3] = OrderingStrategy::ALL;
    let parts = exec::map_blocks(execution, &exec::blocks(0, trials), |range| {
        let mut out: [Vec<f64>; 3] = Default::default();
        let mut h: Option<ChannelMatrix> = None;
        for t in range {
            let mut rng = trial_rng(seed, t);
            match h.as_mut() {
                Some(h) => resample_channel(h, &mut rng),
                None => h = Some(sample_channel(dims, &mut rng)),
            }
            let h = h.as_ref().expect("sampled");
            for (o, &s) in out.iter_mut().zip(STRATS.iter()) {
                o.push(SicPlan::new(h, s)?.norms()[0]);
            }
        }
        Ok(out)
    })?;
    let mut samples: [Vec<f64>; 3] = Default::default();
    for p in parts {
        for (s, v) in samples.iter_mut().zip(p) {
            s.extend(v);
        }
    }
    let mut curves = Vec::with_capacity(3);
    for (s, strat) in samples.iter_mut().zip(STRATS) {
        s.sort_by(f64::total_cmp);
        let hits: Vec<u64> = x_grid
            .iter()
            .map(|&x| s.partition_point(|&v| v <= x) as u64)
            .collect();
        curves.push(EstimatedCurve::from_counts(
            format!("mc-f1-{dims}-{}", strat.name()),
            AbscissaUnit::NormalizedSnr,
            x_grid,
            &hits,
            &vec![trials; x_grid.len()],
        ));
    }
    let mut rows = Vec::new();
    let pairs = [(0usize, 2usize), (1, 2), (0, 1)];
    for &level in &GAIN_LEVELS {
        for &(b, w) in &pairs {
            let (qb, qw) = (quantile(&samples[b], level), quantile(&samples[w], level));
            rows.push(GainRow {
                level,
                better: STRATS[b],
                worse: STRATS[w],
                offset_db: 10.0 * (qb / qw).log10(),
            });
        }
    }
    Ok(OrderingGainReport {
        dims,
        trials,
        curves,
        rows,
    })
}

/// Linear-interpolated empirical quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(&next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

/// BLER of the genie-aided chain `k = m, ..., 2` on shared channels.
pub fn estimate_genie_chain(config: &ExperimentConfig) -> Result<Vec<(usize, EstimatedCurve)>> {
    let mut out = Vec::new();
    for k in (2..=config.dims.m()).rev() {
        let mut c = config.clone();
        c.dims = config.dims.with_tx(k)?;
        out.push((k, estimate_error_rates(&c)?.bler));
    }
    Ok(out)
}
