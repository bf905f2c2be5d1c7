//! Orchestration: figure bundles, custom runs, manifests and replay.
//!
//! A bundle is a directory with one CSV per curve, an optional
//! `comparison.csv` of horizontal offsets and a `manifest.json` that lists
//! every file and holds enough to re-run the bundle bit for bit.

mod compare;
mod config;
mod csv;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use compare::{compare_curves, OffsetRow};
pub use config::{OutputKind, Overrides, RunConfig, DEFAULT_OUTPUTS};
pub use csv::{
    analytic_csv, estimated_csv, fmt_prob, parse_curve_csv, CsvCurve, Curve, CSV_HEADER,
};

use crate::analytic::{
    b1_asymptote, bler_approx, build_coefficient_table, f1_approx_highsnr, f1_bound,
    linear_bler_approx, log_grid, mrc_outage, step_outage_3x3, tber_approx, AbscissaUnit,
    AnalyticCurve, BlerVariant, DForm, Integrity,
};
use crate::channel::{db_to_linear, Modulation, SystemDims};
use crate::error::{config_error, Error, Result};
use crate::exec::Execution;
use crate::montecarlo::{
    estimate_error_rates, estimate_ordering_gain, estimate_step_outage, EstimatedCurve,
    ExperimentConfig, OrderingGainReport,
};
use crate::receivers::{OrderingStrategy, ReceiverKind};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const COMPARISON_HEADER: &str = "curve_a,curve_b,level,offset_db,status";

/// Probability levels at which bundle curves are compared.
pub const COMPARISON_LEVELS: [f64; 2] = [1e-2, 1e-3];

/// Channel trials for the outage figures at desk scale and at full scale.
pub const OUTAGE_TRIALS: (u64, u64) = (500_000, 5_000_000);
/// Channel trials for the error-rate figures (each with 100 noise draws).
pub const ERROR_TRIALS: (u64, u64) = (100_000, 1_000_000);

/// Systems shown in the first-step outage figure.
pub const FIG4_DIMS: [(usize, usize); 5] = [(2, 2), (3, 3), (4, 4), (3, 2), (4, 3)];
pub const FIG5_DIMS: [(usize, usize); 2] = [(3, 3), (4, 3)];
pub const FIG6_SIZES: [usize; 5] = [2, 3, 4, 5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    /// 3x3 per-step outage.
    Fig2,
    /// 4x4 per-step outage.
    Fig3,
    /// First-step outage across system sizes.
    Fig4,
    /// 3x3 and 4x3 BLER/TBER with BPSK.
    Fig5,
    /// m x m BLER with BPSK.
    Fig6,
}

impl FigureId {
    pub const ALL: [FigureId; 5] = [Self::Fig2, Self::Fig3, Self::Fig4, Self::Fig5, Self::Fig6];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
            Self::Fig5 => "fig5",
            Self::Fig6 => "fig6",
        }
    }

    /// Default channel trials for this figure.
    pub fn default_trials(&self, full: bool) -> u64 {
        let (desk, large) = match self {
            Self::Fig2 | Self::Fig3 | Self::Fig4 => OUTAGE_TRIALS,
            Self::Fig5 | Self::Fig6 => ERROR_TRIALS,
        };
        if full {
            large
        } else {
            desk
        }
    }
}

impl std::str::FromStr for FigureId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                config_error(
                    "figure",
                    format!("unknown figure `{s}`; expected fig2..fig6"),
                )
            })
    }
}

/// Knobs of a figure run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureOptions {
    pub seed: u64,
    /// Channel trials; `None` uses the figure default, `Some(0)` skips
    /// Monte-Carlo entirely.
    pub trials: Option<u64>,
    /// Full trial budgets instead of the 10x smaller desk defaults.
    pub full: bool,
    #[serde(skip)]
    pub threads: usize,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: None,
            full: false,
            threads: 0,
        }
    }
}

impl FigureOptions {
    fn trials(&self, id: FigureId) -> u64 {
        self.trials.unwrap_or_else(|| id.default_trials(self.full))
    }

    fn execution(&self) -> Execution {
        Execution::from_threads(self.threads)
    }
}

/// What produced a bundle; enough to produce it again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunRequest {
    Figure {
        id: FigureId,
        options: FigureOptions,
    },
    /// A custom run, stored as its fully explicit configuration file.
    Custom { config: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub request: RunRequest,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub wall_clock_s: f64,
    /// How each closed form was evaluated, keyed by formula and system.
    pub formula_versions: BTreeMap<String, String>,
    /// Every file in the bundle except the manifest, relative to its
    /// directory.
    pub outputs: Vec<String>,
    /// Formula-integrity events. Non-empty means some published formula
    /// was replaced.
    pub discrepancies: Vec<String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| config_error(path.display().to_string(), e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl Bundle {
    pub fn has_discrepancies(&self) -> bool {
        !self.manifest.discrepancies.is_empty()
    }
}

struct ComparisonRow {
    a: String,
    b: String,
    level: f64,
    offset_db: Option<f64>,
    status: &'static str,
}

/// Collects files, formula versions and comparisons while a bundle runs.
struct BundleWriter {
    dir: PathBuf,
    outputs: Vec<String>,
    formulas: BTreeMap<String, String>,
    discrepancies: Vec<String>,
    comparisons: Vec<ComparisonRow>,
    started: Instant,
    started_at: u64,
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn check_curve(label: &str, grid: &[f64], values: &[&[f64]]) -> Result<()> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invariant(format!(
            "{label}: grid not strictly increasing"
        )));
    }
    for col in values {
        if let Some(v) = col.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invariant(format!(
                "{label}: probability {v} outside [0, 1]"
            )));
        }
    }
    Ok(())
}

impl BundleWriter {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
            formulas: BTreeMap::new(),
            discrepancies: Vec::new(),
            comparisons: Vec::new(),
            started: Instant::now(),
            started_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    fn write_file(&mut self, name: String, body: &str) -> Result<()> {
        if self.outputs.contains(&name) {
            return Err(Error::Invariant(format!("two outputs named {name}")));
        }
        fs::write(self.dir.join(&name), body)?;
        self.outputs.push(name);
        Ok(())
    }

    fn analytic(&mut self, curve: &AnalyticCurve) -> Result<()> {
        check_curve(&curve.label, &curve.grid, &[&curve.values])?;
        self.write_file(
            format!("{}.csv", file_stem(&curve.label)),
            &analytic_csv(curve),
        )
    }

    fn estimated(&mut self, curve: &EstimatedCurve) -> Result<()> {
        check_curve(
            &curve.label,
            &curve.grid,
            &[&curve.estimates, &curve.ci_low, &curve.ci_high],
        )?;
        self.write_file(
            format!("{}.csv", file_stem(&curve.label)),
            &estimated_csv(curve),
        )
    }

    /// Record how the first-step bound for `dims` is evaluated.
    fn note_bound(&mut self, dims: SystemDims) -> Result<()> {
        let table = build_coefficient_table(dims)?;
        let version = match (table.integrity(), table.d_form()) {
            (Integrity::Failed { .. }, _) => "quadrature",
            (_, DForm::Published) => "published",
            (_, DForm::Factorial) => "factorial-corrected",
        };
        self.formulas
            .insert(format!("first-step-bound/{dims}"), version.into());
        if let Some(d) = table.discrepancy() {
            let line = format!("first-step bound {dims}: {d}");
            if !self.discrepancies.contains(&line) {
                self.discrepancies.push(line);
            }
        }
        Ok(())
    }

    fn compare(&mut self, a: &dyn Curve, b: &dyn Curve) {
        let rows = compare_curves(a, b, &COMPARISON_LEVELS);
        for (i, &level) in COMPARISON_LEVELS.iter().enumerate() {
            let (offset_db, status) = match &rows {
                Ok(r) if r[i].flagged() => (None, "outside-range"),
                Ok(r) => (r[i].offset_db, "ok"),
                Err(_) => (None, "disjoint"),
            };
            self.comparisons.push(ComparisonRow {
                a: a.label().into(),
                b: b.label().into(),
                level,
                offset_db,
                status,
            });
        }
    }

    fn gain_table(&mut self, report: &OrderingGainReport) -> Result<()> {
        let mut s = String::from("level,better,worse,offset_db\n");
        for r in &report.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.4}",
                fmt_prob(r.level),
                r.better.name(),
                r.worse.name(),
                r.offset_db
            );
        }
        self.write_file(format!("ordering-gain-{}.csv", report.dims), &s)
    }

    fn finish(mut self, request: RunRequest, seed: u64) -> Result<Bundle> {
        if !self.comparisons.is_empty() {
            let mut s = format!("{COMPARISON_HEADER}\n");
            for r in &self.comparisons {
                let off = r.offset_db.map(|v| format!("{v:.4}")).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{},{},{},{off},{}",
                    r.a,
                    r.b,
                    fmt_prob(r.level),
                    r.status
                );
            }
            self.write_file(COMPARISON_FILE.into(), &s)?;
        }
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            request,
            seed,
            started_at: self.started_at,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            formula_versions: self.formulas,
            outputs: self.outputs,
            discrepancies: self.discrepancies,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(self.dir.join(MANIFEST_FILE), json + "\n")?;
        Ok(Bundle {
            dir: self.dir,
            manifest,
        })
    }
}

fn dims(n: usize, m: usize) -> SystemDims {
    SystemDims::new(n, m).expect("fixed figure dimensions are valid")
}

fn x_curve(label: String, grid: &[f64], f: impl Fn(f64) -> Result<f64>) -> Result<AnalyticCurve> {
    AnalyticCurve::tabulate(label, AbscissaUnit::NormalizedSnr, grid, f)
}

fn snr_curve(label: String, grid: &[f64], f: impl Fn(f64) -> Result<f64>) -> Result<AnalyticCurve> {
    AnalyticCurve::tabulate(label, AbscissaUnit::SnrDb, grid, |db| f(db_to_linear(db)))
}

fn outage_grid() -> Vec<f64> {
    log_grid(1e-3, 10.0, 25)
}

fn snr_grid() -> Vec<f64> {
    (0..=10).map(|i| 2.5 * i as f64).collect()
}

fn mrc_refs(
    w: &mut BundleWriter,
    grid: &[f64],
    orders: std::ops::RangeInclusive<usize>,
) -> Result<Vec<AnalyticCurve>> {
    let mut out = Vec::new();
    for k in orders {
        let c = x_curve(format!("mrc-order{k}"), grid, |x| mrc_outage(k, x))?;
        w.analytic(&c)?;
        out.push(c);
    }
    Ok(out)
}

fn step_outage_mc(
    d: SystemDims,
    opts: &FigureOptions,
    trials: u64,
    grid: &[f64],
) -> Result<Vec<EstimatedCurve>> {
    let mut c = ExperimentConfig::new(d);
    c.channel_trials = trials;
    c.seed = opts.seed;
    c.x_grid = grid.to_vec();
    c.execution = opts.execution();
    estimate_step_outage(&c)
}

fn fig2(w: &mut BundleWriter, opts: &FigureOptions) -> Result<()> {
    let d = dims(3, 3);
    let g = outage_grid();
    w.note_bound(d)?;
    w.note_bound(dims(3, 2))?;
    let bound = x_curve(format!("bound-step1-{d}"), &g, |x| f1_bound(d, x))?;
    let approx = x_curve(format!("approx-step1-{d}"), &g, |x| f1_approx_highsnr(d, x))?;
    let step2 = x_curve(format!("bound-step2-{d}"), &g, |x| {
        Ok(step_outage_3x3(2, x)?.value)
    })?;
    let step3 = x_curve(format!("approx-step3-{d}"), &g, |x| {
        Ok(step_outage_3x3(3, x)?.value)
    })?;
    for c in [&bound, &approx, &step2, &step3] {
        w.analytic(c)?;
    }
    let mrc = mrc_refs(w, &g, 1..=3)?;
    let trials = opts.trials(FigureId::Fig2);
    if trials > 0 {
        let mc = step_outage_mc(d, opts, trials, &g)?;
        for c in &mc {
            w.estimated(c)?;
        }
        w.compare(&mc[0], &bound);
        w.compare(&mc[0], &approx);
        w.compare(&mc[1], &mrc[1]);
        w.compare(&mc[1], &step2);
        w.compare(&mc[2], &step3);
    }
    Ok(())
}

fn fig3(w: &mut BundleWriter, opts: &FigureOptions) -> Result<()> {
    let d = dims(4, 4);
    let g = outage_grid();
    let mut bounds = Vec::new();
    for (step, k) in [(1, 4), (2, 3), (3, 2)] {
        let sub = dims(4, k);
        w.note_bound(sub)?;
        let c = x_curve(format!("bound-step{step}-{d}"), &g, |x| f1_bound(sub, x))?;
        w.analytic(&c)?;
        bounds.push(c);
    }
    let approx = x_curve(format!("approx-step1-{d}"), &g, |x| f1_approx_highsnr(d, x))?;
    w.analytic(&approx)?;
    let mrc = mrc_refs(w, &g, 1..=4)?;
    let trials = opts.trials(FigureId::Fig3);
    if trials > 0 {
        let mc = step_outage_mc(d, opts, trials, &g)?;
        for c in &mc {
            w.estimated(c)?;
        }
        w.compare(&mc[0], &bounds[0]);
        w.compare(&mc[0], &approx);
        w.compare(&mc[1], &bounds[1]);
        w.compare(&mc[2], &bounds[2]);
        w.compare(&mc[2], &mrc[2]);
    }
    Ok(())
}

fn fig4(w: &mut BundleWriter, opts: &FigureOptions) -> Result<()> {
    let g = log_grid(1e-4, 10.0, 31);
    let trials = opts.trials(FigureId::Fig4);
    for (n, m) in FIG4_DIMS {
        let d = dims(n, m);
        w.note_bound(d)?;
        let bound = x_curve(format!("bound-f1-{d}"), &g, |x| f1_bound(d, x))?;
        let asym = x_curve(format!("asymptote-f1-{d}"), &g, |x| b1_asymptote(d, x))?;
        let approx = x_curve(format!("approx-f1-{d}"), &g, |x| f1_approx_highsnr(d, x))?;
        let unordered = x_curve(format!("unordered-f1-{d}"), &g, |x| {
            mrc_outage(d.diversity(), x)
        })?;
        for c in [&bound, &asym, &approx, &unordered] {
            w.analytic(c)?;
        }
        w.compare(&approx, &unordered);
        if trials > 0 {
            let report = estimate_ordering_gain(d, &g, trials, opts.seed, opts.execution())?;
            for c in &report.curves {
                w.estimated(c)?;
            }
            w.gain_table(&report)?;
            let optimal = &report.curves[0];
            w.compare(optimal, &approx);
            w.compare(optimal, &bound);
            w.compare(&report.curves[2], &unordered);
        }
    }
    Ok(())
}

fn error_mc(
    d: SystemDims,
    opts: &FigureOptions,
    trials: u64,
    grid: &[f64],
) -> Result<crate::montecarlo::ErrorRates> {
    let mut c = ExperimentConfig::new(d);
    c.channel_trials = trials;
    c.seed = opts.seed;
    c.snr_grid_db = grid.to_vec();
    c.execution = opts.execution();
    estimate_error_rates(&c)
}

fn bler_curves(
    w: &mut BundleWriter,
    d: SystemDims,
    g: &[f64],
    variants: &[BlerVariant],
) -> Result<Vec<AnalyticCurve>> {
    let mut out = Vec::new();
    for &v in variants {
        let c = snr_curve(format!("approx-bler-{}-{d}-bpsk", v.name()), g, |g0| {
            bler_approx(d, g0, Modulation::Bpsk, v)
        })?;
        w.analytic(&c)?;
        out.push(c);
    }
    Ok(out)
}

fn fig5(w: &mut BundleWriter, opts: &FigureOptions) -> Result<()> {
    let g = snr_grid();
    let trials = opts.trials(FigureId::Fig5);
    for (n, m) in FIG5_DIMS {
        let d = dims(n, m);
        let bler = bler_curves(w, d, &g, &BlerVariant::ALL)?;
        let tber = snr_curve(format!("approx-tber-{d}-bpsk"), &g, |g0| {
            tber_approx(d, g0, Modulation::Bpsk)
        })?;
        w.analytic(&tber)?;
        if trials > 0 {
            let mc = error_mc(d, opts, trials, &g)?;
            w.estimated(&mc.bler)?;
            let mc_tber = mc.tber()?;
            w.estimated(mc_tber)?;
            for c in &mc.per_step_ber {
                w.estimated(c)?;
            }
            for c in &bler {
                w.compare(&mc.bler, c);
            }
            w.compare(mc_tber, &tber);
        }
    }
    Ok(())
}

fn fig6(w: &mut BundleWriter, opts: &FigureOptions) -> Result<()> {
    let g = snr_grid();
    let trials = opts.trials(FigureId::Fig6);
    for m in FIG6_SIZES {
        let d = dims(m, m);
        let bler = bler_curves(w, d, &g, &[BlerVariant::FirstStep, BlerVariant::HighSnr])?;
        if trials > 0 {
            let mc = error_mc(d, opts, trials, &g)?;
            w.estimated(&mc.bler)?;
            for c in &bler {
                w.compare(&mc.bler, c);
            }
        }
    }
    Ok(())
}

/// Produce a figure bundle in `dir`.
pub fn run_figure(id: FigureId, options: &FigureOptions, dir: &Path) -> Result<Bundle> {
    let mut w = BundleWriter::new(dir)?;
    match id {
        FigureId::Fig2 => fig2(&mut w, options)?,
        FigureId::Fig3 => fig3(&mut w, options)?,
        FigureId::Fig4 => fig4(&mut w, options)?,
        FigureId::Fig5 => fig5(&mut w, options)?,
        FigureId::Fig6 => fig6(&mut w, options)?,
    }
    w.finish(
        RunRequest::Figure {
            id,
            options: options.clone(),
        },
        options.seed,
    )
}

fn custom_analytic(w: &mut BundleWriter, e: &ExperimentConfig) -> Result<Vec<AnalyticCurve>> {
    let d = e.dims;
    let xg = &e.x_grid;
    let sg = &e.snr_grid_db;
    let md = e.modulation;
    w.note_bound(d)?;
    let mut out = vec![
        x_curve(format!("approx-f1-{d}"), xg, |x| f1_approx_highsnr(d, x))?,
        x_curve(format!("bound-f1-{d}"), xg, |x| f1_bound(d, x))?,
        x_curve(format!("asymptote-f1-{d}"), xg, |x| b1_asymptote(d, x))?,
        x_curve(format!("unordered-f1-{d}"), xg, |x| {
            mrc_outage(d.diversity(), x)
        })?,
    ];
    match e.receiver {
        ReceiverKind::LinearZf | ReceiverKind::LinearMmse => {
            out.push(snr_curve(
                format!("approx-bler-linear-{d}-{}", md.name()),
                sg,
                |g0| Ok(linear_bler_approx(d, g0, md)?.exact),
            )?);
        }
        ReceiverKind::ZfSic | ReceiverKind::DblastCycled => {
            for v in BlerVariant::ALL {
                out.push(snr_curve(
                    format!("approx-bler-{}-{d}-{}", v.name(), md.name()),
                    sg,
                    |g0| bler_approx(d, g0, md, v),
                )?);
            }
            out.push(snr_curve(
                format!("approx-tber-{d}-{}", md.name()),
                sg,
                |g0| tber_approx(d, g0, md),
            )?);
        }
    }
    for c in &out {
        w.analytic(c)?;
    }
    Ok(out)
}

/// Run a validated configuration into `dir`.
pub fn run_custom(config: &RunConfig, dir: &Path) -> Result<Bundle> {
    config.validate()?;
    let e = config.experiment();
    let mut w = BundleWriter::new(dir)?;
    let wants = |k: OutputKind| config.outputs.contains(&k);
    let analytic = if wants(OutputKind::Analytic) {
        custom_analytic(&mut w, &e)?
    } else {
        Vec::new()
    };
    let comparable = e.receiver == ReceiverKind::ZfSic && e.ordering == OrderingStrategy::Optimal;
    if wants(OutputKind::Outage) {
        let mc = estimate_step_outage(&e)?;
        for c in &mc {
            w.estimated(c)?;
        }
        if comparable && !analytic.is_empty() {
            w.compare(&mc[0], &analytic[0]);
        }
    }
    if wants(OutputKind::ErrorRates) {
        let mc = estimate_error_rates(&e)?;
        w.estimated(&mc.bler)?;
        if let Some(t) = &mc.tber {
            w.estimated(t)?;
        }
        for c in &mc.per_step_ber {
            w.estimated(c)?;
        }
        if comparable && !analytic.is_empty() {
            w.compare(&mc.bler, &analytic[4]);
        }
    }
    if wants(OutputKind::OrderingGain) {
        let report =
            estimate_ordering_gain(e.dims, &e.x_grid, e.channel_trials, e.seed, e.execution)?;
        for c in &report.curves {
            w.estimated(c)?;
        }
        w.gain_table(&report)?;
    }
    w.finish(
        RunRequest::Custom {
            config: config.to_toml(),
        },
        e.seed,
    )
}

/// Re-run the request recorded in a manifest into `dir`.
pub fn replay(manifest: &Path, dir: &Path, threads: usize) -> Result<Bundle> {
    match RunManifest::read(manifest)?.request {
        RunRequest::Figure { id, mut options } => {
            options.threads = threads;
            run_figure(id, &options, dir)
        }
        RunRequest::Custom { config } => {
            let mut c = RunConfig::from_toml(&config)?;
            c.threads = threads;
            run_custom(&c, dir)
        }
    }
}

/// Offsets between two curve files, as CSV text.
pub fn compare_files(a: &Path, b: &Path, levels: &[f64]) -> Result<String> {
    let read = |p: &Path| -> Result<CsvCurve> {
        let text = fs::read_to_string(p)
            .map_err(|e| config_error(p.display().to_string(), e.to_string()))?;
        parse_curve_csv(&text).map_err(|e| match e {
            Error::Config { path, reason } => {
                config_error(format!("{}:{path}", p.display()), reason)
            }
            other => other,
        })
    };
    let (ca, cb) = (read(a)?, read(b)?);
    let rows = compare_curves(&ca, &cb, levels)?;
    let mut s = format!("{COMPARISON_HEADER}\n");
    for r in rows {
        let (off, status) = match r.offset_db {
            Some(v) => (format!("{v:.4}"), "ok"),
            None => (String::new(), "outside-range"),
        };
        let _ = writeln!(
            s,
            "{},{},{},{off},{status}",
            ca.label,
            cb.label,
            fmt_prob(r.level)
        );
    }
    Ok(s)
}

/// Human-readable coefficient table of the closed-form first-step bound:
/// the exact rational coefficient of `x^e exp(-l x)` for every nonzero
/// term, plus the integrity verdict.
pub fn coefficient_table_text(dims: SystemDims) -> Result<String> {
    let t = build_coefficient_table(dims)?;
    let mut s = String::new();
    let _ = writeln!(s, "system {dims}, diversity {}", dims.diversity());
    let form = match t.d_form() {
        DForm::Published => "published",
        DForm::Factorial => "factorial-corrected",
    };
    let verdict = match t.integrity() {
        Integrity::Verified { max_rel_err } => format!("verified (max rel err {max_rel_err:.2e})"),
        Integrity::Corrected { max_rel_err, .. } => {
            format!("corrected (max rel err {max_rel_err:.2e})")
        }
        Integrity::Failed { .. } => "failed, quadrature used".into(),
    };
    let _ = writeln!(s, "d_p form: {form}; integrity: {verdict}");
    if let Some(d) = t.discrepancy() {
        let _ = writeln!(s, "discrepancy: {d}");
    }
    let _ = writeln!(s, "l,e,coefficient,approx");
    for (l, row) in t.exp_poly().iter().enumerate() {
        for e in 0..row.len() {
            let c = t.exp_poly_exact(l, e);
            if c != num_rational::BigRational::default() {
                let _ = writeln!(s, "{l},{e},{c},{:.12e}", row[e]);
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(dir: &Path, name: &str) -> String {
        fs::read_to_string(dir.join(name)).unwrap()
    }

    #[test]
    fn figure_ids_parse() {
        assert_eq!("fig4".parse::<FigureId>().unwrap(), FigureId::Fig4);
        assert!(matches!(
            "fig9".parse::<FigureId>(),
            Err(Error::Config { .. })
        ));
        assert_eq!(
            FigureId::Fig2.default_trials(true),
            10 * FigureId::Fig2.default_trials(false)
        );
    }

    #[test]
    fn analytic_only_fig4_bundle() {
        let tmp = tempfile::tempdir().unwrap();
        let opts = FigureOptions {
            trials: Some(0),
            ..Default::default()
        };
        let b = run_figure(FigureId::Fig4, &opts, tmp.path()).unwrap();
        assert!(!b.has_discrepancies());
        assert!(b.manifest.outputs.iter().all(|f| !f.starts_with("mc-")));
        for (n, m) in FIG4_DIMS {
            let d = dims(n, m);
            for kind in ["bound", "approx", "asymptote"] {
                assert!(b.manifest.outputs.contains(&format!("{kind}-f1-{d}.csv")));
            }
            assert_eq!(
                b.manifest.formula_versions[&format!("first-step-bound/{d}")],
                "published"
            );
        }
        let cmp = read(tmp.path(), COMPARISON_FILE);
        let line = cmp
            .lines()
            .find(|l| l.starts_with("approx-f1-4x4,unordered-f1-4x4,1.0"))
            .unwrap();
        let off: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((off - 10.0 * 4f64.log10()).abs() < 0.05, "{line}");
        let m: RunManifest = RunManifest::read(&tmp.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m, b.manifest);
    }

    #[test]
    fn custom_run_is_reproducible_and_replayable() {
        let text = "[dims]\nn = 3\nm = 2\n[simulation]\nchannel_trials = 3000\nnoise_trials_per_channel = 2\n\
                    [grid]\nsnr_db = [0.0, 10.0]\nx = [0.01, 0.1, 1.0]\n\
                    [output]\noutputs = [\"analytic\", \"outage\", \"error-rates\", \"ordering-gain\"]\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        let (a, b, c) = (
            tempfile::tempdir().unwrap(),
            tempfile::tempdir().unwrap(),
            tempfile::tempdir().unwrap(),
        );
        let first = run_custom(&cfg, a.path()).unwrap();
        let mut seq = cfg.clone();
        seq.threads = 1;
        run_custom(&seq, b.path()).unwrap();
        replay(&a.path().join(MANIFEST_FILE), c.path(), 2).unwrap();
        assert!(first
            .manifest
            .outputs
            .contains(&COMPARISON_FILE.to_string()));
        for f in &first.manifest.outputs {
            let body = read(a.path(), f);
            assert_eq!(body, read(b.path(), f), "{f}");
            assert_eq!(body, read(c.path(), f), "{f}");
        }
    }

    #[test]
    fn five_receiver_bound_logs_discrepancy() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            outputs: vec![OutputKind::Analytic],
            ..RunConfig::new(dims(5, 4))
        };
        let b = run_custom(&cfg, tmp.path()).unwrap();
        assert!(b.has_discrepancies());
        assert_eq!(
            b.manifest.formula_versions["first-step-bound/5x4"],
            "factorial-corrected"
        );
    }

    #[test]
    fn coefficient_text_lists_terms() {
        let s = coefficient_table_text(dims(3, 3)).unwrap();
        assert!(s.contains("integrity: verified"));
        assert!(
            s.lines()
                .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()))
                .count()
                > 3
        );
    }
}
