//! Run configuration files.
//!
//! TOML with five sections. Only `[dims]` is required:
//!
//! ```toml
//! [dims]
//! n = 4
//! m = 3
//!
//! [receiver]
//! kind = "zf-sic"          # zf-sic | linear-zf | linear-mmse | dblast-cycled
//! ordering = "optimal"     # optimal | suboptimal | none
//! modulation = "bpsk"      # bpsk | bfsk
//!
//! [simulation]
//! channel_trials = 1000000
//! noise_trials_per_channel = 100
//! seed = 1
//! estimator = "symbol-level"   # symbol-level | semi-analytic
//! early_stop = 0.05            # optional relative 95% half-width target
//! threads = 0                  # 0 = all cores, 1 = sequential
//!
//! [grid]
//! snr_db = [0.0, 5.0, 10.0]
//! x = [0.001, 0.01, 0.1, 1.0]
//!
//! [output]
//! outputs = ["analytic", "outage"]   # also error-rates, ordering-gain
//! dir = "out"
//! ```
//!
//! Precedence: built-in defaults, then the file, then command-line flags.
//! Unknown keys are rejected and every error names the offending key.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::channel::{Modulation, SystemDims};
use crate::error::{config_error, Error, Result};
use crate::exec::Execution;
use crate::montecarlo::{Estimator, ExperimentConfig};
use crate::receivers::{OrderingStrategy, ReceiverKind};

/// What a custom run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    /// Closed forms and approximations for the configured system.
    Analytic,
    /// Monte-Carlo per-step outage.
    Outage,
    /// Monte-Carlo BLER, TBER and per-step error rates.
    ErrorRates,
    /// Monte-Carlo first-step ordering gains.
    OrderingGain,
}

impl OutputKind {
    pub fn is_monte_carlo(&self) -> bool {
        !matches!(self, OutputKind::Analytic)
    }
}

/// Error-rate simulation is opt-in: at the default budget it dominates the
/// run time.
pub const DEFAULT_OUTPUTS: [OutputKind; 2] = [OutputKind::Analytic, OutputKind::Outage];

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimsSection {
    n: Option<usize>,
    m: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReceiverSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<ReceiverKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ordering: Option<OrderingStrategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    modulation: Option<Modulation>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    channel_trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_trials_per_channel: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimator: Option<Estimator>,
    #[serde(skip_serializing_if = "Option::is_none")]
    early_stop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    snr_db: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    outputs: Option<Vec<OutputKind>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dims: Option<DimsSection>,
    #[serde(default)]
    receiver: ReceiverSection,
    #[serde(default)]
    simulation: SimulationSection,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    output: OutputSection,
}

/// A validated custom run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    /// `0` = all cores, `1` = sequential. Never affects results.
    pub threads: usize,
    pub outputs: Vec<OutputKind>,
    pub out_dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// Channel trials; `0` drops every Monte-Carlo output.
    pub trials: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(dims: SystemDims) -> Self {
        Self {
            experiment: ExperimentConfig::new(dims),
            threads: 0,
            outputs: DEFAULT_OUTPUTS.to_vec(),
            out_dir: None,
        }
    }

    /// Parse and validate a configuration file body.
    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Value = text
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| config_error("<toml>", e.message().to_string()))?;
        let file: ConfigFile = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            config_error(
                if path == "." { "<root>".into() } else { path },
                e.inner().to_string(),
            )
        })?;
        Self::from_file(file)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text)
    }

    fn from_file(file: ConfigFile) -> Result<Self> {
        let dims = file
            .dims
            .ok_or_else(|| config_error("dims", "missing section"))?;
        let n = dims.n.ok_or_else(|| config_error("dims.n", "missing"))?;
        let m = dims.m.ok_or_else(|| config_error("dims.m", "missing"))?;
        let dims = SystemDims::new(n, m).map_err(|e| config_error("dims", e.to_string()))?;
        let mut run = Self::new(dims);
        let e = &mut run.experiment;
        let r = file.receiver;
        e.receiver = r.kind.unwrap_or(e.receiver);
        e.ordering = r.ordering.unwrap_or(e.ordering);
        e.modulation = r.modulation.unwrap_or(e.modulation);
        let s = file.simulation;
        e.channel_trials = s.channel_trials.unwrap_or(e.channel_trials);
        e.noise_trials_per_channel = s
            .noise_trials_per_channel
            .unwrap_or(e.noise_trials_per_channel);
        e.seed = s.seed.unwrap_or(e.seed);
        e.estimator = s.estimator.unwrap_or(e.estimator);
        e.early_stop = s.early_stop.or(e.early_stop);
        if let Some(g) = file.grid.snr_db {
            e.snr_grid_db = g;
        }
        if let Some(g) = file.grid.x {
            e.x_grid = g;
        }
        run.threads = s.threads.unwrap_or(run.threads);
        if let Some(o) = file.output.outputs {
            run.outputs = o;
        }
        run.out_dir = file.output.dir;
        run.validate()?;
        Ok(run)
    }

    /// Flags win over file values.
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.experiment.seed = seed;
        }
        match o.trials {
            Some(0) => self.outputs.retain(|k| !k.is_monte_carlo()),
            Some(t) => self.experiment.channel_trials = t,
            None => {}
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
        if o.out_dir.is_some() {
            self.out_dir = o.out_dir.clone();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.outputs.is_empty() {
            return Err(config_error("output.outputs", "nothing to do"));
        }
        // TOML integers are signed 64-bit; larger values could not be replayed.
        let e = &self.experiment;
        for (key, v) in [
            ("simulation.seed", e.seed),
            ("simulation.channel_trials", e.channel_trials),
            (
                "simulation.noise_trials_per_channel",
                e.noise_trials_per_channel,
            ),
        ] {
            if v > i64::MAX as u64 {
                return Err(config_error(key, format!("{v} exceeds {}", i64::MAX)));
            }
        }
        self.experiment.validate().map_err(|e| match e {
            Error::InvalidArgument { name, reason } => config_error(key_path(name), reason),
            other => other,
        })
    }

    /// The experiment with the configured thread count applied.
    pub fn experiment(&self) -> ExperimentConfig {
        let mut e = self.experiment.clone();
        e.execution = Execution::from_threads(self.threads);
        e
    }

    /// Fully explicit TOML that parses back to this configuration. Thread
    /// count and output directory are left out: they never change results.
    pub fn to_toml(&self) -> String {
        let e = &self.experiment;
        let file = ConfigFile {
            dims: Some(DimsSection {
                n: Some(e.dims.n()),
                m: Some(e.dims.m()),
            }),
            receiver: ReceiverSection {
                kind: Some(e.receiver),
                ordering: Some(e.ordering),
                modulation: Some(e.modulation),
            },
            simulation: SimulationSection {
                channel_trials: Some(e.channel_trials),
                noise_trials_per_channel: Some(e.noise_trials_per_channel),
                seed: Some(e.seed),
                estimator: Some(e.estimator),
                early_stop: e.early_stop,
                threads: None,
            },
            grid: GridSection {
                snr_db: Some(e.snr_grid_db.clone()),
                x: Some(e.x_grid.clone()),
            },
            output: OutputSection {
                outputs: Some(self.outputs.clone()),
                dir: None,
            },
        };
        toml::to_string(&file).expect("plain data serializes")
    }
}

fn key_path(field: &str) -> String {
    match field {
        "snr_grid_db" => "grid.snr_db".into(),
        "x_grid" => "grid.x".into(),
        other => format!("simulation.{other}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_beyond_toml_range_are_rejected() {
        let mut c = RunConfig::new(SystemDims::new(3, 3).unwrap());
        let err = c
            .apply(&Overrides {
                seed: Some(u64::MAX),
                ..Default::default()
            })
            .unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "simulation.seed"));
    }

    fn path_of(r: Result<RunConfig>) -> String {
        match r {
            Err(Error::Config { path, .. }) => path,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_toml("[dims]\nn = 4\nm = 3\n").unwrap();
        let d = ExperimentConfig::new(SystemDims::new(4, 3).unwrap());
        assert_eq!(c.experiment, d);
        assert_eq!(c.outputs, DEFAULT_OUTPUTS.to_vec());
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(
            path_of(RunConfig::from_toml("[dims]\nn = 2\nm = 3\n")),
            "dims"
        );
        assert_eq!(path_of(RunConfig::from_toml("[receiver]\n")), "dims");
        assert_eq!(path_of(RunConfig::from_toml("[dims]\nn = 3\n")), "dims.m");
        assert_eq!(
            path_of(RunConfig::from_toml(
                "[dims]\nn = 3\nm = 3\n[receiver]\nkind = \"ml\"\n"
            )),
            "receiver.kind"
        );
        assert_eq!(
            path_of(RunConfig::from_toml(
                "[dims]\nn = 3\nm = 3\n[simulation]\ntrials = 5\n"
            )),
            "simulation.trials"
        );
        assert_eq!(
            path_of(RunConfig::from_toml(
                "[dims]\nn = 3\nm = 3\n[grid]\nsnr_db = [5.0, 1.0]\n"
            )),
            "grid.snr_db"
        );
        assert_eq!(
            path_of(RunConfig::from_toml(
                "[dims]\nn = 3\nm = 3\n[simulation]\nchannel_trials = 0\n"
            )),
            "simulation.channel_trials"
        );
        assert_eq!(
            path_of(RunConfig::from_toml(
                "[dims]\nn = 3\nm = 3\n[simulation]\nseed = \"x\"\n"
            )),
            "simulation.seed"
        );
        assert_eq!(path_of(RunConfig::from_toml("[dims\n")), "<toml>");
    }

    #[test]
    fn round_trips_through_toml() {
        let text =
            "[dims]\nn = 3\nm = 2\n[receiver]\nordering = \"suboptimal\"\nmodulation = \"bfsk\"\n\
                    [simulation]\nseed = 9\nearly_stop = 0.1\n[grid]\nx = [0.1, 0.3]\n\
                    [output]\noutputs = [\"error-rates\"]\n";
        let c = RunConfig::from_toml(text).unwrap();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c.experiment, back.experiment);
        assert_eq!(c.outputs, back.outputs);
    }

    #[test]
    fn flags_override_file() {
        let mut c = RunConfig::from_toml("[dims]\nn = 3\nm = 3\n[simulation]\nseed = 4\n").unwrap();
        c.apply(&Overrides {
            seed: Some(7),
            trials: Some(0),
            threads: Some(1),
            out_dir: None,
        })
        .unwrap();
        assert_eq!(c.experiment.seed, 7);
        assert_eq!(c.outputs, vec![OutputKind::Analytic]);
        assert_eq!(c.experiment().execution, Execution::Sequential);
    }
}
