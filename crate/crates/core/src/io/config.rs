//! JSON run configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::calibration::{FitConfig, TargetFeatures};
use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::protocols::{StaircaseSettings, StdpSettings, Sweep};
use crate::simulator::SimConfig;

/// Environment variable consulted for the seed when neither the command line
/// nor the config sets one.
pub const SEED_ENV: &str = "MEMSYN_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown format `{s}` (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub cycles: usize,
    pub v_pos: f64,
    pub v_neg: f64,
    pub rate: f64,
    pub i_cc: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let s = Sweep::default();
        SweepSpec { cycles: 1, v_pos: s.v_pos, v_neg: s.v_neg, rate: s.rate, i_cc: 1e-3 }
    }
}

impl SweepSpec {
    pub fn sweep(&self) -> Sweep {
        Sweep { v_pos: self.v_pos, v_neg: self.v_neg, rate: self.rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnduranceSpec {
    pub v_set: f64,
    pub v_reset: f64,
    pub width: f64,
    pub cycles: usize,
}

impl Default for EnduranceSpec {
    fn default() -> Self {
        EnduranceSpec { v_set: 1.5, v_reset: -1.0, width: 100e-6, cycles: 600 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetentionSpec {
    pub t_total: f64,
    pub read_period: f64,
    /// Compliance of the DC cycle that programs both states, A.
    pub i_cc: f64,
}

impl Default for RetentionSpec {
    fn default() -> Self {
        RetentionSpec { t_total: 1e4, read_period: 100.0, i_cc: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultilevelSpec {
    pub i_cc: Vec<f64>,
    pub v_pos: f64,
    pub rate: f64,
}

impl Default for MultilevelSpec {
    fn default() -> Self {
        MultilevelSpec { i_cc: vec![0.5e-3, 1e-3, 5e-3], v_pos: 3.0, rate: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LtpLtdSpec {
    pub amp: f64,
    pub width: f64,
    pub pulses: usize,
}

impl Default for LtpLtdSpec {
    fn default() -> Self {
        LtpLtdSpec { amp: 1.2, width: 1e-3, pulses: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmplitudeSeriesSpec {
    pub amps: Vec<f64>,
    pub width: f64,
    pub pulses: usize,
}

impl Default for AmplitudeSeriesSpec {
    fn default() -> Self {
        AmplitudeSeriesSpec { amps: vec![1.0, 1.2, 1.4], width: 10e-6, pulses: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaircaseSpec {
    pub v_start: f64,
    pub v_end: f64,
    pub v_step: f64,
    pub i_cc: f64,
    pub condition_peak: f64,
    pub condition_rate: f64,
    pub rate: f64,
}

impl StaircaseSpec {
    pub fn reset_default() -> Self {
        let s = StaircaseSettings::reset_default();
        StaircaseSpec {
            v_start: -0.8,
            v_end: -1.5,
            v_step: 0.1,
            i_cc: 1e-3,
            condition_peak: s.condition_peak,
            condition_rate: s.condition_rate,
            rate: s.rate,
        }
    }

    pub fn set_default() -> Self {
        let s = StaircaseSettings::set_default();
        StaircaseSpec {
            v_start: 0.8,
            v_end: 1.5,
            v_step: 0.1,
            i_cc: 5e-3,
            condition_peak: s.condition_peak,
            condition_rate: s.condition_rate,
            rate: s.rate,
        }
    }

    pub fn settings(&self) -> StaircaseSettings {
        StaircaseSettings { condition_peak: self.condition_peak, condition_rate: self.condition_rate, rate: self.rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StdpSpec {
    /// Spike delays, s.
    pub delta_t: Vec<f64>,
    pub settings: StdpSettings,
}

impl Default for StdpSpec {
    fn default() -> Self {
        let delta_t = vec![-40e-6, -20e-6, -10e-6, -5e-6, 0.0, 5e-6, 10e-6, 20e-6, 40e-6];
        StdpSpec { delta_t, settings: StdpSettings::default() }
    }
}

/// One experiment per run, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Sweep(SweepSpec),
    Endurance(EnduranceSpec),
    Retention(RetentionSpec),
    Multilevel(MultilevelSpec),
    LtpLtd(LtpLtdSpec),
    AmplitudeSeries(AmplitudeSeriesSpec),
    #[serde(deserialize_with = "reset_staircase")]
    ResetStaircase(StaircaseSpec),
    #[serde(deserialize_with = "set_staircase")]
    SetStaircase(StaircaseSpec),
    Stdp(StdpSpec),
}

fn staircase_with<'de, D: serde::Deserializer<'de>>(d: D, base: StaircaseSpec) -> std::result::Result<StaircaseSpec, D::Error> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Partial {
        v_start: Option<f64>,
        v_end: Option<f64>,
        v_step: Option<f64>,
        i_cc: Option<f64>,
        condition_peak: Option<f64>,
        condition_rate: Option<f64>,
        rate: Option<f64>,
    }
    let p = Partial::deserialize(d)?;
    Ok(StaircaseSpec {
        v_start: p.v_start.unwrap_or(base.v_start),
        v_end: p.v_end.unwrap_or(base.v_end),
        v_step: p.v_step.unwrap_or(base.v_step),
        i_cc: p.i_cc.unwrap_or(base.i_cc),
        condition_peak: p.condition_peak.unwrap_or(base.condition_peak),
        condition_rate: p.condition_rate.unwrap_or(base.condition_rate),
        rate: p.rate.unwrap_or(base.rate),
    })
}

fn reset_staircase<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<StaircaseSpec, D::Error> {
    staircase_with(d, StaircaseSpec::reset_default())
}

fn set_staircase<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<StaircaseSpec, D::Error> {
    staircase_with(d, StaircaseSpec::set_default())
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Sweep(_) => "sweep",
            Experiment::Endurance(_) => "endurance",
            Experiment::Retention(_) => "retention",
            Experiment::Multilevel(_) => "multilevel",
            Experiment::LtpLtd(_) => "ltp_ltd",
            Experiment::AmplitudeSeries(_) => "amplitude_series",
            Experiment::ResetStaircase(_) => "reset_staircase",
            Experiment::SetStaircase(_) => "set_staircase",
            Experiment::Stdp(_) => "stdp",
        }
    }

    /// Integrator settings suited to the experiment's time scale.
    pub fn sim_preset(&self) -> SimConfig {
        match self {
            Experiment::Sweep(_) | Experiment::Multilevel(_) => SimConfig::dc(),
            Experiment::Retention(_) => SimConfig::dc().with_dt_max(1.0),
            Experiment::LtpLtd(_) => SimConfig::pulse().with_compliance(1e-3),
            Experiment::Endurance(_)
            | Experiment::AmplitudeSeries(_)
            | Experiment::ResetStaircase(_)
            | Experiment::SetStaircase(_)
            | Experiment::Stdp(_) => SimConfig::pulse(),
        }
    }
}

/// Partial integrator settings layered on the experiment preset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dx_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_cc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decimation: Option<usize>,
}

impl SimOverrides {
    pub fn apply(&self, mut cfg: SimConfig) -> SimConfig {
        if let Some(v) = self.dt_max {
            cfg.dt_max = v;
        }
        if let Some(v) = self.dx_max {
            cfg.dx_max = v;
        }
        if let Some(v) = self.i_cc {
            cfg.i_cc = Some(v);
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.decimation {
            cfg.decimation = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub targets: TargetFeatures,
    pub config: FitConfig,
}

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceParams,
    pub sim: SimOverrides,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.device.validate().map_err(as_config)?;
        if let Some(e) = &self.experiment {
            self.sim.apply(e.sim_preset()).validate().map_err(as_config)?;
        }
        if let Some(f) = &self.fit {
            f.targets.validate().map_err(as_config)?;
            f.config.validate().map_err(as_config)?;
        }
        Ok(())
    }

    /// Integrator settings for the configured experiment.
    pub fn sim_config(&self, experiment: &Experiment) -> SimConfig {
        self.sim.apply(experiment.sim_preset())
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidInput(msg) => Error::Config(msg),
        other => other,
    }
}

/// Parse a configuration that may omit the experiment (used by `fit`).
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parse and validate a run configuration; an experiment is mandatory.
pub fn load_config(text: &str) -> Result<RunConfig> {
    let cfg = parse_config(text)?;
    if cfg.experiment.is_none() {
        return Err(Error::Config("experiment required".into()));
    }
    Ok(cfg)
}

/// Seed precedence: command line, then config, then `MEMSYN_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV} is not an unsigned integer: `{v}`"))),
        None => Ok(0),
    }
}
