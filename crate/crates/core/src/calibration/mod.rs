//! Parameter fitting against scalar device features.

mod simplex;

pub use simplex::{minimize_simplex, Coefficients, Minimum, SimplexOptions};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::device::{self, DeviceParams, DeviceState};
use crate::error::{Error, Result};
use crate::par;
use crate::protocols::{self, StdpSettings, Sweep};
use crate::simulator::{rng_for, SimConfig};

/// Loss assigned to parameter sets whose simulation fails.
pub const FAILURE_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub value: f64,
    pub weight: f64,
}

impl Target {
    pub const fn new(value: f64, weight: f64) -> Self {
        Target { value, weight }
    }

    fn active(&self) -> bool {
        self.weight > 0.0
    }
}

/// Weighted feature targets. A weight of zero skips the feature and the
/// simulations that only it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetFeatures {
    /// Low-bias log–log slope of the static HRS branch.
    pub hrs_slope_low: Target,
    /// First regime boundary of the HRS branch, V.
    pub slope_boundary_v: Target,
    /// R_OFF/R_ON of one DC cycle (±3 V, 0.05 V/s, 1 mA).
    pub on_off_dc: Target,
    /// Median pre-failure window of the pulsed endurance run.
    pub on_off_pulsed: Target,
    /// Pulsed endurance cycle at which the cell fails.
    pub failure_cycle: Target,
    /// Lower bound on the relative LTP rise; penalized one-sided.
    pub ltp_min_rise: Target,
    pub ltp_amp: f64,
    pub ltp_width: f64,
    pub ltp_pulses: usize,
    /// Δt over which |ΔG| halves on the potentiation side, s.
    pub stdp_half_scale: Target,
    /// Weight of the `p_reset > p_set` ordering penalty.
    pub power_order: f64,
}

impl Default for TargetFeatures {
    fn default() -> Self {
        TargetFeatures {
            hrs_slope_low: Target::new(1.1, 1.0),
            slope_boundary_v: Target::new(0.4, 1.0),
            on_off_dc: Target::new(22.0, 1.0),
            on_off_pulsed: Target::new(34.0, 1.0),
            failure_cycle: Target::new(450.0, 1.0),
            ltp_min_rise: Target::new(0.5, 1.0),
            ltp_amp: 1.2,
            ltp_width: 1e-3,
            ltp_pulses: 50,
            stdp_half_scale: Target::new(20e-6, 0.0),
            power_order: 1.0,
        }
    }
}

impl TargetFeatures {
    /// All weights zero; enable features individually.
    pub fn none() -> Self {
        let off = |t: Target| Target { weight: 0.0, ..t };
        let d = Self::default();
        TargetFeatures {
            hrs_slope_low: off(d.hrs_slope_low),
            slope_boundary_v: off(d.slope_boundary_v),
            on_off_dc: off(d.on_off_dc),
            on_off_pulsed: off(d.on_off_pulsed),
            failure_cycle: off(d.failure_cycle),
            ltp_min_rise: off(d.ltp_min_rise),
            stdp_half_scale: off(d.stdp_half_scale),
            power_order: 0.0,
            ..d
        }
    }

    fn targets(&self) -> [(&'static str, &Target); 7] {
        [
            ("hrs_slope_low", &self.hrs_slope_low),
            ("slope_boundary_v", &self.slope_boundary_v),
            ("on_off_dc", &self.on_off_dc),
            ("on_off_pulsed", &self.on_off_pulsed),
            ("failure_cycle", &self.failure_cycle),
            ("ltp_min_rise", &self.ltp_min_rise),
            ("stdp_half_scale", &self.stdp_half_scale),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let mut any = self.power_order > 0.0;
        for (name, t) in self.targets() {
            if !(t.weight >= 0.0 && t.weight.is_finite()) {
                return Err(Error::invalid(format!("weight of {name} must be finite and >= 0")));
            }
            if t.active() && !(t.value > 0.0 && t.value.is_finite()) {
                return Err(Error::invalid(format!("target {name} must be > 0")));
            }
            any |= t.active();
        }
        if !(self.power_order >= 0.0 && self.power_order.is_finite()) {
            return Err(Error::invalid("power_order weight must be finite and >= 0"));
        }
        if !any {
            return Err(Error::invalid("at least one target needs a positive weight"));
        }
        if self.ltp_min_rise.active() && !(self.ltp_amp > 0.0 && self.ltp_width > 0.0 && self.ltp_pulses >= 1) {
            return Err(Error::invalid("ltp protocol needs amp > 0, width > 0, pulses >= 1"));
        }
        Ok(())
    }

    /// Same weights, target values replaced by measured features.
    pub fn with_values_from(&self, f: &Features) -> Self {
        let set = |t: Target, v: Option<f64>| Target { value: v.unwrap_or(t.value), ..t };
        TargetFeatures {
            hrs_slope_low: set(self.hrs_slope_low, f.hrs_slope_low),
            slope_boundary_v: set(self.slope_boundary_v, f.slope_boundary_v),
            on_off_dc: set(self.on_off_dc, f.on_off_dc),
            on_off_pulsed: set(self.on_off_pulsed, f.on_off_pulsed),
            failure_cycle: set(self.failure_cycle, f.failure_cycle),
            ltp_min_rise: set(self.ltp_min_rise, f.ltp_rise),
            stdp_half_scale: set(self.stdp_half_scale, f.stdp_half_scale),
            ..*self
        }
    }
}

/// Simulated features; `None` where the feature was not requested or is
/// undefined (for example no switching event in the sweep).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Features {
    pub hrs_slope_low: Option<f64>,
    pub slope_boundary_v: Option<f64>,
    pub on_off_dc: Option<f64>,
    pub p_set: Option<f64>,
    pub p_reset: Option<f64>,
    pub on_off_pulsed: Option<f64>,
    pub failure_cycle: Option<f64>,
    pub ltp_rise: Option<f64>,
    pub stdp_half_scale: Option<f64>,
}

/// Static I–V of the fully reset cell on a log grid, for the regime fit.
pub fn hrs_branch(params: &DeviceParams, v_lo: f64, v_hi: f64, n: usize) -> Vec<(f64, f64)> {
    let s = DeviceState::new(0.0);
    let ratio = (v_hi / v_lo).ln();
    (0..n)
        .map(|k| {
            let v = v_lo * (ratio * k as f64 / (n - 1) as f64).exp();
            (v, device::device_current(v, &s, params))
        })
        .collect()
}

/// Run the protocols needed by the active targets.
pub fn measure(params: &DeviceParams, targets: &TargetFeatures, seed: u64) -> Result<Features> {
    params.validate()?;
    let mut f = Features::default();
    if targets.hrs_slope_low.active() || targets.slope_boundary_v.active() {
        let fit = analysis::fit_loglog_segments(&hrs_branch(params, 0.01, 3.0, 60), 3)?;
        f.hrs_slope_low = Some(fit.slopes[0]);
        f.slope_boundary_v = Some(fit.breakpoints[0]);
    }
    if targets.on_off_dc.active() || targets.power_order > 0.0 {
        let r = protocols::run_iv_cycles(1, &Sweep::default(), 1e-3, &SimConfig::dc().with_seed(seed), params)?;
        let c = r.cycles[0];
        f.on_off_dc = Some(c.ratio);
        f.p_set = c.p_set;
        f.p_reset = c.p_reset;
    }
    if targets.on_off_pulsed.active() || targets.failure_cycle.active() {
        let cap = (1.5 * targets.failure_cycle.value).ceil().max(10.0) as usize;
        let n = if targets.failure_cycle.active() { cap } else { 10 };
        let r = protocols::run_endurance_pulsed(1.5, -1.0, 100e-6, n, &SimConfig::pulse().with_seed(seed), params)?;
        f.on_off_pulsed = r.pre_failure_median_window();
        f.failure_cycle = Some(r.failure_cycle.unwrap_or(n + 1) as f64);
    }
    if targets.ltp_min_rise.active() {
        let cfg = SimConfig::pulse().with_seed(seed).with_compliance(1e-3);
        let r = protocols::run_ltp_ltd(targets.ltp_amp, targets.ltp_width, targets.ltp_pulses, &cfg, params)?;
        f.ltp_rise = Some(r.ltp.relative_change());
    }
    if targets.stdp_half_scale.active() {
        let (near, far) = (5e-6, 40e-6);
        let r = protocols::run_stdp(&[near, far], &StdpSettings::default(), &SimConfig::pulse().with_seed(seed), params)?;
        let (a, b) = (r.points[0].delta_g.abs(), r.points[1].delta_g.abs());
        f.stdp_half_scale = (a > b && b > 0.0).then(|| (far - near) * std::f64::consts::LN_2 / (a / b).ln());
    }
    Ok(f)
}

/// Weighted relative squared error of `features` against `targets`.
pub fn loss(features: &Features, targets: &TargetFeatures) -> f64 {
    let two_sided = |t: &Target, v: Option<f64>| match v {
        _ if !t.active() => 0.0,
        Some(v) => t.weight * ((v - t.value) / t.value).powi(2),
        None => t.weight,
    };
    let mut total = two_sided(&targets.hrs_slope_low, features.hrs_slope_low)
        + two_sided(&targets.slope_boundary_v, features.slope_boundary_v)
        + two_sided(&targets.on_off_dc, features.on_off_dc)
        + two_sided(&targets.on_off_pulsed, features.on_off_pulsed)
        + two_sided(&targets.failure_cycle, features.failure_cycle)
        + two_sided(&targets.stdp_half_scale, features.stdp_half_scale);
    let rise = &targets.ltp_min_rise;
    if rise.active() {
        total += match features.ltp_rise {
            Some(v) => rise.weight * ((rise.value - v).max(0.0) / rise.value).powi(2),
            None => rise.weight,
        };
    }
    if targets.power_order > 0.0 {
        total += match (features.p_set, features.p_reset) {
            (Some(s), Some(r)) if r > s => 0.0,
            (Some(s), Some(r)) => targets.power_order * (1.0 + (s - r) / s).powi(2),
            _ => targets.power_order,
        };
    }
    total
}

/// Loss of `params`, or an error when the simulation fails.
pub fn try_objective(params: &DeviceParams, targets: &TargetFeatures, seed: u64) -> Result<f64> {
    Ok(loss(&measure(params, targets, seed)?, targets))
}

/// Loss of `params`; failed simulations map to [`FAILURE_PENALTY`].
pub fn objective(params: &DeviceParams, targets: &TargetFeatures, seed: u64) -> f64 {
    try_objective(params, targets, seed).unwrap_or(FAILURE_PENALTY)
}

/// One fitted parameter and its search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDim {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    /// Search in log space (bounds must be positive).
    #[serde(default)]
    pub log: bool,
}

impl FitDim {
    pub fn new(name: &str, lower: f64, upper: f64, log: bool) -> Self {
        FitDim { name: name.to_string(), lower, upper, log }
    }

    fn encode(&self, v: f64) -> f64 {
        if self.log {
            v.ln()
        } else {
            v
        }
    }

    fn decode(&self, u: f64) -> f64 {
        if self.log {
            u.exp()
        } else {
            u
        }
    }

    fn box_bounds(&self) -> (f64, f64) {
        (self.encode(self.lower), self.encode(self.upper))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_evals: usize,
    pub coefficients: Coefficients,
    pub dims: Vec<FitDim>,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 4,
            max_evals: 300,
            coefficients: Coefficients::default(),
            dims: vec![FitDim::new("a1", 5e-5, 8e-4, true), FitDim::new("n1", 1.0, 1.5, false)],
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be >= 1"));
        }
        if self.max_evals == 0 {
            return Err(Error::invalid("max_evals must be >= 1"));
        }
        if self.dims.is_empty() {
            return Err(Error::invalid("no parameters selected for fitting"));
        }
        self.coefficients.validate()?;
        let probe = DeviceParams::default();
        for d in &self.dims {
            probe.get(&d.name)?;
            if !(d.lower < d.upper && d.lower.is_finite() && d.upper.is_finite()) {
                return Err(Error::invalid(format!("bounds of {} need finite lower < upper", d.name)));
            }
            if d.log && d.lower <= 0.0 {
                return Err(Error::invalid(format!("log-scaled {} needs positive bounds", d.name)));
            }
        }
        Ok(())
    }

    fn apply(&self, base: &DeviceParams, u: &[f64]) -> DeviceParams {
        let mut p = *base;
        for (d, &v) in self.dims.iter().zip(u) {
            p.set(&d.name, d.decode(v)).expect("names checked by validate");
        }
        p
    }

    fn options(&self) -> SimplexOptions {
        SimplexOptions {
            max_evals: self.max_evals,
            coefficients: self.coefficients,
            diameter_tol: 1e-9,
            bounds: self.dims.iter().map(|d| Some(d.box_bounds())).collect(),
        }
    }

    /// In-box starting point of restart `index`.
    fn start(&self, index: usize) -> Vec<f64> {
        let mut rng = rng_for(self.seed, 1000 + index as u64);
        self.dims
            .iter()
            .map(|d| {
                let (lo, hi) = d.box_bounds();
                // keep clear of the box faces where the bijection flattens
                lo + (hi - lo) * rng.random_range(0.05..0.95)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub start: Vec<f64>,
    pub start_loss: f64,
    pub best: Vec<f64>,
    pub loss: f64,
    pub evals: usize,
    pub failed_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: DeviceParams,
    pub loss: f64,
    pub restarts: Vec<RestartSummary>,
}

/// Fit the selected dimensions of `base` to `targets`; restarts run in
/// parallel and the best one wins (earliest on ties).
pub fn fit(targets: &TargetFeatures, base: &DeviceParams, cfg: &FitConfig) -> Result<FitReport> {
    targets.validate()?;
    cfg.validate()?;
    let opts = cfg.options();
    let runs = par::map_range(cfg.restarts, |k| -> Option<RestartSummary> {
        let start = cfg.start(k);
        let mut failed = 0usize;
        let f = |u: &[f64]| match try_objective(&cfg.apply(base, u), targets, cfg.seed) {
            Ok(v) => v,
            Err(_) => {
                failed += 1;
                FAILURE_PENALTY
            }
        };
        let m = minimize_simplex(f, &start, &opts).ok()?;
        let start_loss = objective(&cfg.apply(base, &start), targets, cfg.seed);
        let decode = |u: &[f64]| cfg.dims.iter().zip(u).map(|(d, &v)| d.decode(v)).collect::<Vec<_>>();
        Some(RestartSummary {
            start: decode(&start),
            start_loss,
            best: decode(&m.x),
            loss: m.f,
            evals: m.evals,
            failed_evals: failed,
        })
    });
    let mut best: Option<(usize, f64)> = None;
    for (k, r) in runs.iter().enumerate() {
        if let Some(r) = r {
            if r.loss.is_finite() && best.is_none_or(|(_, l)| r.loss < l) {
                best = Some((k, r.loss));
            }
        }
    }
    let Some((k, loss)) = best else {
        return Err(Error::Fit("every restart failed to produce a finite loss".into()));
    };
    let winner = runs[k].as_ref().expect("best restart exists");
    let mut params = *base;
    for (d, &v) in cfg.dims.iter().zip(&winner.best) {
        params.set(&d.name, v)?;
    }
    Ok(FitReport { params, loss, restarts: runs.into_iter().flatten().collect() })
}
