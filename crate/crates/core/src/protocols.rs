//! Scripted electrical experiments.
//!
//! Every protocol builds its waveforms from the `waveform` module, drives a
//! device through the simulator, and reduces the result with `analysis`.
//! Reads are embedded in the waveforms at 0.1 V / 100 µs unless configured
//! otherwise, so read disturb is simulated rather than assumed away.

use serde::{Deserialize, Serialize};

use crate::analysis::{self, SwitchingPower};
use crate::device::{DeviceParams, DeviceState};
use crate::error::{Error, Result};
use crate::par;
use crate::simulator::{self, perturb_cycle, rng_for, SimConfig, Trace};
use crate::waveform::{self, ReadSpec, SpikeShape, StdpPairSpec, Waveform, WaveformBuilder};

/// Zero-bias settle time after a write pulse, s.
pub const PULSE_GAP: f64 = 10e-6;

fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 0 { 0.5 * (v[m - 1] + v[m]) } else { v[m] })
}

// ---------------------------------------------------------------------------
// DC I–V cycling

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub v_pos: f64,
    pub v_neg: f64,
    /// Sweep rate, V/s.
    pub rate: f64,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep { v_pos: 3.0, v_neg: -3.0, rate: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvCycle {
    pub r_on: f64,
    pub r_off: f64,
    pub ratio: f64,
    pub p_set: Option<f64>,
    pub p_reset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvCycleResult {
    pub cycles: Vec<IvCycle>,
    pub failure_cycle: Option<usize>,
    pub seed: u64,
}

impl IvCycleResult {
    pub fn median_ratio(&self) -> Option<f64> {
        median(&self.cycles.iter().map(|c| c.ratio).collect::<Vec<_>>())
    }
}

/// One DC cycle: SET half, read, RESET half, read.
pub fn iv_cycle_waveform(sweep: &Sweep, read: ReadSpec) -> Result<Waveform> {
    let set = waveform::half_sweep(sweep.v_pos, sweep.rate)?;
    let reset = waveform::half_sweep(sweep.v_neg, sweep.rate)?;
    WaveformBuilder::new()
        .extend(set.segments().iter().copied())
        .read(read)
        .extend(reset.segments().iter().copied())
        .read(read)
        .build()
}

/// Trace of a single closed DC loop from `s0`, without embedded reads.
pub fn dc_sweep_trace(
    sweep: &Sweep,
    i_cc: f64,
    s0: &DeviceState,
    cfg: &SimConfig,
    params: &DeviceParams,
) -> Result<(DeviceState, Trace)> {
    let w = waveform::dc_sweep(sweep.v_pos, sweep.v_neg, sweep.rate)?;
    simulator::run(&w, s0, &cfg.with_compliance(i_cc), params)
}

/// `n` back-to-back DC sweeps on one fresh (forming-free) device, with
/// cycle-to-cycle rate variability.
pub fn run_iv_cycles(n: usize, sweep: &Sweep, i_cc: f64, cfg: &SimConfig, params: &DeviceParams) -> Result<IvCycleResult> {
    run_iv_cycles_with(n, sweep, i_cc, cfg, params, |_, _| {})
}

/// As [`run_iv_cycles`], handing each cycle's trace to `on_trace`.
pub fn run_iv_cycles_with(
    n: usize,
    sweep: &Sweep,
    i_cc: f64,
    cfg: &SimConfig,
    params: &DeviceParams,
    mut on_trace: impl FnMut(usize, &Trace),
) -> Result<IvCycleResult> {
    if n == 0 {
        return Err(Error::invalid("need at least one cycle"));
    }
    let read = ReadSpec::default();
    let w = iv_cycle_waveform(sweep, read)?;
    let cfg = cfg.with_compliance(i_cc);
    let mut rng = rng_for(cfg.seed, 0);
    let mut state = DeviceState::fresh(params);
    let mut cycles = Vec::with_capacity(n);
    let mut failure_cycle = None;
    for k in 0..n {
        let cycle_params = perturb_cycle(params, &mut rng);
        let (end, trace) = simulator::run(&w, &state, &cfg, &cycle_params)?;
        let reads = reads_from_trace(&w, &trace);
        on_trace(k, &trace);
        let (g_on, g_off) = (reads[0], reads[1]);
        let SwitchingPower { p_set, p_reset } = analysis::switching_power(&trace);
        let (r_on, r_off) = (1.0 / g_on, 1.0 / g_off);
        cycles.push(IvCycle { r_on, r_off, ratio: r_off / r_on, p_set, p_reset });
        state = end;
        state.cycle_count += 1;
        if state.failed && failure_cycle.is_none() {
            failure_cycle = Some(k + 1);
        }
    }
    Ok(IvCycleResult { cycles, failure_cycle, seed: cfg.seed })
}

/// Conductances at the end of each read block of `w`, from a recorded trace.
fn reads_from_trace(w: &Waveform, trace: &Trace) -> Vec<f64> {
    w.segments()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_read())
        .map(|(idx, s)| {
            let t_end = w.end_of(idx);
            let sample = trace.samples.iter().rev().find(|p| p.t == t_end).expect("read end recorded");
            let v = s.value_at(s.duration());
            sample.i / v
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Pulsed endurance

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnduranceCycle {
    pub r_on: f64,
    pub r_off: f64,
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnduranceResult {
    pub cycles: Vec<EnduranceCycle>,
    /// 1-based cycle in which the failure latch tripped.
    pub failure_cycle: Option<usize>,
    pub seed: u64,
}

impl EnduranceResult {
    pub fn pre_failure_median_window(&self) -> Option<f64> {
        let end = self.failure_cycle.map_or(self.cycles.len(), |c| c - 1);
        median(&self.cycles[..end].iter().map(|c| c.window).collect::<Vec<_>>())
    }
}

/// SET pulse, read, RESET pulse, read; repeated until `n` cycles or failure.
pub fn run_endurance_pulsed(
    v_set: f64,
    v_reset: f64,
    width: f64,
    n: usize,
    cfg: &SimConfig,
    params: &DeviceParams,
) -> Result<EnduranceResult> {
    if n == 0 {
        return Err(Error::invalid("need at least one cycle"));
    }
    let read = ReadSpec::default();
    let w = WaveformBuilder::new()
        .hold(v_set, width)
        .hold(0.0, PULSE_GAP)
        .read(read)
        .hold(0.0, PULSE_GAP)
        .hold(v_reset, width)
        .hold(0.0, PULSE_GAP)
        .read(read)
        .hold(0.0, PULSE_GAP)
        .build()?;
    let mut rng = rng_for(cfg.seed, 1);
    let mut state = DeviceState::fresh(params);
    let mut cycles = Vec::with_capacity(n);
    let mut failure_cycle = None;
    for k in 0..n {
        let cycle_params = perturb_cycle(params, &mut rng);
        let (end, reads) = simulator::run_reads(&w, &state, cfg, &cycle_params)?;
        let (g_on, g_off) = (reads[0].g, reads[1].g);
        cycles.push(EnduranceCycle { r_on: 1.0 / g_on, r_off: 1.0 / g_off, window: g_on / g_off });
        state = end;
        state.cycle_count += 1;
        if state.failed {
            failure_cycle = Some(k + 1);
            break;
        }
    }
    Ok(EnduranceResult { cycles, failure_cycle, seed: cfg.seed })
}

// ---------------------------------------------------------------------------
// Retention

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionPoint {
    pub t: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionResult {
    pub lrs: Vec<RetentionPoint>,
    pub hrs: Vec<RetentionPoint>,
    pub seed: u64,
}

fn max_drift(points: &[RetentionPoint]) -> f64 {
    let r0 = points[0].r;
    points.iter().map(|p| ((p.r - r0) / r0).abs()).fold(0.0, f64::max)
}

impl RetentionResult {
    /// Largest relative resistance excursion of each state, (LRS, HRS).
    pub fn drift(&self) -> (f64, f64) {
        (max_drift(&self.lrs), max_drift(&self.hrs))
    }
}

/// LRS and HRS states programmed by one DC cycle under `i_cc`.
pub fn programmed_states(sweep: &Sweep, i_cc: f64, params: &DeviceParams) -> Result<(DeviceState, DeviceState)> {
    let cfg = SimConfig::dc().with_compliance(i_cc);
    let fresh = DeviceState::fresh(params);
    let lrs = simulator::run_final(&waveform::half_sweep(sweep.v_pos, sweep.rate)?, &fresh, &cfg, params)?;
    let hrs = simulator::run_final(&waveform::half_sweep(sweep.v_neg, sweep.rate)?, &lrs, &cfg, params)?;
    Ok((lrs, hrs))
}

/// Zero-bias storage with periodic reads, from an LRS and an HRS state.
pub fn run_retention(
    t_total: f64,
    read_period: f64,
    lrs: &DeviceState,
    hrs: &DeviceState,
    cfg: &SimConfig,
    params: &DeviceParams,
) -> Result<RetentionResult> {
    let read = ReadSpec::default();
    if !(read_period > read.w_read && read_period < t_total) {
        return Err(Error::invalid("retention needs w_read < read_period < t_total"));
    }
    let periods = (t_total / read_period).floor() as usize;
    let mut b = WaveformBuilder::new();
    for _ in 0..periods {
        b = b.read(read).hold(0.0, read_period - read.w_read);
    }
    let w = b.read(read).build()?;
    let trace_of = |s: &DeviceState| -> Result<Vec<RetentionPoint>> {
        let (_, reads) = simulator::run_reads(&w, s, cfg, params)?;
        Ok(reads.into_iter().map(|r| RetentionPoint { t: r.t, r: 1.0 / r.g }).collect())
    };
    let (l, h) = par::join(|| trace_of(lrs), || trace_of(hrs));
    Ok(RetentionResult { lrs: l?, hrs: h?, seed: cfg.seed })
}

// ---------------------------------------------------------------------------
// Multilevel by compliance

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultilevelPoint {
    pub i_cc: f64,
    pub r_lrs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilevelResult {
    pub levels: Vec<MultilevelPoint>,
    pub seed: u64,
}

/// Fresh device per compliance level; one SET half-sweep under each level.
pub fn run_multilevel(i_cc_list: &[f64], sweep: &Sweep, cfg: &SimConfig, params: &DeviceParams) -> Result<MultilevelResult> {
    if i_cc_list.is_empty() {
        return Err(Error::invalid("compliance list is empty"));
    }
    if i_cc_list.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::invalid("compliance list must be strictly ascending"));
    }
    let read = ReadSpec::default();
    let set = waveform::half_sweep(sweep.v_pos, sweep.rate)?;
    let w = WaveformBuilder::new().extend(set.segments().iter().copied()).read(read).build()?;
    let levels = par::map(i_cc_list, |&i_cc| -> Result<MultilevelPoint> {
        let fresh = DeviceState::fresh(params);
        let (_, reads) = simulator::run_reads(&w, &fresh, &cfg.with_compliance(i_cc), params)?;
        Ok(MultilevelPoint { i_cc, r_lrs: 1.0 / reads[0].g })
    });
    Ok(MultilevelResult { levels: levels.into_iter().collect::<Result<_>>()?, seed: cfg.seed })
}

// ---------------------------------------------------------------------------
// Pulse plasticity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlasticityResult {
    /// Conductance before the first pulse and after each pulse, S.
    pub g: Vec<f64>,
    /// Normalized synaptic weight, `w[0] = 0`.
    pub w: Vec<f64>,
}

impl PlasticityResult {
    pub fn from_conductance(g: Vec<f64>) -> Self {
        let w = analysis::normalized_weights(&g);
        PlasticityResult { g, w }
    }

    pub fn nonlinearity(&self) -> Result<f64> {
        analysis::nonlinearity(&self.w)
    }

    pub fn relative_change(&self) -> f64 {
        (self.g[self.g.len() - 1] - self.g[0]) / self.g[0]
    }
}

fn pulse_series(
    amp: f64,
    width: f64,
    n: usize,
    s0: &DeviceState,
    cfg: &SimConfig,
    params: &DeviceParams,
) -> Result<(DeviceState, PlasticityResult)> {
    let w = waveform::pulse_train(amp, width, PULSE_GAP, n, ReadSpec::default())?;
    let (end, reads) = simulator::run_reads(&w, s0, cfg, params)?;
    Ok((end, PlasticityResult::from_conductance(reads.iter().map(|r| r.g).collect())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtpLtdResult {
    pub ltp: PlasticityResult,
    pub ltd: PlasticityResult,
    pub seed: u64,
}

/// Potentiation from HRS with `+amp`, then depression from the resulting
/// state with `-amp`. The configured compliance guards the potentiating
/// train only; depression runs with the limiter released.
pub fn run_ltp_ltd(amp: f64, width: f64, n: usize, cfg: &SimConfig, params: &DeviceParams) -> Result<LtpLtdResult> {
    let amp = amp.abs();
    let fresh = DeviceState::fresh(params);
    let (after_ltp, ltp) = pulse_series(amp, width, n, &fresh, cfg, params)?;
    let (_, ltd) = pulse_series(-amp, width, n, &after_ltp, &cfg.without_compliance(), params)?;
    Ok(LtpLtdResult { ltp, ltd, seed: cfg.seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSeries {
    pub amp: f64,
    pub potentiation: PlasticityResult,
    pub depression: PlasticityResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSeriesResult {
    pub series: Vec<AmplitudeSeries>,
    pub seed: u64,
}

/// Fresh device per amplitude; potentiating train, then depressing train.
pub fn run_amplitude_series(
    amps: &[f64],
    width: f64,
    n: usize,
    cfg: &SimConfig,
    params: &DeviceParams,
) -> Result<AmplitudeSeriesResult> {
    if amps.is_empty() {
        return Err(Error::invalid("amplitude list is empty"));
    }
    let series = par::map(amps, |&amp| -> Result<AmplitudeSeries> {
        let a = amp.abs();
        let fresh = DeviceState::fresh(params);
        let (mid, potentiation) = pulse_series(a, width, n, &fresh, cfg, params)?;
        let (_, depression) = pulse_series(-a, width, n, &mid, cfg, params)?;
        Ok(AmplitudeSeries { amp: a, potentiation, depression })
    });
    Ok(AmplitudeSeriesResult { series: series.into_iter().collect::<Result<_>>()?, seed: cfg.seed })
}

// ---------------------------------------------------------------------------
// Voltage staircases

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaircaseStep {
    pub v: f64,
    pub r: f64,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaircaseResult {
    pub steps: Vec<StaircaseStep>,
    pub seed: u64,
}

/// Inclusive voltage list from `start` to `end` in steps of `step`, computed
/// from integer multiples so the endpoints are exact.
pub fn voltage_steps(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step).abs().round() as usize;
    let dir = if end >= start { 1.0 } else { -1.0 };
    (0..=n).map(|k| ((start + dir * step.abs() * k as f64) * 1e9).round() / 1e9).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaircaseSettings {
    /// Peak of the conditioning sweep before each step, V (sign ignored).
    pub condition_peak: f64,
    /// Ramp rate of the conditioning sweep, V/s.
    pub condition_rate: f64,
    /// Ramp rate of each staircase sweep, V/s.
    pub rate: f64,
}

impl StaircaseSettings {
    pub fn reset_default() -> Self {
        StaircaseSettings { condition_peak: 1.5, condition_rate: 0.05, rate: 2e4 }
    }

    pub fn set_default() -> Self {
        StaircaseSettings { condition_peak: 1.5, condition_rate: 0.05, rate: 6.4e3 }
    }
}

impl Default for StaircaseSettings {
    fn default() -> Self {
        Self::reset_default()
    }
}

fn staircase(
    v_list: &[f64],
    i_cc: f64,
    condition_peak: f64,
    settings: &StaircaseSettings,
    cfg: &SimConfig,
    params: &DeviceParams,
) -> Result<StaircaseResult> {
    // the limiter guards SET-polarity sweeps only
    let polarity_cfg = |v: f64| if v > 0.0 { cfg.with_compliance(i_cc) } else { cfg.without_compliance() };
    let read = ReadSpec::default();
    let condition = waveform::half_sweep(condition_peak, settings.condition_rate)?;
    let mut state = DeviceState::fresh(params);
    let mut steps = Vec::with_capacity(v_list.len());
    for &v in v_list {
        let slow = polarity_cfg(condition_peak).with_dt_max(SimConfig::dc().dt_max.max(cfg.dt_max));
        let conditioned = simulator::run_final(&condition, &state, &slow, params)?;
        let step = waveform::half_sweep(v, settings.rate)?;
        let w = WaveformBuilder::new().extend(step.segments().iter().copied()).read(read).build()?;
        let (end, reads) = simulator::run_reads(&w, &conditioned, &polarity_cfg(v), params)?;
        let g = reads[0].g;
        steps.push(StaircaseStep { v, r: 1.0 / g, g });
        state = end;
    }
    Ok(StaircaseResult { steps, seed: cfg.seed })
}

/// SET to LRS, then RESET sweep to each `v_reset`; reports HRS resistance.
pub fn run_reset_staircase(
    v_list: &[f64],
    i_cc: f64,
    settings: &StaircaseSettings,
    cfg: &SimConfig,
    params: &DeviceParams,
) -> Result<StaircaseResult> {
    if v_list.is_empty() || v_list.iter().any(|&v| v >= 0.0) || v_list.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::invalid("reset staircase needs a descending list of negative voltages"));
    }
    staircase(v_list, i_cc, settings.condition_peak.abs(), settings, cfg, params)
}

/// RESET to HRS, then SET sweep to each `v_set`; reports LRS conductance.
pub fn run_set_staircase(
    v_list: &[f64],
    i_cc: f64,
    settings: &StaircaseSettings,
    cfg: &SimConfig,
    params: &DeviceParams,
) -> Result<StaircaseResult> {
    if v_list.is_empty() || v_list.iter().any(|&v| v <= 0.0) || v_list.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::invalid("set staircase needs an ascending list of positive voltages"));
    }
    staircase(v_list, i_cc, -settings.condition_peak.abs(), settings, cfg, params)
}

// ---------------------------------------------------------------------------
// STDP

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StdpSettings {
    pub spike: SpikeShape,
    /// Pre-conditioning target for Δt ≥ 0 runs, S.
    pub g_before_ltp: f64,
    /// Pre-conditioning target for Δt < 0 runs, S.
    pub g_before_ltd: f64,
    /// Relative tolerance of the pre-conditioning loop.
    pub tolerance: f64,
    pub max_conditioning_pulses: usize,
    /// Amplitude of the conditioning pulses, V (applied with either sign).
    pub conditioning_amp: f64,
    pub read: ReadSpec,
}

impl Default for StdpSettings {
    fn default() -> Self {
        StdpSettings {
            spike: SpikeShape::default(),
            g_before_ltp: 581e-6,
            g_before_ltd: 554e-6,
            tolerance: 0.02,
            max_conditioning_pulses: 100,
            conditioning_amp: 0.8,
            read: ReadSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdpPoint {
    pub delta_t: f64,
    pub delta_g: f64,
    pub g_before: f64,
    pub g_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdpResult {
    pub points: Vec<StdpPoint>,
    pub seed: u64,
}

/// Drive a device toward conductance `target` with a feedback loop of short
/// pulses whose width adapts to the last observed response.
pub fn precondition(
    s0: &DeviceState,
    target: f64,
    settings: &StdpSettings,
    cfg: &SimConfig,
    params: &DeviceParams,
) -> Result<DeviceState> {
    let read = settings.read;
    let read_w = WaveformBuilder::new().read(read).build()?;
    let (mut state, reads) = simulator::run_reads(&read_w, s0, cfg, params)?;
    let mut g = reads[0].g;
    let mut width = 20e-6;
    for _ in 0..settings.max_conditioning_pulses {
        let err = target - g;
        if (err / target).abs() <= settings.tolerance {
            return Ok(state);
        }
        let amp = settings.conditioning_amp.copysign(err);
        let w = WaveformBuilder::new().hold(amp, width).hold(0.0, PULSE_GAP).read(read).build()?;
        let (next, reads) = simulator::run_reads(&w, &state, cfg, params)?;
        let g_new = reads[0].g;
        let moved = g_new - g;
        let remaining = target - g_new;
        // aim for the middle of the tolerance band on the next pulse
        let scale = if moved != 0.0 && moved.signum() == err.signum() {
            (remaining.abs() / moved.abs()).clamp(0.1, 8.0)
        } else if moved.signum() != err.signum() && moved != 0.0 {
            0.5
        } else {
            8.0
        };
        if remaining.signum() != err.signum() {
            width *= 0.5;
        } else {
            width *= scale;
        }
        width = width.clamp(10e-9, 10e-3);
        state = next;
        g = g_new;
    }
    if ((target - g) / target).abs() <= settings.tolerance {
        return Ok(state);
    }
    Err(Error::Simulation(format!(
        "pre-conditioning did not reach {target:.4e} S within {} pulses (last {g:.4e} S)",
        settings.max_conditioning_pulses
    )))
}

/// Apply one superposed spike pair to an already conditioned device.
pub fn stdp_point(
    s0: &DeviceState,
    delta_t: f64,
    settings: &StdpSettings,
    cfg: &SimConfig,
    params: &DeviceParams,
) -> Result<StdpPoint> {
    let spec = StdpPairSpec::new(settings.spike, delta_t, settings.read);
    let w = waveform::superpose_stdp(&spec)?;
    let (_, reads) = simulator::run_reads(&w, s0, cfg, params)?;
    let (g_before, g_after) = (reads[0].g, reads[1].g);
    Ok(StdpPoint { delta_t, delta_g: analysis::delta_g(g_before, g_after)?, g_before, g_after })
}

/// ΔG versus Δt; every point uses a fresh, pre-conditioned device.
pub fn run_stdp(delta_ts: &[f64], settings: &StdpSettings, cfg: &SimConfig, params: &DeviceParams) -> Result<StdpResult> {
    if delta_ts.is_empty() {
        return Err(Error::invalid("delta_t list is empty"));
    }
    settings.spike.validate()?;
    if settings.read.v_read.abs() > params.v_dz {
        return Err(Error::invalid("read voltage must stay inside the dead zone"));
    }
    let points = par::map(delta_ts, |&dt| -> Result<StdpPoint> {
        let target = if dt >= 0.0 { settings.g_before_ltp } else { settings.g_before_ltd };
        let fresh = DeviceState::fresh(params);
        let conditioned = precondition(&fresh, target, settings, cfg, params)?;
        stdp_point(&conditioned, dt, settings, cfg, params)
    });
    Ok(StdpResult { points: points.into_iter().collect::<Result<_>>()?, seed: cfg.seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voltage_steps_are_exact() {
        let v = voltage_steps(-0.8, -1.5, 0.1);
        assert_eq!(v, vec![-0.8, -0.9, -1.0, -1.1, -1.2, -1.3, -1.4, -1.5]);
        let v = voltage_steps(0.8, 1.5, 0.1);
        assert_eq!(v.len(), 8);
        assert_eq!(v[7], 1.5);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn no_switching_gives_unit_ratio() {
        let params = DeviceParams { k_s: 0.0, k_r: 0.0, ..DeviceParams::default() };
        let sweep = Sweep { v_pos: 1.0, v_neg: -1.0, rate: 1.0 };
        let res = run_iv_cycles(1, &sweep, 1e-3, &SimConfig::dc(), &params).unwrap();
        assert!((res.cycles[0].ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn endurance_without_failure_energy() {
        let params = DeviceParams { d_fail: f64::INFINITY, ..DeviceParams::default() };
        let res = run_endurance_pulsed(1.5, -1.0, 100e-6, 20, &SimConfig::pulse(), &params).unwrap();
        assert_eq!(res.failure_cycle, None);
        assert_eq!(res.cycles.len(), 20);
    }

    #[test]
    fn retention_without_drift_is_flat() {
        let params = DeviceParams { tau_ret: f64::INFINITY, ..DeviceParams::default() };
        let cfg = SimConfig::dc().with_dt_max(10.0);
        let res = run_retention(1e3, 100.0, &DeviceState::new(0.8), &DeviceState::new(0.0), &cfg, &params).unwrap();
        assert_eq!(res.drift(), (0.0, 0.0));
    }

    #[test]
    fn retention_closed_form_decay() {
        let params = DeviceParams { tau_ret: 1e3, x_init: 0.0, ..DeviceParams::default() };
        let cfg = SimConfig::dc().with_dt_max(1.0).with_dx_max(1e-3);
        let w = WaveformBuilder::new().hold(0.0, 1e4).build().unwrap();
        let end = simulator::run_final(&w, &DeviceState::new(1.0), &cfg, &params).unwrap();
        let expect = (-10.0f64).exp();
        assert!((end.x - expect).abs() < 1e-4, "x = {}, expected {expect}", end.x);
    }

    #[test]
    fn multilevel_single_level_and_unbounded_limit() {
        let params = DeviceParams { i_damage: 1e9, ..DeviceParams::default() };
        let sweep = Sweep::default();
        let cfg = SimConfig::dc();
        let one = run_multilevel(&[1e-3], &sweep, &cfg, &params).unwrap();
        assert_eq!(one.levels.len(), 1);
        let huge = run_multilevel(&[1e3], &sweep, &cfg, &params).unwrap();
        let r = huge.levels[0].r_lrs;
        assert!((r * params.g_on - 1.0).abs() < 0.01, "r_lrs = {r}");
        assert!(run_multilevel(&[], &sweep, &cfg, &params).is_err());
        assert!(run_multilevel(&[2e-3, 1e-3], &sweep, &cfg, &params).is_err());
    }

    #[test]
    fn ltp_constant_without_set_dynamics() {
        let params = DeviceParams { k_s: 0.0, ..DeviceParams::default() };
        let res = run_ltp_ltd(1.2, 1e-3, 5, &SimConfig::pulse().with_compliance(1e-3), &params).unwrap();
        assert!(res.ltp.g.windows(2).all(|p| p[0] == p[1]));
        assert_eq!(res.ltp.w[0], 0.0);
        assert_eq!(res.ltp.g.len(), 6);
    }

    #[test]
    fn dead_zone_amplitude_is_flat() {
        let params = DeviceParams { tau_ret: f64::INFINITY, ..DeviceParams::default() };
        let res = run_amplitude_series(&[0.0], 10e-6, 5, &SimConfig::pulse(), &params).unwrap();
        let s = &res.series[0];
        assert!(s.potentiation.g.windows(2).all(|p| p[0] == p[1]));
        assert!(s.depression.g.windows(2).all(|p| p[0] == p[1]));
    }

    #[test]
    fn reset_staircase_without_reset_dynamics() {
        let params = DeviceParams { k_r: 0.0, ..DeviceParams::default() };
        let st = StaircaseSettings::reset_default();
        let res = run_reset_staircase(&[-0.8, -1.0], 1e-3, &st, &SimConfig::dc(), &params).unwrap();
        let lrs = res.steps[0].r;
        assert!(res.steps.iter().all(|s| (s.r - lrs).abs() / lrs < 1e-9));
        let one = run_reset_staircase(&[-1.2], 1e-3, &st, &SimConfig::dc(), &params).unwrap();
        assert_eq!(one.steps.len(), 1);
        assert!(run_reset_staircase(&[-1.0, -0.8], 1e-3, &st, &SimConfig::dc(), &params).is_err());
    }

    #[test]
    fn set_staircase_at_dead_zone_keeps_hrs() {
        let params = DeviceParams { tau_ret: f64::INFINITY, ..DeviceParams::default() };
        let st = StaircaseSettings::set_default();
        let res = run_set_staircase(&[params.v_dz], 5e-3, &st, &SimConfig::pulse(), &params).unwrap();
        let g_hrs = crate::device::read_conductance(&DeviceState::new(0.0), &params, 0.1).unwrap();
        assert!((res.steps[0].g - g_hrs).abs() / g_hrs < 1e-9);
    }

    #[test]
    fn stdp_zero_delay_is_null() {
        let params = DeviceParams::default();
        let res = run_stdp(&[0.0], &StdpSettings::default(), &SimConfig::pulse(), &params).unwrap();
        assert!(res.points[0].delta_g.abs() < 1e-9);
    }

    #[test]
    fn precondition_hits_band() {
        let params = DeviceParams::default();
        let st = StdpSettings::default();
        let cfg = SimConfig::pulse();
        for target in [581e-6, 554e-6, 1.2e-3] {
            let s = precondition(&DeviceState::fresh(&params), target, &st, &cfg, &params).unwrap();
            let g = crate::device::read_conductance(&s, &params, 0.1).unwrap();
            assert!(((g - target) / target).abs() <= 0.02, "g = {g}, target {target}");
        }
    }
}
