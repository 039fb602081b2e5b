//! Time integration of the compact model along a waveform.
//!
//! Each step holds the applied voltage constant (ramps use the step
//! midpoint), resolves the series current limiter, and advances the state in
//! explicit first-order substeps sized so that no substep moves `x` by more
//! than `dx_max`. Steps never straddle a segment boundary.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::device::{self, DeviceParams, DeviceState};
use crate::error::{Error, Result};
use crate::waveform::Waveform;

const MAX_SUBSTEPS: usize = 2_000_000;

static SAMPLES_CHECKED: AtomicU64 = AtomicU64::new(0);
static VIOLATIONS: AtomicU64 = AtomicU64::new(0);

/// Process-wide count of (samples checked, samples violating `0 <= x <= 1`
/// or `|i| <= i_cc`). Every simulated sample is checked.
pub fn invariant_counters() -> (u64, u64) {
    (SAMPLES_CHECKED.load(Ordering::Relaxed), VIOLATIONS.load(Ordering::Relaxed))
}

fn violates(sample: &TraceSample, cfg: &SimConfig) -> bool {
    let x_bad = !(0.0..=1.0).contains(&sample.x);
    let i_bad = cfg.i_cc.is_some_and(|limit| sample.i.abs() > limit * (1.0 + 1e-9)) || !sample.i.is_finite();
    x_bad || i_bad
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Largest step, s.
    pub dt_max: f64,
    /// Largest change of `x` per substep.
    pub dx_max: f64,
    /// Compliance current, A.
    pub i_cc: Option<f64>,
    pub seed: u64,
    /// Record every k-th accepted step.
    pub decimation: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::pulse()
    }
}

impl SimConfig {
    /// Settings for microsecond-scale pulse work.
    pub fn pulse() -> Self {
        SimConfig { dt_max: 1e-6, dx_max: 0.01, i_cc: None, seed: 0, decimation: 1 }
    }

    /// Settings for slow DC sweeps.
    pub fn dc() -> Self {
        SimConfig { dt_max: 1e-2, dx_max: 0.01, i_cc: None, seed: 0, decimation: 1 }
    }

    pub fn with_compliance(mut self, i_cc: f64) -> Self {
        self.i_cc = Some(i_cc);
        self
    }

    pub fn without_compliance(mut self) -> Self {
        self.i_cc = None;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dt_max(mut self, dt_max: f64) -> Self {
        self.dt_max = dt_max;
        self
    }

    pub fn with_dx_max(mut self, dx_max: f64) -> Self {
        self.dx_max = dx_max;
        self
    }

    pub fn with_decimation(mut self, decimation: usize) -> Self {
        self.decimation = decimation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(Error::invalid("dt_max must be > 0"));
        }
        if !(self.dx_max > 0.0 && self.dx_max < 1.0) {
            return Err(Error::invalid("dx_max must be in (0, 1)"));
        }
        if let Some(i) = self.i_cc {
            if !(i > 0.0 && i.is_finite()) {
                return Err(Error::invalid("i_cc must be > 0 when present"));
            }
        }
        if self.decimation == 0 {
            return Err(Error::invalid("decimation must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub v_applied: f64,
    pub v_device: f64,
    pub i: f64,
    pub x: f64,
    pub damage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub params_hash: String,
    pub seed: u64,
    pub config: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub samples: Vec<TraceSample>,
    pub meta: TraceMeta,
}

/// Conductance measurement taken at the end of a read block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadSample {
    pub t: f64,
    pub v: f64,
    pub i: f64,
    pub g: f64,
    pub segment: usize,
}

/// Device voltage and terminal current for an applied voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub v_device: f64,
    pub i: f64,
    pub clamped: bool,
}

/// Resolve the ideal series current limiter.
///
/// When the unclamped current exceeds `i_cc`, the device voltage is the one
/// at which the device itself carries exactly `i_cc`.
pub fn operating_point(v_applied: f64, state: &DeviceState, params: &DeviceParams, i_cc: Option<f64>) -> OperatingPoint {
    let i_u = device::device_current(v_applied, state, params);
    match i_cc {
        Some(limit) if i_u.abs() > limit => {
            let v_mag = solve_for_current(v_applied.abs(), limit, state, params);
            OperatingPoint { v_device: v_mag.copysign(v_applied), i: limit.copysign(i_u), clamped: true }
        }
        _ => OperatingPoint { v_device: v_applied, i: i_u, clamped: false },
    }
}

/// Find v in (0, v_hi) with I(v) = target; I is odd and increasing.
fn solve_for_current(v_hi: f64, target: f64, state: &DeviceState, params: &DeviceParams) -> f64 {
    let g_lrs = state.x * params.g_on_eff(state.damage);
    let current = |v: f64| device::device_current(v, state, params);
    let slope = |v: f64| {
        let h = device::hrs_current_unchecked(v, params);
        let n = if v <= params.v1 {
            params.n1
        } else if v <= params.v2 {
            params.n2
        } else {
            2.0
        };
        (1.0 - state.x) * n * h / v + g_lrs
    };
    let (mut lo, mut hi) = (0.0, v_hi);
    let mut v = if g_lrs > 0.0 { (target / g_lrs).min(v_hi) } else { 0.5 * v_hi };
    if !(v > 0.0 && v < v_hi) {
        v = 0.5 * v_hi;
    }
    for _ in 0..100 {
        let f = current(v) - target;
        if f.abs() <= 1e-14 * target {
            return v;
        }
        if f > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let d = slope(v);
        let newton = v - f / d;
        v = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-15 * v_hi {
            break;
        }
    }
    v
}

/// Advance the state for `dt` at fixed applied voltage.
fn advance(state: &DeviceState, v_applied: f64, dt: f64, cfg: &SimConfig, params: &DeviceParams) -> Result<DeviceState> {
    let mut s = *state;
    let mut remaining = dt;
    let mut substeps = 0usize;
    while remaining > 0.0 {
        let op = operating_point(v_applied, &s, params, cfg.i_cc);
        let rate = device::state_rate(op.v_device, &s, params);
        let h = if rate == 0.0 { remaining } else { remaining.min(cfg.dx_max / rate.abs()) };
        s.x = (s.x + rate * h).clamp(0.0, 1.0);
        s = device::accrue_unchecked(&s, op.v_device, op.i, h, params);
        remaining -= h;
        substeps += 1;
        if substeps > MAX_SUBSTEPS {
            return Err(Error::Simulation(format!(
                "substep budget exhausted at v = {v_applied} V, x = {}",
                s.x
            )));
        }
        if remaining < 1e-12 * dt {
            break;
        }
    }
    Ok(s)
}

/// One integration step of length `dt` at constant applied voltage.
///
/// The returned sample is stamped with `t = dt`, the time elapsed within the
/// step; `run` rebases it onto the waveform clock.
pub fn step(
    state: &DeviceState,
    v_applied: f64,
    dt: f64,
    cfg: &SimConfig,
    params: &DeviceParams,
) -> Result<(DeviceState, TraceSample)> {
    if !(dt >= 0.0) || dt > cfg.dt_max * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("dt = {dt} outside [0, dt_max = {}]", cfg.dt_max)));
    }
    let next = advance(state, v_applied, dt, cfg, params)?;
    Ok((next, observe(dt, v_applied, &next, cfg, params)))
}

fn observe(t: f64, v_applied: f64, state: &DeviceState, cfg: &SimConfig, params: &DeviceParams) -> TraceSample {
    let op = operating_point(v_applied, state, params, cfg.i_cc);
    TraceSample { t, v_applied, v_device: op.v_device, i: op.i, x: state.x, damage: state.damage }
}

/// Walk the waveform, calling `on_sample(sample, segment, is_boundary)` for
/// every accepted step and `on_read` at the end of each read block.
fn drive(
    w: &Waveform,
    s0: &DeviceState,
    cfg: &SimConfig,
    params: &DeviceParams,
    mut on_sample: impl FnMut(&TraceSample, usize, bool),
    mut on_read: impl FnMut(ReadSample),
) -> Result<DeviceState> {
    cfg.validate()?;
    params.validate()?;
    let mut s = *s0;
    let (mut checked, mut bad) = (0u64, 0u64);
    let mut on_sample = |sample: &TraceSample, idx: usize, boundary: bool| {
        checked += 1;
        bad += violates(sample, cfg) as u64;
        on_sample(sample, idx, boundary);
    };
    let v0 = w.sample(0.0)?;
    on_sample(&observe(0.0, v0, &s, cfg, params), 0, true);
    for (idx, seg) in w.segments().iter().enumerate() {
        let (t_start, t_end) = (w.start_of(idx), w.end_of(idx));
        let len = seg.duration();
        let n = ((len / cfg.dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = len / n as f64;
        for k in 0..n {
            let tau0 = k as f64 * h;
            let tau1 = if k + 1 == n { len } else { (k + 1) as f64 * h };
            let v_mid = seg.value_at(0.5 * (tau0 + tau1));
            s = advance(&s, v_mid, tau1 - tau0, cfg, params)?;
            let t = if k + 1 == n { t_end } else { t_start + tau1 };
            let sample = observe(t, seg.value_at(tau1), &s, cfg, params);
            on_sample(&sample, idx, k + 1 == n);
        }
        if seg.is_read() {
            let v = seg.value_at(len);
            let op = operating_point(v, &s, params, cfg.i_cc);
            if v == 0.0 {
                return Err(Error::invalid("read block at 0 V"));
            }
            on_read(ReadSample { t: t_end, v, i: op.i, g: op.i / v, segment: idx });
        }
    }
    SAMPLES_CHECKED.fetch_add(checked, Ordering::Relaxed);
    VIOLATIONS.fetch_add(bad, Ordering::Relaxed);
    Ok(s)
}

/// Integrate over the whole waveform and record a (decimated) trace.
///
/// Segment boundaries and read blocks are always recorded.
pub fn run(w: &Waveform, s0: &DeviceState, cfg: &SimConfig, params: &DeviceParams) -> Result<(DeviceState, Trace)> {
    let mut samples = Vec::new();
    let mut counter = 0usize;
    let segs = w.segments();
    let decimation = cfg.decimation.max(1);
    let end = drive(
        w,
        s0,
        cfg,
        params,
        |sample, idx, boundary| {
            let keep = counter % decimation == 0 || boundary || segs[idx].is_read();
            counter += 1;
            if keep {
                samples.push(*sample);
            }
        },
        |_| {},
    )?;
    let meta = TraceMeta { params_hash: params.hash(), seed: cfg.seed, config: *cfg };
    Ok((end, Trace { samples, meta }))
}

/// Integrate over the waveform keeping only read-block conductances.
pub fn run_reads(
    w: &Waveform,
    s0: &DeviceState,
    cfg: &SimConfig,
    params: &DeviceParams,
) -> Result<(DeviceState, Vec<ReadSample>)> {
    let mut reads = Vec::with_capacity(w.read_count());
    let end = drive(w, s0, cfg, params, |_, _, _| {}, |r| reads.push(r))?;
    Ok((end, reads))
}

/// Integrate over the waveform discarding everything but the final state.
pub fn run_final(w: &Waveform, s0: &DeviceState, cfg: &SimConfig, params: &DeviceParams) -> Result<DeviceState> {
    drive(w, s0, cfg, params, |_, _, _| {}, |_| {})
}

/// Deterministic per-run random stream derived from `(seed, index)`.
pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    // splitmix64 of the pair so neighbouring seeds do not share streams
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// Cycle-to-cycle variability: independent lognormal factors on `k_s`, `k_r`.
pub fn perturb_cycle<R: Rng + ?Sized>(params: &DeviceParams, rng: &mut R) -> DeviceParams {
    let mut out = *params;
    if params.sigma_c2c > 0.0 {
        let normal = Normal::new(0.0, params.sigma_c2c).expect("sigma validated");
        out.k_s *= normal.sample(rng).exp();
        out.k_r *= normal.sample(rng).exp();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{dc_sweep, pulse_train, ReadSpec, WaveformBuilder};
    use approx::assert_relative_eq;

    fn frozen() -> DeviceParams {
        DeviceParams { k_s: 0.0, k_r: 0.0, tau_ret: f64::INFINITY, d_fail: f64::INFINITY, i_damage: 1e9, ..DeviceParams::default() }
    }

    #[test]
    fn zero_bias_step_changes_nothing() {
        let mut params = DeviceParams::default();
        params.tau_ret = f64::INFINITY;
        let s = DeviceState::new(0.42);
        let (next, sample) = step(&s, 0.0, 1e-6, &SimConfig::pulse(), &params).unwrap();
        assert_eq!(next, s);
        assert_eq!(sample.i, 0.0);
    }

    #[test]
    fn compliance_clamp_algebra() {
        let params = DeviceParams { g_on: 1e-2, ..frozen() };
        let cfg = SimConfig::pulse().with_compliance(1e-3);
        let (_, sample) = step(&DeviceState::new(1.0), 1.0, 1e-6, &cfg, &params).unwrap();
        assert_relative_eq!(sample.i, 1e-3, max_relative = 1e-12);
        assert_relative_eq!(sample.v_device, 0.1, max_relative = 1e-9);
    }

    #[test]
    fn step_rejects_oversized_dt() {
        let cfg = SimConfig::pulse();
        assert!(step(&DeviceState::new(0.0), 1.0, 2e-6, &cfg, &DeviceParams::default()).is_err());
    }

    #[test]
    fn clamp_solves_nonlinear_branch() {
        let params = frozen();
        let s = DeviceState::new(0.0);
        let op = operating_point(3.0, &s, &params, Some(1e-3));
        assert!(op.clamped);
        assert_relative_eq!(device::device_current(op.v_device, &s, &params), 1e-3, max_relative = 1e-9);
        let op = operating_point(-3.0, &s, &params, Some(1e-3));
        assert!(op.v_device < 0.0 && op.i == -1e-3);
    }

    #[test]
    fn frozen_device_keeps_state() {
        let params = frozen();
        let w = dc_sweep(2.0, -2.0, 10.0).unwrap();
        let (end, trace) = run(&w, &DeviceState::new(0.3), &SimConfig::dc(), &params).unwrap();
        assert_eq!(end.x, 0.3);
        assert!(trace.samples.iter().all(|s| s.x == 0.3));
    }

    #[test]
    fn trace_starts_at_zero_and_hits_every_boundary() {
        let params = DeviceParams::default();
        let w = pulse_train(1.2, 3.3e-6, 1.7e-6, 3, ReadSpec { v_read: 0.1, w_read: 2.9e-6 }).unwrap();
        let cfg = SimConfig::pulse().with_decimation(5);
        let (_, trace) = run(&w, &DeviceState::new(0.0), &cfg, &params).unwrap();
        assert_eq!(trace.samples[0].t, 0.0);
        assert!(trace.samples.windows(2).all(|p| p[1].t > p[0].t));
        for &b in w.boundaries() {
            assert!(trace.samples.iter().any(|s| s.t == b), "boundary {b} missing");
        }
    }

    #[test]
    fn reads_are_reported_per_block() {
        let params = DeviceParams::default();
        let w = pulse_train(1.2, 10e-6, 5e-6, 4, ReadSpec::default()).unwrap();
        let (_, reads) = run_reads(&w, &DeviceState::new(0.0), &SimConfig::pulse(), &params).unwrap();
        assert_eq!(reads.len(), 5);
        assert!(reads.iter().all(|r| r.g > 0.0));
    }

    #[test]
    fn long_zero_hold_is_conservative() {
        let params = DeviceParams { tau_ret: f64::INFINITY, ..DeviceParams::default() };
        let w = WaveformBuilder::new().hold(0.0, 1e4).build().unwrap();
        let cfg = SimConfig::dc().with_dt_max(10.0);
        let s = DeviceState::new(0.77);
        assert_eq!(run_final(&w, &s, &cfg, &params).unwrap(), s);
    }

    #[test]
    fn perturb_identity_without_sigma() {
        let params = DeviceParams { sigma_c2c: 0.0, ..DeviceParams::default() };
        let mut rng = rng_for(3, 0);
        assert_eq!(perturb_cycle(&params, &mut rng), params);
    }

    #[test]
    fn perturb_reproducible_and_unbiased() {
        let params = DeviceParams { sigma_c2c: 0.2, ..DeviceParams::default() };
        let draw = |seed| {
            let mut rng = rng_for(seed, 1);
            (0..5).map(|_| perturb_cycle(&params, &mut rng).k_s).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));

        let mut rng = rng_for(99, 0);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| (perturb_cycle(&params, &mut rng).k_s / params.k_s).ln())
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 3.0 * params.sigma_c2c / 100.0, "mean log factor {mean}");
    }
}
