//! End-to-end acceptance checks on the committed calibrated parameter set.
//!
//! Each check runs the relevant protocol at the stated tolerance and returns
//! a pass/fail line. Used by the `acceptance` test target and by
//! `memsyn selftest`.

use std::fmt;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::analysis;
use crate::calibration::{self, FitConfig, SimplexOptions, Target, TargetFeatures};
use crate::device::{self, DeviceParams, DeviceState};
use crate::error::Result;
use crate::protocols::{self, StaircaseSettings, StdpSettings, Sweep};
use crate::simulator::{self, invariant_counters, SimConfig, Trace};
use crate::waveform::{self, ReadSpec};

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_s: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{:>2}] {}: {} ({:.2} s)", self.id, self.name, self.detail, self.elapsed_s)
    }
}

struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Checks { failures: Vec::new(), notes: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    fn finish(self, id: u32, name: &'static str, elapsed: Duration) -> Outcome {
        let passed = self.failures.is_empty();
        let detail = if passed { self.notes.join("; ") } else { format!("failed: {}", self.failures.join("; ")) };
        Outcome { id, name, passed, detail, elapsed_s: elapsed.as_secs_f64() }
    }
}

fn timed(id: u32, name: &'static str, body: impl FnOnce(&mut Checks) -> Result<()>) -> Outcome {
    let start = Instant::now();
    let mut checks = Checks::new();
    if let Err(e) = body(&mut checks) {
        checks.failures.push(format!("error: {e}"));
    }
    checks.finish(id, name, start.elapsed())
}

fn dc_trace(params: &DeviceParams) -> Result<(DeviceState, Trace)> {
    protocols::dc_sweep_trace(&Sweep::default(), 1e-3, &DeviceState::fresh(params), &SimConfig::dc(), params)
}

fn nondecreasing(v: &[f64]) -> bool {
    v.windows(2).all(|p| p[1] >= p[0])
}

fn nonincreasing(v: &[f64]) -> bool {
    v.windows(2).all(|p| p[1] <= p[0])
}

/// Number of states separable at `rel` relative spacing, counting greedily
/// upward from the smallest.
pub fn distinguishable_states(values: &[f64], rel: f64) -> usize {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mut count = 0;
    let mut last: Option<f64> = None;
    for x in v {
        if last.is_none_or(|l| (x - l) / l.abs() > rel) {
            count += 1;
            last = Some(x);
        }
    }
    count
}

pub fn hysteresis(params: &DeviceParams) -> Outcome {
    timed(1, "hysteresis", |c| {
        let start = Instant::now();
        let (_, trace) = dc_trace(params)?;
        let elapsed = start.elapsed().as_secs_f64();
        let area = analysis::loop_area(&trace);
        c.check(area > 0.0, format!("loop area {area:.3e} A·V > 0"));
        let peak = trace.samples.iter().position(|s| s.v_applied >= 3.0).unwrap_or(trace.samples.len() / 2);
        let mid = |s: &simulator::TraceSample| s.x > 0.1 && s.x < 0.9;
        let set_n = trace.samples[..peak].iter().filter(|s| mid(s)).count();
        let reset_n = trace.samples[peak..].iter().filter(|s| mid(s)).count();
        c.check(set_n >= 2, format!("{set_n} samples inside the SET transition"));
        c.check(reset_n >= 2, format!("{reset_n} samples inside the RESET transition"));
        c.check(elapsed < 5.0, format!("sweep took {elapsed:.3} s < 5 s"));
        Ok(())
    })
}

pub fn sclc_regimes(params: &DeviceParams) -> Outcome {
    timed(2, "sclc regimes", |c| {
        let (lrs, hrs) = protocols::programmed_states(&Sweep::default(), 1e-3, params)?;
        let grid = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            (0..n).map(|k| lo * ((hi / lo).ln() * k as f64 / (n - 1) as f64).exp()).collect()
        };
        let hrs_pts: Vec<(f64, f64)> = grid(0.01, 3.0, 60).into_iter().map(|v| (v, device::device_current(v, &hrs, params))).collect();
        let fit = analysis::fit_loglog_segments(&hrs_pts, 3)?;
        let (low, high, bp) = (fit.slopes[0], fit.slopes[2], fit.breakpoints[0]);
        c.check((low - 1.1).abs() <= 0.15, format!("HRS low slope {low:.3} (1.1 ± 0.15)"));
        c.check((bp - 0.4).abs() <= 0.1, format!("first breakpoint {bp:.3} V (0.4 ± 0.1)"));
        c.check((high - 2.0).abs() <= 0.3, format!("HRS high slope {high:.3} (2.0 ± 0.3)"));
        let lrs_pts: Vec<(f64, f64)> = grid(0.01, 0.3, 30).into_iter().map(|v| (v, device::device_current(v, &lrs, params))).collect();
        let lrs_slope = analysis::fit_loglog_segments(&lrs_pts, 1)?.slopes[0];
        c.check((lrs_slope - 1.0).abs() <= 0.05, format!("LRS slope {lrs_slope:.3} (1.0 ± 0.05)"));
        Ok(())
    })
}

pub fn dc_endurance(params: &DeviceParams) -> Outcome {
    timed(3, "dc endurance", |c| {
        let r = protocols::run_iv_cycles(120, &Sweep::default(), 1e-3, &SimConfig::dc(), params)?;
        c.check(r.failure_cycle.is_none() && r.cycles.len() == 120, format!("{} cycles, failure {:?}", r.cycles.len(), r.failure_cycle));
        let m = r.median_ratio().unwrap_or(f64::NAN);
        c.check((11.0..=44.0).contains(&m), format!("median R_OFF/R_ON {m:.2} in [11, 44]"));
        Ok(())
    })
}

pub fn pulsed_endurance(params: &DeviceParams) -> Outcome {
    timed(4, "pulsed endurance", |c| {
        let start = Instant::now();
        let r = protocols::run_endurance_pulsed(1.5, -1.0, 100e-6, 600, &SimConfig::pulse(), params)?;
        let elapsed = start.elapsed().as_secs_f64();
        let m = r.pre_failure_median_window().unwrap_or(f64::NAN);
        c.check((17.0..=68.0).contains(&m), format!("median window {m:.2} in [17, 68]"));
        c.check(r.failure_cycle.is_some_and(|f| (400..=500).contains(&f)), format!("failure cycle {:?} in [400, 500]", r.failure_cycle));
        c.check(elapsed < 30.0, format!("run took {elapsed:.3} s < 30 s"));
        Ok(())
    })
}

pub fn retention(params: &DeviceParams) -> Outcome {
    timed(5, "retention", |c| {
        let (lrs, hrs) = protocols::programmed_states(&Sweep::default(), 1e-3, params)?;
        let r = protocols::run_retention(1e4, 100.0, &lrs, &hrs, &SimConfig::dc().with_dt_max(1.0), params)?;
        let (dl, dh) = r.drift();
        c.check(dl < 0.05, format!("LRS drift {:.3}%", 100.0 * dl));
        c.check(dh < 0.05, format!("HRS drift {:.3}%", 100.0 * dh));
        Ok(())
    })
}

pub fn multilevel(params: &DeviceParams) -> Outcome {
    timed(6, "multilevel", |c| {
        let r = protocols::run_multilevel(&[0.5e-3, 1e-3, 5e-3], &Sweep::default(), &SimConfig::dc(), params)?;
        let rs: Vec<f64> = r.levels.iter().map(|l| l.r_lrs).collect();
        let strict = rs.windows(2).all(|p| p[1] < p[0]);
        c.check(strict, format!("r_lrs {:?} Ω strictly decreasing", rs.iter().map(|r| r.round()).collect::<Vec<_>>()));
        Ok(())
    })
}

fn ltp_cfg() -> SimConfig {
    SimConfig::pulse().with_compliance(1e-3)
}

pub fn ltp_ltd(params: &DeviceParams) -> Outcome {
    timed(7, "ltp/ltd", |c| {
        let r = protocols::run_ltp_ltd(1.2, 1e-3, 50, &ltp_cfg(), params)?;
        c.check(nondecreasing(&r.ltp.g), "LTP nondecreasing");
        let rise = r.ltp.relative_change();
        c.check(rise >= 0.5, format!("LTP rise {:.0}% >= 50%", 100.0 * rise));
        c.check(nonincreasing(&r.ltd.g), "LTD nonincreasing");
        Ok(())
    })
}

pub fn amplitude_series(params: &DeviceParams) -> Outcome {
    timed(8, "amplitude series", |c| {
        let r = protocols::run_amplitude_series(&[1.0, 1.2, 1.4], 10e-6, 50, &SimConfig::pulse(), params)?;
        let g: Vec<&Vec<f64>> = r.series.iter().map(|s| &s.potentiation.g).collect();
        let after = 20;
        let ordered = (after..g[0].len()).all(|n| g[2][n] > g[1][n] && g[1][n] > g[0][n]);
        c.check(ordered, format!("G(1.4) > G(1.2) > G(1.0) from pulse {after} on"));
        let top = g[2];
        let argmax = (0..top.len()).fold(0, |b, n| if top[n] > top[b] { n } else { b });
        c.check((20..=35).contains(&argmax), format!("1.4 V maximum at pulse {argmax} in [20, 35]"));
        let last = top[top.len() - 1];
        c.check(last < top[argmax], format!("final {last:.4e} S below maximum {:.4e} S", top[argmax]));
        Ok(())
    })
}

pub fn staircases(params: &DeviceParams) -> Outcome {
    timed(9, "staircases", |c| {
        let reset = protocols::run_reset_staircase(
            &protocols::voltage_steps(-0.8, -1.5, 0.1),
            1e-3,
            &StaircaseSettings::reset_default(),
            &SimConfig::pulse(),
            params,
        )?;
        let r: Vec<f64> = reset.steps.iter().map(|s| s.r).collect();
        c.check(nondecreasing(&r) && r[r.len() - 1] > r[0], format!("HRS {:?} Ω rises with |V_RESET|", r.iter().map(|v| v.round()).collect::<Vec<_>>()));
        let set = protocols::run_set_staircase(
            &protocols::voltage_steps(0.8, 1.5, 0.1),
            5e-3,
            &StaircaseSettings::set_default(),
            &SimConfig::pulse(),
            params,
        )?;
        let g: Vec<f64> = set.steps.iter().map(|s| s.g).collect();
        c.check(nondecreasing(&g), "conductance nondecreasing in V_SET");
        let states = distinguishable_states(&g, 0.05);
        c.check(states >= 6, format!("{states} states separated by > 5%"));
        Ok(())
    })
}

pub fn stdp(params: &DeviceParams) -> Outcome {
    timed(10, "stdp", |c| {
        let side = [5e-6, 10e-6, 20e-6, 40e-6];
        let mut dts: Vec<f64> = side.iter().map(|d| -d).collect();
        dts.push(0.0);
        dts.extend_from_slice(&side);
        let r = protocols::run_stdp(&dts, &StdpSettings::default(), &SimConfig::pulse(), params)?;
        let dg = |dt: f64| r.points.iter().find(|p| p.delta_t == dt).map(|p| p.delta_g).unwrap_or(f64::NAN);
        let signs = dts.iter().filter(|&&d| d != 0.0).all(|&d| dg(d).signum() == d.signum() && dg(d) != 0.0);
        c.check(signs, "sign(ΔG) = sign(Δt)");
        for (label, sgn) in [("potentiation", 1.0), ("depression", -1.0)] {
            let mags: Vec<f64> = side.iter().map(|&d| dg(sgn * d).abs()).collect();
            let strict = mags.windows(2).all(|p| p[1] < p[0]);
            c.check(strict, format!("{label} |ΔG| {:?} strictly decreasing", mags.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>()));
        }
        let zero = dg(0.0).abs();
        c.check(zero < 0.01, format!("|ΔG(0)| = {zero:.2e} < 1%"));
        Ok(())
    })
}

pub fn power_ordering(params: &DeviceParams) -> Outcome {
    timed(11, "power ordering", |c| {
        let (_, trace) = dc_trace(params)?;
        let p = analysis::switching_power(&trace);
        match (p.p_set, p.p_reset) {
            (Some(s), Some(r)) => c.check(r > s, format!("p_reset {:.3} mW > p_set {:.3} mW", r * 1e3, s * 1e3)),
            _ => c.check(false, format!("missing switching event {p:?}")),
        }
        Ok(())
    })
}

fn ltp_final_x(params: &DeviceParams, dx_max: f64) -> Result<f64> {
    let w = waveform::pulse_train(1.2, 1e-3, protocols::PULSE_GAP, 50, ReadSpec::default())?;
    let cfg = ltp_cfg().with_dx_max(dx_max);
    Ok(simulator::run_final(&w, &DeviceState::fresh(params), &cfg, params)?.x)
}

/// Property checks. `invariants_since` is the counter snapshot taken before
/// the other criteria ran.
pub fn properties(params: &DeviceParams, invariants_since: (u64, u64)) -> Outcome {
    timed(12, "property suites", |c| {
        let dx = 0.01;
        let (a, b) = (ltp_final_x(params, dx)?, ltp_final_x(params, dx / 2.0)?);
        c.check((a - b).abs() < 1e-3, format!("dx_max halving moves final x by {:.2e}", (a - b).abs()));

        let run_twice = || -> Result<bool> {
            let cfg = SimConfig::dc().with_seed(42);
            let x = protocols::run_iv_cycles(3, &Sweep::default(), 1e-3, &cfg, params)?;
            let y = protocols::run_iv_cycles(3, &Sweep::default(), 1e-3, &cfg, params)?;
            let st = StdpSettings::default();
            let s1 = protocols::run_stdp(&[-10e-6, 10e-6], &st, &SimConfig::pulse().with_seed(42), params)?;
            let s2 = protocols::run_stdp(&[-10e-6, 10e-6], &st, &SimConfig::pulse().with_seed(42), params)?;
            Ok(x == y && s1 == s2)
        };
        c.check(run_twice()?, "repeated seeds give bit-identical results");

        let q = calibration::minimize_simplex(|x| (x[0] - 3.0).powi(2), &[0.0], &SimplexOptions::unbounded(2000))?;
        c.check((q.x[0] - 3.0).abs() < 1e-6, format!("quadratic minimum at {:.9}", q.x[0]));
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = calibration::minimize_simplex(rosen, &[-1.2, 1.0], &SimplexOptions::unbounded(10_000))?;
        c.check((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 1e-3, format!("Rosenbrock minimum at ({:.5}, {:.5})", r.x[0], r.x[1]));

        let probe = TargetFeatures { hrs_slope_low: Target::new(1.0, 1.0), on_off_dc: Target::new(1.0, 1.0), ..TargetFeatures::none() };
        let targets = probe.with_values_from(&calibration::measure(params, &probe, 0)?);
        let cfg = FitConfig { restarts: 3, max_evals: 120, ..FitConfig::default() };
        let base = DeviceParams { a1: 3e-4, n1: 1.3, ..*params };
        let fit = calibration::fit(&targets, &base, &cfg)?;
        let worst = cfg
            .dims
            .iter()
            .map(|d| ((fit.params.get(&d.name).unwrap() - params.get(&d.name).unwrap()) / params.get(&d.name).unwrap()).abs())
            .fold(0.0, f64::max);
        c.check(worst < 0.1, format!("fit recovers a1, n1 within {:.2}%", 100.0 * worst));

        let (checked, bad) = invariant_counters();
        let (checked, bad) = (checked - invariants_since.0, bad - invariants_since.1);
        c.check(bad == 0 && checked > 0, format!("{bad} of {checked} samples violate x in [0, 1] or |i| <= i_cc"));
        Ok(())
    })
}

/// Run every criterion on `params`, in order.
pub fn run_all(params: &DeviceParams) -> Vec<Outcome> {
    let since = invariant_counters();
    let mut out = vec![
        hysteresis(params),
        sclc_regimes(params),
        dc_endurance(params),
        pulsed_endurance(params),
        retention(params),
        multilevel(params),
        ltp_ltd(params),
        amplitude_series(params),
        staircases(params),
        stdp(params),
        power_ordering(params),
    ];
    out.push(properties(params, since));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinguishable_counts() {
        assert_eq!(distinguishable_states(&[1.0, 1.01, 1.2, 1.3, 2.0], 0.05), 4);
        assert_eq!(distinguishable_states(&[], 0.05), 0);
    }
}
