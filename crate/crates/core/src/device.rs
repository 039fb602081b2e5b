//! Compact model of the Ag/GO/FTO cell.
//!
//! Conduction is a linear mix of two branches weighted by the filament
//! fraction `x`:
//!
//! ```text
//! I = (1 - x) * I_hrs(V) + x * g_on_eff * V
//! ```
//!
//! The HRS branch is a three-regime space-charge-limited law (Ohmic,
//! trap-filled, Child square law) with continuity-derived prefactors. The
//! state moves under an exponentially voltage-activated rate with polynomial
//! windows, frozen inside a dead zone where only a slow relaxation toward
//! `x_init` acts. Joule energy above a current threshold accumulates as
//! damage, attenuates the LRS conductance and finally latches the cell in a
//! stuck-LRS failure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical coefficients of the compact model.
///
/// `Default` is the committed calibrated parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    /// HRS low-bias prefactor, A·V^-n1.
    pub a1: f64,
    /// Low-bias (Ohmic) exponent.
    pub n1: f64,
    /// Trap-filled exponent.
    pub n2: f64,
    /// Ohmic to trap-filled boundary, V.
    pub v1: f64,
    /// Trap-filled to square-law boundary, V.
    pub v2: f64,
    /// LRS conductance, S.
    pub g_on: f64,
    /// SET rate constant, 1/s.
    pub k_s: f64,
    /// RESET rate constant, 1/s.
    pub k_r: f64,
    /// SET exponential voltage scale, V.
    pub v0s: f64,
    /// RESET exponential voltage scale, V.
    pub v0r: f64,
    /// Dead-zone voltage below which switching freezes, V.
    pub v_dz: f64,
    /// Window exponent.
    pub p: f64,
    /// Retention drift time constant, s. Infinite disables drift.
    #[serde(with = "inf_as_null")]
    pub tau_ret: f64,
    /// Current magnitude above which Joule energy counts as damage, A.
    pub i_damage: f64,
    /// Accumulated damage at which the cell fails, J.
    #[serde(with = "inf_as_null")]
    pub d_fail: f64,
    /// LRS attenuation per unit damage, 1/J.
    pub beta_sag: f64,
    /// Cycle-to-cycle lognormal sigma applied to `k_s` and `k_r`.
    pub sigma_c2c: f64,
    /// Initial filament fraction of a fresh cell.
    pub x_init: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        calibrated::PARAMS
    }
}

/// The committed calibrated parameter set.
pub mod calibrated {
    use super::DeviceParams;

    pub const PARAMS: DeviceParams = DeviceParams {
        a1: 1.89e-4,
        n1: 1.1,
        n2: 3.0,
        v1: 0.4,
        v2: 1.5,
        g_on: 4.4e-3,
        k_s: 143.0,
        k_r: 0.0207,
        v0s: 0.2,
        v0r: 0.047,
        v_dz: 0.3,
        p: 1.0,
        tau_ret: 1.0e7,
        i_damage: 5.5e-3,
        d_fail: 3.3e-4,
        beta_sag: 270.0,
        sigma_c2c: 0.05,
        x_init: 0.0,
    };
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("a1", self.a1),
            ("n1", self.n1),
            ("n2", self.n2),
            ("v1", self.v1),
            ("v2", self.v2),
            ("g_on", self.g_on),
            ("k_s", self.k_s),
            ("k_r", self.k_r),
            ("v0s", self.v0s),
            ("v0r", self.v0r),
            ("v_dz", self.v_dz),
            ("p", self.p),
            ("i_damage", self.i_damage),
            ("beta_sag", self.beta_sag),
            ("sigma_c2c", self.sigma_c2c),
            ("x_init", self.x_init),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        let checks: [(&str, bool, &str); 16] = [
            ("a1", self.a1 > 0.0, "> 0"),
            ("g_on", self.g_on > 0.0, "> 0"),
            ("k_s", self.k_s >= 0.0, ">= 0"),
            ("k_r", self.k_r >= 0.0, ">= 0"),
            ("v0s", self.v0s > 0.0, "> 0"),
            ("v0r", self.v0r > 0.0, "> 0"),
            ("tau_ret", self.tau_ret > 0.0, "> 0"),
            ("d_fail", self.d_fail > 0.0, "> 0"),
            ("beta_sag", self.beta_sag >= 0.0, ">= 0"),
            ("sigma_c2c", self.sigma_c2c >= 0.0, ">= 0"),
            ("n1", (1.0..=1.5).contains(&self.n1), "in [1, 1.5]"),
            ("n2", self.n2 > 2.0, "> 2"),
            ("v1", self.v1 > 0.0 && self.v1 < self.v2, "in (0, v2)"),
            ("v_dz", self.v_dz > 0.0, "> 0"),
            ("x_init", (0.0..=1.0).contains(&self.x_init), "in [0, 1]"),
            ("p", self.p >= 0.0, ">= 0"),
        ];
        for (name, ok, bound) in checks {
            if !ok {
                return Err(Error::invalid(format!("{name} must be {bound}")));
            }
        }
        if self.i_damage < 0.0 {
            return Err(Error::invalid("i_damage must be >= 0"));
        }
        Ok(())
    }

    pub const NAMES: [&'static str; 18] = ["a1", "n1", "n2", "v1", "v2", "g_on", "k_s", "k_r", "v0s", "v0r", "v_dz", "p", "tau_ret", "i_damage", "d_fail", "beta_sag", "sigma_c2c", "x_init"];

    /// Field value by name.
    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "a1" => self.a1,
            "n1" => self.n1,
            "n2" => self.n2,
            "v1" => self.v1,
            "v2" => self.v2,
            "g_on" => self.g_on,
            "k_s" => self.k_s,
            "k_r" => self.k_r,
            "v0s" => self.v0s,
            "v0r" => self.v0r,
            "v_dz" => self.v_dz,
            "p" => self.p,
            "tau_ret" => self.tau_ret,
            "i_damage" => self.i_damage,
            "d_fail" => self.d_fail,
            "beta_sag" => self.beta_sag,
            "sigma_c2c" => self.sigma_c2c,
            "x_init" => self.x_init,
            _ => return Err(Error::invalid(format!("unknown device parameter `{name}`"))),
        })
    }

    /// Set a field by name. Does not validate the resulting set.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "a1" => &mut self.a1,
            "n1" => &mut self.n1,
            "n2" => &mut self.n2,
            "v1" => &mut self.v1,
            "v2" => &mut self.v2,
            "g_on" => &mut self.g_on,
            "k_s" => &mut self.k_s,
            "k_r" => &mut self.k_r,
            "v0s" => &mut self.v0s,
            "v0r" => &mut self.v0r,
            "v_dz" => &mut self.v_dz,
            "p" => &mut self.p,
            "tau_ret" => &mut self.tau_ret,
            "i_damage" => &mut self.i_damage,
            "d_fail" => &mut self.d_fail,
            "beta_sag" => &mut self.beta_sag,
            "sigma_c2c" => &mut self.sigma_c2c,
            "x_init" => &mut self.x_init,
            _ => return Err(Error::invalid(format!("unknown device parameter `{name}`"))),
        };
        *slot = value;
        Ok(())
    }

    /// Continuity-derived prefactor of the trap-filled regime.
    pub fn a2(&self) -> f64 {
        self.a1 * self.v1.powf(self.n1 - self.n2)
    }

    /// Continuity-derived prefactor of the square-law regime.
    pub fn a3(&self) -> f64 {
        self.a2() * self.v2.powf(self.n2 - 2.0)
    }

    /// LRS conductance after damage-induced attenuation.
    pub fn g_on_eff(&self, damage: f64) -> f64 {
        self.g_on * (1.0 - self.beta_sag * damage).max(0.0)
    }

    /// Short stable digest of the parameter set, used in output metadata.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("params serialize");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Mutable condition of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    /// Filament fraction in [0, 1].
    pub x: f64,
    /// Accumulated Joule damage, J.
    pub damage: f64,
    pub failed: bool,
    pub cycle_count: u64,
}

impl DeviceState {
    pub fn new(x: f64) -> Self {
        DeviceState {
            x: x.clamp(0.0, 1.0),
            damage: 0.0,
            failed: false,
            cycle_count: 0,
        }
    }

    pub fn fresh(params: &DeviceParams) -> Self {
        Self::new(params.x_init)
    }
}

/// Static HRS current of the three-regime space-charge-limited law.
pub fn hrs_current(v: f64, params: &DeviceParams) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::invalid(format!("voltage must be finite, got {v}")));
    }
    Ok(hrs_current_unchecked(v, params))
}

pub(crate) fn hrs_current_unchecked(v: f64, params: &DeviceParams) -> f64 {
    let mag = v.abs();
    let i = if mag <= params.v1 {
        params.a1 * mag.powf(params.n1)
    } else if mag <= params.v2 {
        params.a2() * mag.powf(params.n2)
    } else {
        params.a3() * mag * mag
    };
    i.copysign(v)
}

/// Terminal current of a cell in `state` biased at `v`.
pub fn device_current(v: f64, state: &DeviceState, params: &DeviceParams) -> f64 {
    let x = state.x;
    (1.0 - x) * hrs_current_unchecked(v, params) + x * params.g_on_eff(state.damage) * v
}

/// Time derivative of the filament fraction at device voltage `v`.
pub fn state_rate(v: f64, state: &DeviceState, params: &DeviceParams) -> f64 {
    if state.failed {
        return 0.0;
    }
    let x = state.x;
    if v > params.v_dz {
        params.k_s * (((v - params.v_dz) / params.v0s).exp() - 1.0) * window(1.0 - x, params.p)
    } else if v < -params.v_dz {
        -params.k_r * (((-v - params.v_dz) / params.v0r).exp() - 1.0) * window(x, params.p)
    } else if params.tau_ret.is_finite() {
        -(x - params.x_init) / params.tau_ret
    } else {
        0.0
    }
}

fn window(base: f64, p: f64) -> f64 {
    // 0^0 is 1 in powf, which would keep a p = 0 window open; that is the
    // intended behavior for p = 0 and clamping handles the bounds.
    base.max(0.0).powf(p)
}

/// Accumulate Joule damage for an interval of `dt` at (`v`, `i`).
pub fn accrue(state: &DeviceState, v: f64, i: f64, dt: f64, params: &DeviceParams) -> Result<DeviceState> {
    if !(dt >= 0.0) {
        return Err(Error::invalid(format!("dt must be >= 0, got {dt}")));
    }
    Ok(accrue_unchecked(state, v, i, dt, params))
}

pub(crate) fn accrue_unchecked(state: &DeviceState, v: f64, i: f64, dt: f64, params: &DeviceParams) -> DeviceState {
    let mut next = *state;
    if i.abs() >= params.i_damage {
        next.damage += (v * i).abs() * dt;
    }
    if next.damage >= params.d_fail {
        next.failed = true;
    }
    if next.failed {
        next.x = 1.0;
    }
    next
}

/// Small-signal conductance seen by a read at `v_read`.
pub fn read_conductance(state: &DeviceState, params: &DeviceParams, v_read: f64) -> Result<f64> {
    if v_read == 0.0 || !v_read.is_finite() {
        return Err(Error::invalid("read voltage must be finite and nonzero"));
    }
    Ok(device_current(v_read, state, params) / v_read)
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p() -> DeviceParams {
        DeviceParams::default()
    }

    #[test]
    fn named_access_round_trips() {
        let mut p = DeviceParams::default();
        for name in DeviceParams::NAMES {
            let v = p.get(name).unwrap();
            p.set(name, v).unwrap();
        }
        assert_eq!(p, DeviceParams::default());
        p.set("k_s", 7.0).unwrap();
        assert_eq!(p.k_s, 7.0);
        assert!(p.get("nope").is_err());
    }

    #[test]
    fn defaults_are_valid() {
        p().validate().unwrap();
    }

    #[test]
    fn hrs_zero_at_origin() {
        assert_eq!(hrs_current(0.0, &p()).unwrap(), 0.0);
    }

    #[test]
    fn hrs_low_bias_log_slope_is_n1() {
        let params = p();
        let h = 1e-6;
        let lo = hrs_current(0.2 * (1.0 - h), &params).unwrap().ln();
        let hi = hrs_current(0.2 * (1.0 + h), &params).unwrap().ln();
        let slope = (hi - lo) / ((1.0 + h).ln() - (1.0 - h).ln());
        assert_relative_eq!(slope, 1.1, epsilon = 1e-6);
    }

    #[test]
    fn hrs_continuous_at_regime_boundaries() {
        let params = p();
        for b in [params.v1, params.v2] {
            let eps = 1e-12;
            let below = hrs_current(b - eps, &params).unwrap();
            let above = hrs_current(b + eps, &params).unwrap();
            assert_relative_eq!(below, above, max_relative = 1e-9);
            // The two neighbouring closed forms agree exactly at the boundary.
        }
        let a2_at_v1 = params.a2() * params.v1.powf(params.n2);
        assert_relative_eq!(a2_at_v1, params.a1 * params.v1.powf(params.n1), max_relative = 1e-12);
        let a3_at_v2 = params.a3() * params.v2 * params.v2;
        assert_relative_eq!(a3_at_v2, params.a2() * params.v2.powf(params.n2), max_relative = 1e-12);
    }

    #[test]
    fn hrs_rejects_non_finite() {
        assert!(matches!(hrs_current(f64::NAN, &p()), Err(Error::InvalidInput(_))));
        assert!(hrs_current(f64::INFINITY, &p()).is_err());
    }

    #[test]
    fn device_current_limits() {
        let params = p();
        let lrs = DeviceState::new(1.0);
        assert_eq!(device_current(0.7, &lrs, &params), params.g_on * 0.7);
        let hrs = DeviceState::new(0.0);
        assert_eq!(device_current(0.7, &hrs, &params), hrs_current(0.7, &params).unwrap());
        let mid = DeviceState::new(0.5);
        let expect = 0.5 * (hrs_current(0.2, &params).unwrap() + params.g_on * 0.2);
        assert_relative_eq!(device_current(0.2, &mid, &params), expect, max_relative = 1e-14);
    }

    #[test]
    fn rate_dead_zone_and_windows() {
        let mut params = p();
        params.tau_ret = f64::INFINITY;
        let s = DeviceState::new(0.4);
        assert_eq!(state_rate(0.2, &s, &params), 0.0);
        assert_eq!(state_rate(-0.29, &s, &params), 0.0);
        assert_eq!(state_rate(1.0, &DeviceState::new(1.0), &params), 0.0);
        assert_eq!(state_rate(-1.0, &DeviceState::new(0.0), &params), 0.0);
    }

    #[test]
    fn rate_closed_form() {
        let mut params = p();
        params.v_dz = 0.3;
        params.v0s = 0.25;
        params.k_s = 10.0;
        params.p = 1.0;
        let r = state_rate(1.2, &DeviceState::new(0.2), &params);
        let expect = 10.0 * (3.6f64.exp() - 1.0) * 0.8;
        assert_relative_eq!(r, expect, max_relative = 1e-12);
    }

    #[test]
    fn rate_retention_relaxes_toward_init() {
        let mut params = p();
        params.tau_ret = 100.0;
        params.x_init = 0.1;
        let r = state_rate(0.0, &DeviceState::new(0.6), &params);
        assert_relative_eq!(r, -0.005, max_relative = 1e-12);
    }

    #[test]
    fn failed_device_is_frozen() {
        let s = DeviceState { x: 1.0, damage: 1.0, failed: true, cycle_count: 0 };
        assert_eq!(state_rate(-3.0, &s, &p()), 0.0);
    }

    #[test]
    fn accrue_threshold_arithmetic_and_latch() {
        let mut params = p();
        params.i_damage = 5e-4;
        params.d_fail = 2.5e-7;
        let s = DeviceState::new(0.3);
        assert_eq!(accrue(&s, 1.0, 1e-4, 1.0, &params).unwrap(), s);
        let s1 = accrue(&s, 1.0, 1e-3, 100e-6, &params).unwrap();
        assert_relative_eq!(s1.damage, 1e-7, max_relative = 1e-12);
        assert!(!s1.failed);
        let s2 = accrue(&s1, 1.0, 2e-3, 100e-6, &params).unwrap();
        assert!(s2.failed);
        assert_eq!(s2.x, 1.0);
        let s3 = accrue(&s2, 0.0, 0.0, 1.0, &params).unwrap();
        assert!(s3.failed);
        assert!(accrue(&s, 1.0, 1e-3, -1.0, &params).is_err());
    }

    #[test]
    fn read_conductance_cases() {
        let params = p();
        assert_eq!(read_conductance(&DeviceState::new(1.0), &params, 0.1).unwrap(), params.g_on);
        assert!(read_conductance(&DeviceState::new(1.0), &params, 0.0).is_err());
        let g = read_conductance(&DeviceState::new(0.0), &params, 0.1).unwrap();
        assert_relative_eq!(g, params.a1 * 0.1f64.powf(params.n1 - 1.0), max_relative = 1e-12);
    }

    #[test]
    fn params_json_roundtrip_with_infinite_tau() {
        let mut params = p();
        params.tau_ret = f64::INFINITY;
        let s = serde_json::to_string(&params).unwrap();
        assert!(s.contains("\"tau_ret\":null"));
        let back: DeviceParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, params);
    }
}
