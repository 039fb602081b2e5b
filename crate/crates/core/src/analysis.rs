//! Figures of merit extracted from traces and conductance series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::Trace;

/// Relative conductance change `(g_after - g_before) / g_before`.
pub fn delta_g(g_before: f64, g_after: f64) -> Result<f64> {
    if !(g_before > 0.0) {
        return Err(Error::invalid(format!("g_before must be > 0, got {g_before}")));
    }
    Ok((g_after - g_before) / g_before)
}

pub fn on_off_ratio(r_off: f64, r_on: f64) -> Result<f64> {
    if !(r_off > 0.0 && r_on > 0.0) {
        return Err(Error::invalid(format!("resistances must be > 0, got r_off = {r_off}, r_on = {r_on}")));
    }
    Ok(r_off / r_on)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SwitchingPower {
    pub p_set: Option<f64>,
    pub p_reset: Option<f64>,
}

/// Power |v_device * i| at the first upward and first downward crossing of
/// `x = 0.5`, taken at the first sample past the crossing.
pub fn switching_power(trace: &Trace) -> SwitchingPower {
    let mut out = SwitchingPower::default();
    for pair in trace.samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if out.p_set.is_none() && a.x < 0.5 && b.x >= 0.5 {
            out.p_set = Some((b.v_device * b.i).abs());
        }
        if out.p_reset.is_none() && a.x > 0.5 && b.x <= 0.5 {
            out.p_reset = Some((b.v_device * b.i).abs());
        }
        if out.p_set.is_some() && out.p_reset.is_some() {
            break;
        }
    }
    out
}

/// Signed area enclosed by the I–V trajectory (applied voltage axis), A·V.
pub fn loop_area(trace: &Trace) -> f64 {
    trace
        .samples
        .windows(2)
        .map(|p| 0.5 * (p[0].i + p[1].i) * (p[1].v_applied - p[0].v_applied))
        .sum()
}

/// Piecewise power-law fit in log–log coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    /// Regime boundaries, V (one fewer than slopes).
    pub breakpoints: Vec<f64>,
    /// Log–log slope of each regime.
    pub slopes: Vec<f64>,
    /// Sum of squared residuals of log I.
    pub residual: f64,
}

const MIN_SEGMENT: usize = 3;

/// Prefix sums for O(1) least-squares fits over any contiguous range.
struct Moments {
    sx: Vec<f64>,
    sy: Vec<f64>,
    sxx: Vec<f64>,
    sxy: Vec<f64>,
    syy: Vec<f64>,
}

impl Moments {
    fn new(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        let mut m = Moments {
            sx: vec![0.0; n + 1],
            sy: vec![0.0; n + 1],
            sxx: vec![0.0; n + 1],
            sxy: vec![0.0; n + 1],
            syy: vec![0.0; n + 1],
        };
        for k in 0..n {
            let (x, y) = (xs[k], ys[k]);
            m.sx[k + 1] = m.sx[k] + x;
            m.sy[k + 1] = m.sy[k] + y;
            m.sxx[k + 1] = m.sxx[k] + x * x;
            m.sxy[k + 1] = m.sxy[k] + x * y;
            m.syy[k + 1] = m.syy[k] + y * y;
        }
        m
    }

    /// (slope, residual) of OLS on indices [a, b).
    fn fit(&self, a: usize, b: usize) -> (f64, f64) {
        let n = (b - a) as f64;
        let sx = self.sx[b] - self.sx[a];
        let sy = self.sy[b] - self.sy[a];
        let sxx = self.sxx[b] - self.sxx[a] - sx * sx / n;
        let sxy = self.sxy[b] - self.sxy[a] - sx * sy / n;
        let syy = self.syy[b] - self.syy[a] - sy * sy / n;
        if sxx <= 0.0 {
            return (0.0, syy.max(0.0));
        }
        let slope = sxy / sxx;
        (slope, (syy - slope * sxy).max(0.0))
    }
}

/// Fit `k` power-law regimes to positive (V, I) samples by exhaustive search
/// over breakpoints on the sample grid.
pub fn fit_loglog_segments(points: &[(f64, f64)], k: usize) -> Result<SlopeFit> {
    if k == 0 {
        return Err(Error::invalid("segment count must be >= 1"));
    }
    if points.len() < MIN_SEGMENT * k {
        return Err(Error::invalid(format!("need at least {} points for {k} segments, got {}", MIN_SEGMENT * k, points.len())));
    }
    if points.iter().any(|&(v, i)| !(v > 0.0 && i > 0.0 && v.is_finite() && i.is_finite())) {
        return Err(Error::invalid("log-log fit needs strictly positive finite data"));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len();
    let m = Moments::new(&xs, &ys);

    // best[j][e]: minimal residual covering [0, e) with j + 1 segments.
    let inf = f64::INFINITY;
    let mut best = vec![vec![inf; n + 1]; k];
    let mut from = vec![vec![0usize; n + 1]; k];
    for e in MIN_SEGMENT..=n {
        best[0][e] = m.fit(0, e).1;
    }
    for j in 1..k {
        for e in (MIN_SEGMENT * (j + 1))..=n {
            for s in (MIN_SEGMENT * j)..=(e - MIN_SEGMENT) {
                let cand = best[j - 1][s] + m.fit(s, e).1;
                // strict comparison keeps the earliest split on ties
                if cand < best[j][e] {
                    best[j][e] = cand;
                    from[j][e] = s;
                }
            }
        }
    }
    let mut splits = Vec::with_capacity(k + 1);
    let mut e = n;
    splits.push(n);
    for j in (1..k).rev() {
        e = from[j][e];
        splits.push(e);
    }
    splits.push(0);
    splits.reverse();

    let slopes = splits.windows(2).map(|w| m.fit(w[0], w[1]).0).collect();
    let breakpoints = splits[1..k]
        .iter()
        .map(|&s| (0.5 * (xs[s - 1] + xs[s])).exp())
        .collect();
    Ok(SlopeFit { breakpoints, slopes, residual: best[k - 1][n] })
}

/// Normalized weight `w_n = (G_n - G_0) / (G_ext - G_0)` where `G_ext` is
/// the sample farthest from `G_0`. A flat series maps to all zeros.
pub fn normalized_weights(g: &[f64]) -> Vec<f64> {
    let Some(&g0) = g.first() else {
        return Vec::new();
    };
    let ext = g.iter().copied().fold(g0, |acc, v| if (v - g0).abs() > (acc - g0).abs() { v } else { acc });
    let span = ext - g0;
    g.iter().map(|&v| if span == 0.0 { 0.0 } else { (v - g0) / span }).collect()
}

/// Largest deviation of the normalized weight from the linear ramp `n / N`.
pub fn nonlinearity(weights: &[f64]) -> Result<f64> {
    if weights.len() < 3 {
        return Err(Error::invalid("nonlinearity needs at least 3 points"));
    }
    let big_n = (weights.len() - 1) as f64;
    Ok(weights
        .iter()
        .enumerate()
        .map(|(n, &w)| (w - n as f64 / big_n).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{SimConfig, TraceMeta, TraceSample};
    use approx::assert_relative_eq;

    fn trace(xs: &[(f64, f64, f64)]) -> Trace {
        let samples = xs
            .iter()
            .enumerate()
            .map(|(k, &(x, v, i))| TraceSample { t: k as f64, v_applied: v, v_device: v, i, x, damage: 0.0 })
            .collect();
        Trace { samples, meta: TraceMeta { params_hash: String::new(), seed: 0, config: SimConfig::dc() } }
    }

    #[test]
    fn delta_g_cases() {
        assert_eq!(delta_g(581e-6, 581e-6).unwrap(), 0.0);
        assert_relative_eq!(delta_g(500e-6, 600e-6).unwrap(), 0.2, max_relative = 1e-12);
        assert_relative_eq!(delta_g(554e-6, 443.2e-6).unwrap(), -0.2, max_relative = 1e-12);
        assert!(delta_g(0.0, 1.0).is_err());
    }

    #[test]
    fn on_off_cases() {
        assert_relative_eq!(on_off_ratio(22e3, 1e3).unwrap(), 22.0);
        assert_eq!(on_off_ratio(7.0, 7.0).unwrap(), 1.0);
        assert_relative_eq!(on_off_ratio(34.0 * 150.0, 150.0).unwrap(), 34.0);
        assert!(on_off_ratio(-1.0, 1.0).is_err());
    }

    #[test]
    fn switching_power_at_crossing() {
        let t = trace(&[(0.1, 0.5, 1e-6), (0.3, 0.8, 10e-6), (0.6, 1.0, 45e-6), (0.9, 1.0, 60e-6)]);
        let p = switching_power(&t);
        assert_relative_eq!(p.p_set.unwrap(), 0.045e-3, max_relative = 1e-12);
        assert!(p.p_reset.is_none());
    }

    #[test]
    fn slope_of_pure_power_laws() {
        let grid: Vec<f64> = (0..40).map(|k| 0.05 * 1.1f64.powi(k)).collect();
        let sq: Vec<_> = grid.iter().map(|&v| (v, 3e-4 * v * v)).collect();
        let fit = fit_loglog_segments(&sq, 3).unwrap();
        assert!(fit.slopes.iter().all(|s| (s - 2.0).abs() < 0.01), "{:?}", fit.slopes);
        let lin: Vec<_> = grid.iter().map(|&v| (v, 1e-3 * v)).collect();
        let fit = fit_loglog_segments(&lin, 2).unwrap();
        assert!(fit.slopes.iter().all(|s| (s - 1.0).abs() < 0.01));
    }

    #[test]
    fn fit_errors() {
        assert!(fit_loglog_segments(&[(1.0, 1.0); 5], 2).is_err());
        assert!(fit_loglog_segments(&[(1.0, 1.0), (2.0, -1.0), (3.0, 1.0)], 1).is_err());
    }

    #[test]
    fn nonlinearity_cases() {
        let lin: Vec<f64> = (0..=10).map(|n| n as f64 / 10.0).collect();
        assert!(nonlinearity(&lin).unwrap() < 1e-12);
        let mut step = vec![0.0; 10];
        step.push(1.0);
        assert_relative_eq!(nonlinearity(&step).unwrap(), 9.0 / 10.0, max_relative = 1e-12);
        let quad: Vec<f64> = (0..=4).map(|n| (n as f64 / 4.0).powi(2)).collect();
        assert_relative_eq!(nonlinearity(&quad).unwrap(), 0.25, max_relative = 1e-12);
        assert!(nonlinearity(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn weights_normalize_both_directions() {
        assert_eq!(normalized_weights(&[1.0, 2.0, 3.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalized_weights(&[3.0, 2.0, 1.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalized_weights(&[2.0, 2.0]), vec![0.0, 0.0]);
    }
}
