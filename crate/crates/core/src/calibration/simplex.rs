//! Nelder–Mead simplex minimization with optional box constraints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Coefficients {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients { reflection: 1.0, expansion: 2.0, contraction: 0.5, shrink: 0.5 }
    }
}

impl Coefficients {
    pub fn validate(&self) -> Result<()> {
        let ok = self.reflection > 0.0
            && self.expansion > 1.0
            && self.expansion > self.reflection
            && self.contraction > 0.0
            && self.contraction < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid simplex coefficients {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    pub max_evals: usize,
    pub coefficients: Coefficients,
    /// Stop once every vertex lies within this distance of the best one,
    /// measured in the optimizer's internal coordinates.
    pub diameter_tol: f64,
    /// Per-dimension box; `None` leaves a dimension unbounded.
    pub bounds: Vec<Option<(f64, f64)>>,
}

impl SimplexOptions {
    pub fn unbounded(max_evals: usize) -> Self {
        SimplexOptions { max_evals, coefficients: Coefficients::default(), diameter_tol: 1e-9, bounds: Vec::new() }
    }

    pub fn with_bounds(mut self, bounds: Vec<Option<(f64, f64)>>) -> Self {
        self.bounds = bounds;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Smooth bijection between an unbounded coordinate and a box side.
#[derive(Debug, Clone, Copy)]
enum Map {
    Free,
    Box(f64, f64),
}

impl Map {
    fn to_box(self, u: f64) -> f64 {
        match self {
            Map::Free => u,
            Map::Box(lo, hi) => lo + (hi - lo) / (1.0 + (-u).exp()),
        }
    }

    fn from_box(self, x: f64) -> f64 {
        match self {
            Map::Free => x,
            Map::Box(lo, hi) => {
                let s = ((x - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
                (s / (1.0 - s)).ln()
            }
        }
    }

    fn initial_step(self, u: f64) -> f64 {
        match self {
            Map::Free if u != 0.0 => 0.05 * u,
            Map::Free => 2.5e-4,
            Map::Box(..) => 0.5,
        }
    }
}

/// Minimize `f` from `x0`. The result is never worse than `f(x0)`.
pub fn minimize_simplex<F>(mut f: F, x0: &[f64], opts: &SimplexOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::invalid("simplex needs at least one dimension"));
    }
    if opts.max_evals == 0 {
        return Err(Error::invalid("max_evals must be >= 1"));
    }
    opts.coefficients.validate()?;
    if !opts.bounds.is_empty() && opts.bounds.len() != n {
        return Err(Error::invalid(format!("{} bounds given for {n} dimensions", opts.bounds.len())));
    }
    let maps: Vec<Map> = (0..n)
        .map(|k| match opts.bounds.get(k).copied().flatten() {
            None => Ok(Map::Free),
            Some((lo, hi)) if lo < hi && lo.is_finite() && hi.is_finite() => {
                if x0[k] < lo || x0[k] > hi {
                    Err(Error::invalid(format!("x0[{k}] = {} outside [{lo}, {hi}]", x0[k])))
                } else {
                    Ok(Map::Box(lo, hi))
                }
            }
            Some((lo, hi)) => Err(Error::invalid(format!("bound {k} needs finite lower < upper, got [{lo}, {hi}]"))),
        })
        .collect::<Result<_>>()?;

    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(Error::invalid(format!("objective is not finite at x0 ({f0})")));
    }
    let mut evals = 1usize;
    let mut best = Minimum { x: x0.to_vec(), f: f0, evals, converged: false };

    let to_x = |u: &[f64]| -> Vec<f64> { u.iter().zip(&maps).map(|(&u, m)| m.to_box(u)).collect() };
    let mut eval = |u: &[f64], evals: &mut usize, best: &mut Minimum| -> f64 {
        let x = to_x(u);
        let v = f(&x);
        *evals += 1;
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < best.f {
            best.f = v;
            best.x = x;
        }
        v
    };

    let u0: Vec<f64> = x0.iter().zip(&maps).map(|(&x, m)| m.from_box(x)).collect();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((u0.clone(), f0));
    for k in 0..n {
        if evals >= opts.max_evals {
            break;
        }
        let mut u = u0.clone();
        u[k] += maps[k].initial_step(u0[k]);
        let v = eval(&u, &mut evals, &mut best);
        simplex.push((u, v));
    }
    if simplex.len() < n + 1 {
        best.evals = evals;
        return Ok(best);
    }

    let Coefficients { reflection, expansion, contraction, shrink } = opts.coefficients;
    let along = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> { c.iter().zip(w).map(|(c, w)| c + t * (w - c)).collect() };

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex[1..]
            .iter()
            .map(|(u, _)| u.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < opts.diameter_tol {
            best.converged = true;
            break;
        }
        if evals >= opts.max_evals {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (u, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(u) {
                *c += v / n as f64;
            }
        }
        let (worst_u, worst_f) = simplex[n].clone();
        let second_worst = simplex[n - 1].1;
        let best_f = simplex[0].1;

        let ur = along(&centroid, &worst_u, -reflection);
        let fr = eval(&ur, &mut evals, &mut best);
        if fr < best_f {
            let ue = along(&centroid, &worst_u, -expansion);
            let fe = if evals < opts.max_evals { eval(&ue, &mut evals, &mut best) } else { f64::INFINITY };
            simplex[n] = if fe < fr { (ue, fe) } else { (ur, fr) };
            continue;
        }
        if fr < second_worst {
            simplex[n] = (ur, fr);
            continue;
        }
        if evals >= opts.max_evals {
            break;
        }
        // outside contraction when the reflection helped, inside otherwise
        let (uc, fc) = if fr < worst_f {
            let uc = along(&centroid, &worst_u, -reflection * contraction);
            let fc = eval(&uc, &mut evals, &mut best);
            (uc, fc)
        } else {
            let uc = along(&centroid, &worst_u, contraction);
            let fc = eval(&uc, &mut evals, &mut best);
            (uc, fc)
        };
        if fc < worst_f.min(fr) {
            simplex[n] = (uc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            if evals >= opts.max_evals {
                break;
            }
            let u = along(&anchor, &vertex.0, shrink);
            let v = eval(&u, &mut evals, &mut best);
            *vertex = (u, v);
        }
    }
    best.evals = evals;
    Ok(best)
}
