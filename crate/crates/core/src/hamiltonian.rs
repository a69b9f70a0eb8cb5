//! Current-value and minimized Hamiltonians, argmin feedback maps and the
//! pointwise duality gap.
//!
//! With the minimization convention,
//!
//! ```text
//! H_CV(t, x, p; z) = ⟨F₁(t, x, z), p⟩ + l(t, x, z)
//! H(t, x, p)       = inf_{z ∈ U} H_CV(t, x, p; z)
//! ```
//!
//! and the gap `H_CV − H` is nonnegative everywhere; its time integral along a
//! trajectory is exactly what a policy loses against the value function.
//!
//! Box control sets are minimized by a coarse lexicographic grid followed by
//! golden-section refinement inside the best cell; unbounded axes are first
//! bracketed by doubling until H_CV stops decreasing on three consecutive
//! probes. Problems that register a closed-form Hamiltonian skip the scan.

use alloc::format;
use alloc::sync::Arc;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::field::ValueField;
use crate::problem::{ControlProblem, ControlSetKind};
use crate::sde::ControlPolicy;
use crate::MAX_DIM;

const MAX_DOUBLINGS: usize = 1000;
const RISES_TO_BRACKET: usize = 3;
const REFINE_TOL: f64 = 1e-8;
const MAX_SCAN_POINTS: usize = 100_000;

/// Gap tolerance at a Hamiltonian value: `1e-9 · (1 + |H|)`.
pub fn tol_gap(value: f64) -> f64 {
    1e-9 * (1.0 + value.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    GridRefined,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::GridRefined => "grid_refined",
        }
    }
}

/// Result of minimizing H_CV over U at one `(t, x, p)`.
#[derive(Debug, Clone, Copy)]
pub struct HamiltonianEval {
    pub value: f64,
    pub method: Method,
    argmin: [f64; MAX_DIM],
    k: usize,
    t: f64,
    x: [f64; MAX_DIM],
    p: [f64; MAX_DIM],
    n: usize,
}

impl HamiltonianEval {
    pub fn argmin(&self) -> &[f64] {
        &self.argmin[..self.k]
    }

    /// Unclamped gap `H_CV(t, x, p; z) − H(t, x, p)` at this evaluation point.
    pub fn gap_at(&self, problem: &ControlProblem, z: &[f64]) -> Result<f64> {
        let cv = current_value(problem, self.t, &self.x[..self.n], &self.p[..self.n], z)?;
        Ok(cv - self.value)
    }
}

/// ⟨F₁(t, x, z), p⟩ + l(t, x, z) in the minimization convention.
pub fn current_value(
    problem: &ControlProblem,
    t: f64,
    x: &[f64],
    p: &[f64],
    z: &[f64],
) -> Result<f64> {
    if !problem.control_set().contains(z) {
        return Err(Error::ControlOutsideSet { z: z.to_vec() });
    }
    let v = current_value_unchecked(problem, t, x, p, z);
    if !v.is_finite() {
        return Err(Error::NonFinite {
            what: "current-value Hamiltonian",
            t,
            x: x.to_vec(),
        });
    }
    Ok(v)
}

#[inline]
fn current_value_unchecked(
    problem: &ControlProblem,
    t: f64,
    x: &[f64],
    p: &[f64],
    z: &[f64],
) -> f64 {
    let n = x.len();
    let mut f1 = [0.0; MAX_DIM];
    problem.controlled_drift(t, x, z, &mut f1[..n]);
    let inner: f64 = f1[..n].iter().zip(p).map(|(a, b)| a * b).sum();
    inner + problem.running_cost(t, x, z)
}

/// Minimized Hamiltonian; uses the registered closed form when available.
pub fn minimize(problem: &ControlProblem, t: f64, x: &[f64], p: &[f64]) -> Result<HamiltonianEval> {
    let k = problem.control_dim();
    let mut argmin = [0.0; MAX_DIM];
    if let Some(value) = problem.closed_form_hamiltonian(t, x, p, &mut argmin[..k]) {
        if !value.is_finite() {
            return Err(Error::HamiltonianNotFinite(format!(
                "closed form returned {value} at t={t}, x={x:?}, p={p:?}"
            )));
        }
        return Ok(eval(value, Method::ClosedForm, &argmin[..k], t, x, p));
    }
    minimize_by_scan(problem, t, x, p)
}

/// Minimized Hamiltonian by the numerical scan, ignoring any closed form.
pub fn minimize_by_scan(
    problem: &ControlProblem,
    t: f64,
    x: &[f64],
    p: &[f64],
) -> Result<HamiltonianEval> {
    let set = problem.control_set();
    let f = |z: &[f64]| current_value_unchecked(problem, t, x, p, z);
    let (value, argmin) = match set.kind() {
        ControlSetKind::Finite(points) => {
            let mut best = f64::INFINITY;
            let mut best_z: &[f64] = &points[0];
            for z in points {
                let v = f(z);
                if v < best || (v == best && lex_cmp(z, best_z) == Ordering::Less) {
                    best = v;
                    best_z = z;
                }
            }
            let mut a = [0.0; MAX_DIM];
            a[..best_z.len()].copy_from_slice(best_z);
            (best, a)
        }
        ControlSetKind::Box { lower, upper } => scan_box(lower, upper, set.grid_resolution(), &f)?,
    };
    if !value.is_finite() {
        return Err(Error::HamiltonianNotFinite(format!(
            "minimum over U is {value} at t={t}, x={x:?}, p={p:?}"
        )));
    }
    Ok(eval(
        value,
        Method::GridRefined,
        &argmin[..set.dim()],
        t,
        x,
        p,
    ))
}

fn eval(
    value: f64,
    method: Method,
    argmin: &[f64],
    t: f64,
    x: &[f64],
    p: &[f64],
) -> HamiltonianEval {
    let mut e = HamiltonianEval {
        value,
        method,
        argmin: [0.0; MAX_DIM],
        k: argmin.len(),
        t,
        x: [0.0; MAX_DIM],
        p: [0.0; MAX_DIM],
        n: x.len(),
    };
    e.argmin[..argmin.len()].copy_from_slice(argmin);
    e.x[..x.len()].copy_from_slice(x);
    e.p[..p.len()].copy_from_slice(p);
    e
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (u, v) in a.iter().zip(b) {
        match u.partial_cmp(v) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

fn scan_box(
    lower: &[f64],
    upper: &[f64],
    resolution: usize,
    f: &impl Fn(&[f64]) -> f64,
) -> Result<(f64, [f64; MAX_DIM])> {
    let k = lower.len();
    let mut lo = [0.0; MAX_DIM];
    let mut hi = [0.0; MAX_DIM];
    lo[..k].copy_from_slice(lower);
    for d in 0..k {
        hi[d] = if upper[d].is_finite() {
            upper[d]
        } else {
            bracket_axis(&lo[..k], d, f)?
        };
    }

    // coarse lexicographic grid, axis 0 slowest
    let mut res = resolution.max(2);
    while k > 1 && res.saturating_pow(k as u32) > MAX_SCAN_POINTS && res > 2 {
        res -= 1;
    }
    let mut idx = [0usize; MAX_DIM];
    let mut z = [0.0; MAX_DIM];
    let mut best = f64::INFINITY;
    let mut best_z = lo;
    loop {
        for d in 0..k {
            z[d] = grid_point(lo[d], hi[d], idx[d], res);
        }
        let v = f(&z[..k]);
        if v < best {
            best = v;
            best_z = z;
        }
        // odometer increment, last axis fastest
        let mut d = k;
        loop {
            if d == 0 {
                break;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < res {
                break;
            }
            idx[d] = 0;
            if d == 0 {
                d = usize::MAX;
                break;
            }
        }
        if d == usize::MAX {
            break;
        }
    }

    // golden-section refinement inside the best cell, one axis at a time
    let sweeps = if k == 1 { 1 } else { 20 };
    for _ in 0..sweeps {
        let before = best;
        for d in 0..k {
            let h = (hi[d] - lo[d]) / (res - 1) as f64;
            let a = (best_z[d] - h).max(lo[d]);
            let b = (best_z[d] + h).min(hi[d]);
            if !(b > a) {
                continue;
            }
            let mut probe = best_z;
            let (zc, vc) = golden_section(a, b, |s| {
                probe[d] = s;
                f(&probe[..k])
            });
            if vc < best {
                best = vc;
                best_z[d] = zc;
            }
        }
        if !(best < before) {
            break;
        }
    }
    Ok((best, best_z))
}

fn grid_point(lo: f64, hi: f64, i: usize, res: usize) -> f64 {
    if i + 1 == res {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (res - 1) as f64
    }
}

/// Doubles the step along axis `d` from the lower corner until H_CV fails to
/// decrease on three consecutive probes; returns the last probe.
fn bracket_axis(corner: &[f64], d: usize, f: &impl Fn(&[f64]) -> f64) -> Result<f64> {
    let k = corner.len();
    let mut z = [0.0; MAX_DIM];
    z[..k].copy_from_slice(corner);
    let mut prev = f(&z[..k]);
    let mut step = 1.0;
    let mut rises = 0;
    for _ in 0..MAX_DOUBLINGS {
        z[d] = corner[d] + step;
        let cur = f(&z[..k]);
        if cur < prev {
            rises = 0;
        } else {
            rises += 1;
            if rises >= RISES_TO_BRACKET {
                return Ok(z[d]);
            }
        }
        prev = cur;
        step *= 2.0;
    }
    Err(Error::HamiltonianNotFinite(format!(
        "current-value Hamiltonian still decreasing along unbounded control axis {d} after {MAX_DOUBLINGS} doublings"
    )))
}

fn golden_section(mut a: f64, mut b: f64, mut g: impl FnMut(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = g(c);
    let mut fd = g(d);
    while b - a > REFINE_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = g(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Unclamped gap `H_CV(z) − H`.
pub fn unclamped_gap(
    problem: &ControlProblem,
    t: f64,
    x: &[f64],
    p: &[f64],
    z: &[f64],
) -> Result<f64> {
    let h = minimize(problem, t, x, p)?;
    h.gap_at(problem, z)
}

/// Pointwise duality gap, clamped to exactly 0 within `tol_gap` of the minimum.
pub fn duality_gap(
    problem: &ControlProblem,
    t: f64,
    x: &[f64],
    p: &[f64],
    z: &[f64],
) -> Result<f64> {
    let h = minimize(problem, t, x, p)?;
    let g = h.gap_at(problem, z)?;
    Ok(clamp_gap(g, h.value))
}

pub(crate) fn clamp_gap(gap: f64, value: f64) -> f64 {
    if gap <= tol_gap(value) {
        0.0
    } else {
        gap
    }
}

/// Feedback policy `(t, x) ↦ argmin_z H_CV(t, x, ∂ₓv(t, x); z)`.
pub fn feedback_map(problem: &ControlProblem, field: Arc<dyn ValueField>) -> ControlPolicy {
    let problem = problem.clone();
    ControlPolicy::feedback(move |t, x, out| {
        let mut p = [0.0; MAX_DIM];
        let n = x.len();
        field.gradient(t, x, &mut p[..n])?;
        let h = minimize(&problem, t, x, &p[..n])?;
        out.copy_from_slice(h.argmin());
        Ok(())
    })
}
