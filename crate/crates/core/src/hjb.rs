//! One-dimensional solver for the semilinear backward HJB equation
//!
//! ```text
//! ∂ₜv + ½ σ²(t, x) ∂ₓₓv + F₀(t, x) ∂ₓv + H(t, x, ∂ₓv) = 0,   v(T, ·) = φ
//! ```
//!
//! in the minimization convention, plus residual, refinement and gradient
//! diagnostics.
//!
//! The march is IMEX: the linear part (central diffusion, upwind drift) is
//! implicit, H is evaluated explicitly at the later time level from central
//! differences. The implicit matrix is an M-matrix, so each step is a
//! tridiagonal solve and the scheme is monotone in the data.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::field::{Provenance, ValueField};
use crate::hamiltonian;
use crate::problem::{ControlProblem, Horizon};
use crate::tridiag;
#[allow(unused_imports)] // shadowed by inherent methods when std is in the build
use num_traits::Float;

/// Uniform space grid on `[x_min, x_max]` with `nt` time steps over `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub nt: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, nx: usize, nt: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) || nx < 3 || nt < 1 {
            return Err(Error::InvalidGrid(format!(
                "need x_min < x_max, nx >= 3, nt >= 1 (got [{x_min}, {x_max}], nx={nx}, nt={nt})"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            nx,
            nt,
        })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.nx {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn dt(&self, horizon: f64) -> f64 {
        horizon / self.nt as f64
    }

    /// Δt/Δx², the explicit-stability ratio.
    pub fn stability_ratio(&self, horizon: f64) -> f64 {
        self.dt(horizon) / (self.dx() * self.dx())
    }

    /// The grid with Δx and Δt halved `level` times.
    pub fn refined(&self, level: u32) -> Self {
        let f = 1usize << level;
        Self {
            nx: (self.nx - 1) * f + 1,
            nt: self.nt * f,
            ..*self
        }
    }
}

/// Values on a space-time grid, rows indexed by time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid1D,
    horizon: f64,
    values: Vec<f64>,
    gradient: Vec<f64>,
    provenance: Provenance,
}

impl SpaceTimeField {
    /// Builds a field from `(nt + 1)·nx` values; the gradient is derived.
    pub fn from_values(
        grid: Grid1D,
        horizon: f64,
        values: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if values.len() != (grid.nt + 1) * grid.nx {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                (grid.nt + 1) * grid.nx,
                values.len()
            )));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidGrid("horizon must be positive".into()));
        }
        let mut gradient = vec![0.0; values.len()];
        for j in 0..=grid.nt {
            let row = &values[j * grid.nx..(j + 1) * grid.nx];
            differentiate(
                row,
                grid.dx(),
                &mut gradient[j * grid.nx..(j + 1) * grid.nx],
            );
        }
        Ok(Self {
            grid,
            horizon,
            values,
            gradient,
            provenance,
        })
    }

    /// Samples another field on the nodes of `grid`.
    pub fn sample(field: &dyn ValueField, grid: Grid1D, horizon: f64) -> Result<Self> {
        let dt = grid.dt(horizon);
        let mut values = Vec::with_capacity((grid.nt + 1) * grid.nx);
        for j in 0..=grid.nt {
            let t = if j == grid.nt { horizon } else { j as f64 * dt };
            for i in 0..grid.nx {
                values.push(field.value(t, &[grid.x(i)])?);
            }
        }
        Self::from_values(grid, horizon, values, field.provenance())
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn time(&self, j: usize) -> f64 {
        if j == self.grid.nt {
            self.horizon
        } else {
            j as f64 * self.grid.dt(self.horizon)
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gradients(&self) -> &[f64] {
        &self.gradient
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.grid.nx..(j + 1) * self.grid.nx]
    }

    pub fn gradient_row(&self, j: usize) -> &[f64] {
        &self.gradient[j * self.grid.nx..(j + 1) * self.grid.nx]
    }

    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.grid.nx + i]
    }

    fn locate(&self, t: f64, x: f64) -> Result<(usize, usize, f64)> {
        let g = &self.grid;
        let tol = 1e-12 * (1.0 + g.x_max.abs().max(g.x_min.abs()));
        if !(x >= g.x_min - tol && x <= g.x_max + tol && t >= -1e-12 && t <= self.horizon + 1e-12) {
            return Err(Error::OutsideGrid { t, x: vec![x] });
        }
        let dt = g.dt(self.horizon);
        let j = ((t / dt + 1e-9).floor().max(0.0) as usize).min(g.nt);
        let s = ((x - g.x_min) / g.dx()).clamp(0.0, (g.nx - 1) as f64);
        let i = (s.floor() as usize).min(g.nx - 2);
        Ok((j, i, s - i as f64))
    }
}

/// Central differences inside, one-sided at the two edges.
fn differentiate(row: &[f64], dx: f64, out: &mut [f64]) {
    let n = row.len();
    out[0] = (row[1] - row[0]) / dx;
    out[n - 1] = (row[n - 1] - row[n - 2]) / dx;
    for i in 1..n - 1 {
        out[i] = (row[i + 1] - row[i - 1]) / (2.0 * dx);
    }
}

impl ValueField for SpaceTimeField {
    fn state_dim(&self) -> usize {
        1
    }

    /// Linear in x, left-constant in t.
    fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        let (j, i, w) = self.locate(t, x[0])?;
        let r = self.row(j);
        Ok(r[i] + w * (r[i + 1] - r[i]))
    }

    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let (j, i, w) = self.locate(t, x[0])?;
        let r = self.gradient_row(j);
        out[0] = r[i] + w * (r[i + 1] - r[i]);
        Ok(())
    }

    fn provenance(&self) -> Provenance {
        self.provenance
    }

    fn spatial_step(&self) -> f64 {
        self.grid.dx()
    }
}

/// Edge treatment for whole-space problems truncated to a grid.
#[derive(Clone, Copy)]
pub enum Boundary<'a> {
    /// Edge values taken from a known field (minimization convention).
    DirichletFrom(&'a dyn ValueField),
    /// Zero second difference at the edges; the drift uses the one-sided
    /// difference, implicit on inflow and explicit on outflow.
    LinearExtrapolation,
}

impl Boundary<'_> {
    pub fn describe(&self) -> &'static str {
        match self {
            Boundary::DirichletFrom(_) => "dirichlet",
            Boundary::LinearExtrapolation => "linear_extrapolation",
        }
    }
}

enum Edges<'a> {
    Field(&'a dyn ValueField),
    Extrapolate,
    Exit,
}

fn finite_horizon(problem: &ControlProblem) -> Result<f64> {
    if problem.state_dim() != 1 {
        return Err(Error::InvalidProblem(
            "the grid solver is one-dimensional".into(),
        ));
    }
    match problem.horizon() {
        Horizon::Finite { horizon, .. } => Ok(*horizon),
        Horizon::DiscountedInfinite { .. } => Err(Error::InvalidProblem(
            "the grid solver needs a finite horizon".into(),
        )),
    }
}

/// Solves the whole-space equation truncated to `grid`.
pub fn solve_parabolic(
    problem: &ControlProblem,
    grid: Grid1D,
    boundary: Boundary<'_>,
) -> Result<SpaceTimeField> {
    let horizon = finite_horizon(problem)?;
    let edges = match boundary {
        Boundary::DirichletFrom(f) => Edges::Field(f),
        Boundary::LinearExtrapolation => Edges::Extrapolate,
    };
    march(problem, grid, horizon, edges)
}

/// Solves the exit-time problem on its domain with ψ imposed at both ends.
pub fn solve_exit(problem: &ControlProblem, grid: Grid1D) -> Result<SpaceTimeField> {
    let horizon = finite_horizon(problem)?;
    let domain = problem.domain().ok_or_else(|| {
        Error::InvalidProblem("solve_exit needs a problem with an exit domain".into())
    })?;
    let (a, b) = (domain.lower()[0], domain.upper()[0]);
    let tol = 1e-12 * (1.0 + a.abs().max(b.abs()));
    if (grid.x_min - a).abs() > tol || (grid.x_max - b).abs() > tol {
        return Err(Error::InvalidGrid(format!(
            "grid [{}, {}] does not coincide with the domain [{a}, {b}]",
            grid.x_min, grid.x_max
        )));
    }
    for x in [a, b] {
        let psi = problem.boundary_cost(horizon, &[x]).unwrap_or(0.0);
        let phi = problem.terminal_cost(&[x]);
        if (psi - phi).abs() > 1e-10 {
            return Err(Error::Incompatible(format!(
                "boundary cost psi(T, {x}) = {psi} must equal the terminal cost phi({x}) = {phi}"
            )));
        }
    }
    march(problem, grid, horizon, Edges::Exit)
}

fn march(
    problem: &ControlProblem,
    grid: Grid1D,
    horizon: f64,
    edges: Edges<'_>,
) -> Result<SpaceTimeField> {
    let nx = grid.nx;
    let nt = grid.nt;
    let dx = grid.dx();
    let dt = grid.dt(horizon);
    let xs: Vec<f64> = (0..nx).map(|i| grid.x(i)).collect();
    let time = |j: usize| if j == nt { horizon } else { j as f64 * dt };

    let mut values = vec![0.0; (nt + 1) * nx];
    for i in 0..nx {
        values[nt * nx + i] = problem.terminal_cost(&[xs[i]]);
    }

    let mut lower = vec![0.0; nx];
    let mut diag = vec![0.0; nx];
    let mut upper = vec![0.0; nx];
    let mut rhs = vec![0.0; nx];
    let mut scratch = vec![0.0; nx];
    let mut grad = vec![0.0; nx];
    let mut solution = vec![0.0; nx];
    let mut f0 = [0.0];

    for j in (0..nt).rev() {
        let t = time(j);
        let t_next = time(j + 1);
        let next = &values[(j + 1) * nx..(j + 2) * nx];
        differentiate(next, dx, &mut grad);

        for i in 0..nx {
            let x = [xs[i]];
            let h = hamiltonian::minimize(problem, t_next, &x, &grad[i..i + 1])?;
            rhs[i] = next[i] + dt * h.value;
            problem.drift(t, &x, &mut f0);
            let drift = f0[0];
            let up = drift.max(0.0) / dx;
            let down = (-drift).max(0.0) / dx;
            if i == 0 || i == nx - 1 {
                lower[i] = 0.0;
                upper[i] = 0.0;
                diag[i] = 1.0;
                match edges {
                    Edges::Field(f) => rhs[i] = f.value(t, &x)?,
                    Edges::Exit => rhs[i] = problem.boundary_cost(t, &x).unwrap_or(0.0),
                    Edges::Extrapolate if i == 0 => {
                        // forward difference: implicit when F₀ > 0, explicit otherwise
                        diag[i] += dt * up;
                        upper[i] = -dt * up;
                        rhs[i] -= dt * down * (next[1] - next[0]);
                    }
                    Edges::Extrapolate => {
                        diag[i] += dt * down;
                        lower[i] = -dt * down;
                        rhs[i] += dt * up * (next[i] - next[i - 1]);
                    }
                }
                continue;
            }
            let half_var = 0.5 * problem.variance_1d(t, x[0]) / (dx * dx);
            lower[i] = -dt * (half_var + down);
            upper[i] = -dt * (half_var + up);
            diag[i] = 1.0 + dt * (2.0 * half_var + up + down);
        }
        if !tridiag::solve(&lower, &diag, &upper, &rhs, &mut scratch, &mut solution) {
            return Err(Error::TridiagonalSolve { level: j });
        }
        values[j * nx..(j + 1) * nx].copy_from_slice(&solution);
    }
    SpaceTimeField::from_values(grid, horizon, values, Provenance::Solved)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub sup_interior_residual: f64,
    /// `nt × nx` residuals at time levels `0..nt` (excluded nodes hold 0).
    pub residual: Vec<f64>,
    /// Spatial node indices left out of the sup.
    pub excluded_nodes: Vec<usize>,
}

/// Pointwise HJB residual with a forward time difference and central space
/// differences; nodes within `radius` nodes of an edge or a registered kink
/// are excluded.
pub fn residual(
    field: &SpaceTimeField,
    problem: &ControlProblem,
    radius: usize,
) -> Result<ResidualReport> {
    let g = *field.grid();
    let (nx, nt, dx) = (g.nx, g.nt, g.dx());
    let dt = g.dt(field.horizon());
    let excluded: Vec<usize> = (0..nx)
        .filter(|&i| {
            let x = g.x(i);
            i < radius.max(1)
                || i + radius.max(1) >= nx
                || problem
                    .kinks()
                    .iter()
                    .any(|k| (x - k).abs() <= radius as f64 * dx + 1e-12)
        })
        .collect();
    let mut res = vec![0.0; nt * nx];
    let mut sup: f64 = 0.0;
    let mut f0 = [0.0];
    for j in 0..nt {
        let t = field.time(j);
        let row = field.row(j);
        let next = field.row(j + 1);
        for i in 1..nx - 1 {
            if excluded.binary_search(&i).is_ok() {
                continue;
            }
            let x = [g.x(i)];
            let vx = (row[i + 1] - row[i - 1]) / (2.0 * dx);
            let vxx = (row[i + 1] - 2.0 * row[i] + row[i - 1]) / (dx * dx);
            problem.drift(t, &x, &mut f0);
            let h = hamiltonian::minimize(problem, t, &x, &[vx])?;
            let r = (next[i] - row[i]) / dt
                + 0.5 * problem.variance_1d(t, x[0]) * vxx
                + f0[0] * vx
                + h.value;
            res[j * nx + i] = r;
            sup = sup.max(r.abs());
        }
    }
    Ok(ResidualReport {
        sup_interior_residual: sup,
        residual: res,
        excluded_nodes: excluded,
    })
}

/// Solutions at successive refinement levels and their distances.
#[derive(Debug, Clone)]
pub struct ApproximationLadder {
    pub grids: Vec<Grid1D>,
    pub fields: Vec<SpaceTimeField>,
    /// Sup distance of values between consecutive levels, on the coarsest nodes.
    pub value_distances: Vec<f64>,
    /// Same for gradients (reported, not gated).
    pub gradient_distances: Vec<f64>,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl ApproximationLadder {
    pub fn last_ratio(&self) -> Option<f64> {
        let d = &self.value_distances;
        (d.len() >= 2).then(|| d[d.len() - 1] / d[d.len() - 2])
    }
}

const CONVERGED: f64 = 1e-12;

/// Solves on `levels` grids obtained by halving Δx and Δt from `base`.
pub fn refine_ladder<E: Executor>(
    problem: &ControlProblem,
    base: Grid1D,
    levels: usize,
    boundary: Boundary<'_>,
    exec: &E,
) -> Result<ApproximationLadder> {
    if levels < 3 {
        return Err(Error::InvalidGrid(
            "a refinement ladder needs at least 3 levels".into(),
        ));
    }
    let grids: Vec<Grid1D> = (0..levels as u32).map(|k| base.refined(k)).collect();
    ladder_on_grids(problem, &grids, boundary, exec)
}

/// Ladder on caller-chosen grids, compared on the nodes of the first one.
pub fn ladder_on_grids<E: Executor>(
    problem: &ControlProblem,
    grids: &[Grid1D],
    boundary: Boundary<'_>,
    exec: &E,
) -> Result<ApproximationLadder> {
    let exit = problem.domain().is_some();
    let fields = exec.map_indexed(grids.len(), |k| {
        if exit {
            solve_exit(problem, grids[k])
        } else {
            solve_parabolic(problem, grids[k], boundary)
        }
    });
    let fields = fields.into_iter().collect::<Result<Vec<_>>>()?;
    let coarse = grids[0];
    let mut value_distances = Vec::new();
    let mut gradient_distances = Vec::new();
    for pair in fields.windows(2) {
        let (mut dv, mut dg) = (0.0_f64, 0.0_f64);
        for j in 0..=coarse.nt {
            let t = pair[0].time(j);
            for i in 0..coarse.nx {
                let x = [coarse.x(i)];
                dv = dv.max((pair[1].value(t, &x)? - pair[0].value(t, &x)?).abs());
                let (mut g0, mut g1) = ([0.0], [0.0]);
                pair[0].gradient(t, &x, &mut g0)?;
                pair[1].gradient(t, &x, &mut g1)?;
                dg = dg.max((g1[0] - g0[0]).abs());
            }
        }
        value_distances.push(dv);
        gradient_distances.push(dg);
    }
    let monotone = value_distances
        .windows(2)
        .all(|w| w[1] <= w[0] || w[1] <= CONVERGED);
    let last = *value_distances.last().unwrap_or(&0.0);
    let ratio_ok = last <= CONVERGED || {
        let n = value_distances.len();
        n >= 2 && last / value_distances[n - 2] <= 0.75
    };
    let mut notes = vec![String::from(
        "approximating sequence realized as grid refinement levels, not mollified data",
    )];
    let gradients_shrink = gradient_distances
        .windows(2)
        .all(|w| w[1] < w[0] || w[1] <= CONVERGED);
    if !gradients_shrink {
        notes.push("gradient-convergence proxy inconclusive".into());
    }
    Ok(ApproximationLadder {
        grids: grids.to_vec(),
        fields,
        value_distances,
        gradient_distances,
        passed: monotone && ratio_ok,
        notes,
    })
}

/// Probe layout for [`gradient_diagnostics`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientProbes {
    pub times: Vec<f64>,
    pub points: Vec<f64>,
    pub kinks: Vec<f64>,
    /// Offsets from a kink: the fit uses `[window/100, window]` (two decades).
    pub kink_window: f64,
    /// Number of log-spaced offsets in the fit.
    pub kink_samples: usize,
}

impl GradientProbes {
    pub fn new(times: Vec<f64>, points: Vec<f64>) -> Self {
        Self {
            times,
            points,
            kinks: Vec::new(),
            kink_window: 1.0,
            kink_samples: 21,
        }
    }

    pub fn with_kinks(mut self, kinks: Vec<f64>, window: f64) -> Self {
        self.kinks = kinks;
        self.kink_window = window;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinkExponent {
    pub kink: f64,
    pub time: f64,
    /// Slope of log|D²v| against log(offset); 0 when the second differences vanish.
    pub exponent: f64,
    pub max_second_difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientDiagnostics {
    /// sup over probes of (T − t)^{1/2} |∂ₓv(t, x)|.
    pub weighted_gradient_sup: f64,
    pub kinks: Vec<KinkExponent>,
}

/// Weighted gradient sup and second-difference growth on the right of each kink.
pub fn gradient_diagnostics(
    field: &dyn ValueField,
    horizon: f64,
    probes: &GradientProbes,
) -> Result<GradientDiagnostics> {
    let mut sup: f64 = 0.0;
    let mut g = [0.0];
    for &t in &probes.times {
        let w = (horizon - t).max(0.0).sqrt();
        for &x in &probes.points {
            field.gradient(t, &[x], &mut g)?;
            sup = sup.max(w * g[0].abs());
        }
    }
    let t = probes.times.first().copied().unwrap_or(0.0);
    let mut kinks = Vec::new();
    let n = probes.kink_samples.max(3);
    for &k in &probes.kinks {
        let mut pts = Vec::with_capacity(n);
        let mut max_d2: f64 = 0.0;
        for s in 0..n {
            let offset = probes.kink_window * 10f64.powf(-2.0 * s as f64 / (n - 1) as f64);
            let h = offset / 4.0;
            let x = k + offset;
            let d2 = (field.value(t, &[x + h])? - 2.0 * field.value(t, &[x])?
                + field.value(t, &[x - h])?)
                / (h * h);
            max_d2 = max_d2.max(d2.abs());
            pts.push((offset.ln(), d2.abs()));
        }
        let exponent = if max_d2 <= 1e-8 {
            0.0
        } else {
            let logs: Vec<(f64, f64)> = pts
                .iter()
                .map(|&(a, d)| (a, d.max(f64::MIN_POSITIVE).ln()))
                .collect();
            slope(&logs)
        };
        kinks.push(KinkExponent {
            kink: k,
            time: t,
            exponent,
            max_second_difference: max_d2,
        });
    }
    Ok(GradientDiagnostics {
        weighted_gradient_sup: sup,
        kinks,
    })
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::problem::{ControlSet, Domain};

    fn heat(phi: fn(&[f64]) -> f64) -> ControlProblem {
        ControlProblem::builder(1, 1)
            .finite_horizon(1.0, phi)
            .diffusion(|_, _, b| b[0] = 0.7)
            .control_set(ControlSet::finite(vec![vec![0.0]]).unwrap())
            .build()
            .unwrap()
    }

    fn exit_problem(l: f64, c: f64, horizon: f64) -> ControlProblem {
        ControlProblem::builder(1, 1)
            .finite_horizon(horizon, move |_| c)
            .diffusion(|_, _, b| b[0] = 1.0)
            .running_cost(move |_, _, _| l)
            .control_set(ControlSet::finite(vec![vec![0.0]]).unwrap())
            .exit_domain(Domain::interval(0.0, 1.0).unwrap(), move |_, _| c)
            .build()
            .unwrap()
    }

    #[test]
    fn grid_validation_and_refinement() {
        assert!(Grid1D::new(1.0, 0.0, 5, 1).is_err());
        assert!(Grid1D::new(0.0, 1.0, 2, 1).is_err());
        let g = Grid1D::new(0.0, 1.0, 11, 10).unwrap();
        assert_eq!(g.refined(2), Grid1D::new(0.0, 1.0, 41, 40).unwrap());
        assert!((g.stability_ratio(1.0) - 10.0).abs() < 1e-9);
        assert_eq!(g.x(10), 1.0);
    }

    #[test]
    fn linear_terminal_data_is_steady() {
        let p = heat(|x| x[0]);
        let g = Grid1D::new(-2.0, 3.0, 51, 40).unwrap();
        let f = solve_parabolic(&p, g, Boundary::LinearExtrapolation).unwrap();
        for j in 0..=g.nt {
            for i in 0..g.nx {
                assert!((f.at(j, i) - g.x(i)).abs() < 1e-10);
            }
        }
        assert_eq!(f.provenance(), Provenance::Solved);
    }

    #[test]
    fn terminal_row_is_exact_and_gradient_is_central() {
        let p = heat(|x| x[0].sin());
        let g = Grid1D::new(-2.0, 3.0, 41, 20).unwrap();
        let f = solve_parabolic(&p, g, Boundary::LinearExtrapolation).unwrap();
        for i in 0..g.nx {
            assert_eq!(f.at(g.nt, i), g.x(i).sin());
        }
        let dx = g.dx();
        for j in 0..=g.nt {
            for i in 1..g.nx - 1 {
                let c = (f.at(j, i + 1) - f.at(j, i - 1)) / (2.0 * dx);
                assert!((f.gradient_row(j)[i] - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interpolation_is_linear_in_space_and_left_constant_in_time() {
        let g = Grid1D::new(0.0, 1.0, 3, 2).unwrap();
        let values = vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0, 20.0, 21.0, 22.0];
        let f = SpaceTimeField::from_values(g, 1.0, values, Provenance::Loaded).unwrap();
        assert_eq!(f.value(0.0, &[0.25]).unwrap(), 0.5);
        assert_eq!(f.value(0.49, &[0.75]).unwrap(), 1.5);
        assert_eq!(f.value(0.5, &[0.75]).unwrap(), 11.5);
        assert_eq!(f.value(1.0, &[1.0]).unwrap(), 22.0);
        assert!(matches!(
            f.value(0.2, &[1.5]),
            Err(Error::OutsideGrid { .. })
        ));
    }

    #[test]
    fn constant_exit_data_is_reproduced() {
        let p = exit_problem(0.0, 3.5, 1.0);
        let g = Grid1D::new(0.0, 1.0, 21, 50).unwrap();
        let f = solve_exit(&p, g).unwrap();
        assert!(f.values().iter().all(|v| (v - 3.5).abs() <= 1e-12));
        let r = residual(&f, &p, 1).unwrap();
        assert!(r.sup_interior_residual <= 1e-12);
    }

    #[test]
    fn expected_exit_time() {
        let p = exit_problem(1.0, 0.0, 5.0);
        let g = Grid1D::new(0.0, 1.0, 201, 2000).unwrap();
        let f = solve_exit(&p, g).unwrap();
        let v = f.value(0.0, &[0.5]).unwrap();
        assert!((v - 0.25).abs() < 5e-3, "{v}");
    }

    #[test]
    fn exit_grid_must_match_domain() {
        let p = exit_problem(1.0, 0.0, 1.0);
        assert!(solve_exit(&p, Grid1D::new(0.0, 1.1, 11, 10).unwrap()).is_err());
    }

    #[test]
    fn comparison_principle_on_exit_demo() {
        let low = exit_problem(1.0, 0.0, 1.0);
        let high = exit_problem(1.0, 1.0, 1.0);
        let g = Grid1D::new(0.0, 1.0, 41, 100).unwrap();
        let a = solve_exit(&low, g).unwrap();
        let b = solve_exit(&high, g).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!(y >= x);
        }
    }

    #[test]
    fn perturbed_node_shows_in_residual() {
        let p = exit_problem(0.0, 1.0, 1.0);
        let g = Grid1D::new(0.0, 1.0, 11, 10).unwrap();
        let f = solve_exit(&p, g).unwrap();
        let mut values = f.values().to_vec();
        let eps = 1e-3;
        values[5 * g.nx + 5] += eps;
        let bumped = SpaceTimeField::from_values(g, 1.0, values, Provenance::Loaded).unwrap();
        let r = residual(&bumped, &p, 1).unwrap();
        assert!(r.sup_interior_residual >= eps / g.dt(1.0) - 1.0);
    }

    #[test]
    fn constant_ladder_has_zero_distances() {
        let p = exit_problem(0.0, 2.0, 1.0);
        let g = Grid1D::new(0.0, 1.0, 11, 10).unwrap();
        let ladder = refine_ladder(&p, g, 3, Boundary::LinearExtrapolation, &Sequential).unwrap();
        assert!(ladder.value_distances.iter().all(|d| *d <= 1e-12));
        assert!(ladder.passed);
        assert!(refine_ladder(&p, g, 2, Boundary::LinearExtrapolation, &Sequential).is_err());
    }

    #[test]
    fn smooth_field_has_flat_second_differences() {
        let g = Grid1D::new(-1.0, 3.0, 401, 4).unwrap();
        let values = (0..=4)
            .flat_map(|_| (0..401).map(move |i| g.x(i)))
            .collect();
        let f = SpaceTimeField::from_values(g, 1.0, values, Provenance::Loaded).unwrap();
        let probes = GradientProbes::new(vec![0.0, 0.5], vec![0.5, 1.0]).with_kinks(vec![0.0], 1.0);
        let d = gradient_diagnostics(&f, 1.0, &probes).unwrap();
        assert_eq!(d.kinks[0].exponent, 0.0);
        assert!((d.weighted_gradient_sup - 1.0).abs() < 1e-12);
    }
}
