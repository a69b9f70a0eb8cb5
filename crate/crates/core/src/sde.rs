//! Euler–Maruyama simulation of the controlled state equation
//!
//! ```text
//! y_{i+1} = y_i + [F₀(t_i, y_i) + F₁(t_i, y_i, z_i)] Δt + B(t_i, y_i) ΔW_i
//! ```
//!
//! under feedback, open-loop or constant policies, with first-exit detection
//! for problems posed on a domain.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::problem::{ControlProblem, Domain, Horizon};
use crate::rng::PathStream;
use crate::MAX_DIM;
#[allow(unused_imports)] // shadowed by inherent methods when std is in the build
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitRule {
    /// First grid time whose state lies outside the domain.
    GridCrossing,
    /// Grid crossing plus a Brownian-bridge crossing test between interior
    /// endpoints (one-dimensional problems only).
    BrownianBridge,
}

impl ExitRule {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitRule::GridCrossing => "grid_crossing",
            ExitRule::BrownianBridge => "brownian_bridge",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub exit_rule: ExitRule,
    /// Simulation end time. Defaults to T for finite-horizon problems and is
    /// required for discounted ones.
    pub end_time: Option<f64>,
}

impl SimConfig {
    pub fn new(dt: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            dt,
            n_paths,
            seed,
            exit_rule: ExitRule::GridCrossing,
            end_time: None,
        }
    }

    pub fn with_exit_rule(mut self, rule: ExitRule) -> Self {
        self.exit_rule = rule;
        self
    }

    pub fn with_end_time(mut self, end: f64) -> Self {
        self.end_time = Some(end);
        self
    }
}

pub type FeedbackFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) -> Result<()> + Send + Sync>;

#[derive(Clone)]
pub enum ControlPolicy {
    /// z = G(t, y).
    Feedback(FeedbackFn),
    /// Piecewise-constant controls: `controls[path][j·k..(j+1)·k]` applies on
    /// `[times[j], times[j+1])`. A single entry is shared by every path.
    OpenLoop {
        times: Vec<f64>,
        controls: Vec<Vec<f64>>,
    },
    Constant(Vec<f64>),
}

impl fmt::Debug for ControlPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlPolicy::Feedback(_) => f.write_str("Feedback(..)"),
            ControlPolicy::OpenLoop { times, controls } => f
                .debug_struct("OpenLoop")
                .field("times", &times.len())
                .field("paths", &controls.len())
                .finish(),
            ControlPolicy::Constant(z) => f.debug_tuple("Constant").field(z).finish(),
        }
    }
}

impl ControlPolicy {
    pub fn feedback(
        f: impl Fn(f64, &[f64], &mut [f64]) -> Result<()> + Send + Sync + 'static,
    ) -> Self {
        ControlPolicy::Feedback(Arc::new(f))
    }

    pub fn control(&self, path: usize, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            ControlPolicy::Feedback(g) => g(t, x, out),
            ControlPolicy::Constant(z) => {
                out.copy_from_slice(z);
                Ok(())
            }
            ControlPolicy::OpenLoop { times, controls } => {
                let k = out.len();
                let row = if controls.len() == 1 {
                    &controls[0]
                } else {
                    &controls[path]
                };
                let j = times.iter().rposition(|s| *s <= t + 1e-12).unwrap_or(0);
                out.copy_from_slice(&row[j * k..(j + 1) * k]);
                Ok(())
            }
        }
    }

    fn validate(&self, k: usize, n_paths: usize) -> Result<()> {
        match self {
            ControlPolicy::Constant(z) if z.len() != k => Err(Error::InvalidSimulation(format!(
                "constant control has dimension {}, expected {k}",
                z.len()
            ))),
            ControlPolicy::OpenLoop { times, controls } => {
                if times.is_empty() || !(controls.len() == 1 || controls.len() == n_paths) {
                    return Err(Error::InvalidSimulation(
                        "open-loop policy needs times and one control row (or one per path)".into(),
                    ));
                }
                if controls.iter().any(|c| c.len() != times.len() * k) {
                    return Err(Error::InvalidSimulation(
                        "open-loop control rows have the wrong length".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitRecord {
    /// Index of the first grid point at or after the exit.
    pub step: usize,
    pub time: f64,
    /// Exit state projected onto the boundary.
    pub state: Vec<f64>,
}

/// Everything the integrators need at the left end of step `step`.
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub state: &'a [f64],
    pub control: &'a [f64],
    pub increment: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathEnd {
    Horizon,
    Exited(ExitRecord),
    Diverged {
        step: usize,
    },
    /// The policy could not be evaluated (state outside its field's grid).
    Escaped {
        step: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub end: PathEnd,
    pub final_time: f64,
    pub final_state: [f64; MAX_DIM],
    pub projected_controls: usize,
}

/// Uniform time grid `t_i = t0 + i·dt`, `i = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.n_steps)
    }
}

/// Shared path integrator used by [`simulate`] and the Monte Carlo estimators.
pub(crate) struct Stepper<'a> {
    problem: &'a ControlProblem,
    policy: &'a ControlPolicy,
    config: &'a SimConfig,
    x0: &'a [f64],
    pub(crate) grid: TimeGrid,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(
        problem: &'a ControlProblem,
        policy: &'a ControlPolicy,
        t0: f64,
        x0: &'a [f64],
        config: &'a SimConfig,
    ) -> Result<Self> {
        let n = problem.state_dim();
        if x0.len() != n {
            return Err(Error::InvalidSimulation(format!(
                "x0 has dimension {}, expected {n}",
                x0.len()
            )));
        }
        if !(config.dt > 0.0) || config.n_paths == 0 {
            return Err(Error::InvalidSimulation(
                "dt must be positive and n_paths >= 1".into(),
            ));
        }
        let end = match (problem.horizon(), config.end_time) {
            (_, Some(end)) => end,
            (Horizon::Finite { horizon, .. }, None) => *horizon,
            (Horizon::DiscountedInfinite { .. }, None) => {
                return Err(Error::InvalidSimulation(
                    "discounted problems need an explicit end time".into(),
                ))
            }
        };
        let span = end - t0;
        if !(span > 0.0) {
            return Err(Error::InvalidSimulation(format!(
                "start time {t0} is not before end time {end}"
            )));
        }
        if config.dt > span / 10.0 + 1e-15 {
            return Err(Error::InvalidSimulation(format!(
                "dt = {} exceeds horizon/10 = {}",
                config.dt,
                span / 10.0
            )));
        }
        if let Some(domain) = problem.domain() {
            if !domain.contains(x0) {
                return Err(Error::InvalidSimulation(format!(
                    "x0 = {x0:?} is not inside the domain"
                )));
            }
            if config.exit_rule == ExitRule::BrownianBridge && n != 1 {
                return Err(Error::InvalidSimulation(
                    "the Brownian-bridge exit rule is one-dimensional".into(),
                ));
            }
        }
        policy.validate(problem.control_dim(), config.n_paths)?;
        let n_steps = ((span / config.dt).round() as usize).max(1);
        Ok(Self {
            problem,
            policy,
            config,
            x0,
            grid: TimeGrid {
                t0,
                dt: span / n_steps as f64,
                n_steps,
            },
        })
    }

    pub(crate) fn run_path(
        &self,
        path: usize,
        mut visit: impl FnMut(&StepView<'_>),
    ) -> Result<PathSummary> {
        let problem = self.problem;
        let n = problem.state_dim();
        let m = problem.noise_dim();
        let k = problem.control_dim();
        let dt = self.grid.dt;
        let sqrt_dt = dt.sqrt();
        let set = problem.control_set();
        let domain = problem.domain();

        let mut stream = PathStream::new(self.config.seed, path as u64, m);
        let mut x = [0.0; MAX_DIM];
        x[..n].copy_from_slice(self.x0);
        let mut next = [0.0; MAX_DIM];
        let mut z = [0.0; MAX_DIM];
        let mut dw = [0.0; MAX_DIM];
        let mut f0 = [0.0; MAX_DIM];
        let mut f1 = [0.0; MAX_DIM];
        let mut b = [0.0; MAX_DIM * MAX_DIM];
        let mut projected = 0;

        let summary = |end, i: usize, state: &[f64; MAX_DIM], projected| PathSummary {
            end,
            final_time: self.grid.time(i),
            final_state: *state,
            projected_controls: projected,
        };

        for i in 0..self.grid.n_steps {
            let t = self.grid.time(i);
            match self.policy.control(path, t, &x[..n], &mut z[..k]) {
                Ok(()) => {}
                Err(Error::OutsideGrid { .. }) => {
                    return Ok(summary(PathEnd::Escaped { step: i }, i, &x, projected))
                }
                Err(e) => return Err(e),
            }
            if set.project(&mut z[..k]) {
                projected += 1;
            }
            let aux = stream.step_draws(&mut dw[..m]);
            for w in dw[..m].iter_mut() {
                *w *= sqrt_dt;
            }
            visit(&StepView {
                step: i,
                t,
                dt,
                state: &x[..n],
                control: &z[..k],
                increment: &dw[..m],
            });

            problem.drift(t, &x[..n], &mut f0[..n]);
            problem.controlled_drift(t, &x[..n], &z[..k], &mut f1[..n]);
            problem.diffusion(t, &x[..n], &mut b[..n * m]);
            let mut finite = true;
            for r in 0..n {
                let noise: f64 = (0..m).map(|c| b[r * m + c] * dw[c]).sum();
                next[r] = x[r] + (f0[r] + f1[r]) * dt + noise;
                finite &= next[r].is_finite();
            }
            if !finite {
                return Ok(summary(
                    PathEnd::Diverged { step: i + 1 },
                    i + 1,
                    &next,
                    projected,
                ));
            }
            if let Some(domain) = domain {
                let variance = if self.config.exit_rule == ExitRule::BrownianBridge {
                    b[..m].iter().map(|v| v * v).sum()
                } else {
                    0.0
                };
                if let Some(point) = exit_between(
                    domain,
                    self.config.exit_rule,
                    &x[..n],
                    &next[..n],
                    variance,
                    dt,
                    aux,
                ) {
                    let rec = ExitRecord {
                        step: i + 1,
                        time: self.grid.time(i + 1),
                        state: point[..n].to_vec(),
                    };
                    return Ok(summary(PathEnd::Exited(rec), i + 1, &next, projected));
                }
            }
            x = next;
        }
        Ok(summary(PathEnd::Horizon, self.grid.n_steps, &x, projected))
    }
}

/// Exit test for one step: returns the boundary point if the path leaves the
/// domain between `prev` and `next`.
fn exit_between(
    domain: &Domain,
    rule: ExitRule,
    prev: &[f64],
    next: &[f64],
    variance: f64,
    dt: f64,
    uniform: f64,
) -> Option<[f64; MAX_DIM]> {
    let n = next.len();
    let mut out = [0.0; MAX_DIM];
    if domain.signed_distance(next) >= 0.0 {
        domain.project_to_boundary(next, &mut out[..n]);
        return Some(out);
    }
    if rule == ExitRule::BrownianBridge && n == 1 && variance > 0.0 {
        let (a, b) = (domain.lower()[0], domain.upper()[0]);
        let lower_product = (prev[0] - a) * (next[0] - a);
        let upper_product = (b - prev[0]) * (b - next[0]);
        // nearer boundary = larger crossing probability
        let (product, boundary) = if lower_product <= upper_product {
            (lower_product, a)
        } else {
            (upper_product, b)
        };
        let p_cross = (-2.0 * product / (variance * dt)).exp();
        if uniform < p_cross {
            out[0] = boundary;
            return Some(out);
        }
    }
    None
}

/// First exit of a stored path (flattened states, `dim` per point).
///
/// `variance(i)` is (B Bᵀ) at the left end of step `i` and `uniform(i)` the
/// step's auxiliary uniform; both are only used by the bridge rule.
pub fn detect_exit(
    states: &[f64],
    dim: usize,
    domain: &Domain,
    rule: ExitRule,
    t0: f64,
    dt: f64,
    mut variance: impl FnMut(usize) -> f64,
    mut uniform: impl FnMut(usize) -> f64,
) -> Option<ExitRecord> {
    let points = states.len() / dim;
    for i in 0..points.saturating_sub(1) {
        let prev = &states[i * dim..(i + 1) * dim];
        let next = &states[(i + 1) * dim..(i + 2) * dim];
        let (var, u) = if rule == ExitRule::BrownianBridge {
            (variance(i), uniform(i))
        } else {
            (0.0, 1.0)
        };
        if let Some(point) = exit_between(domain, rule, prev, next, var, dt, u) {
            return Some(ExitRecord {
                step: i + 1,
                time: t0 + (i + 1) as f64 * dt,
                state: point[..dim].to_vec(),
            });
        }
    }
    None
}

/// One stored trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// `(len)·n` states, starting at x0.
    pub states: Vec<f64>,
    /// One control (k values) per step taken.
    pub controls: Vec<f64>,
    /// One Brownian increment (m values) per step taken.
    pub increments: Vec<f64>,
    pub end: PathEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub grid: TimeGrid,
    pub state_dim: usize,
    pub control_dim: usize,
    pub noise_dim: usize,
    pub seed: u64,
    pub paths: Vec<PathRecord>,
    pub projected_controls: usize,
}

impl PathBatch {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.grid.time(i)
    }

    pub fn state(&self, path: usize, i: usize) -> &[f64] {
        let n = self.state_dim;
        &self.paths[path].states[i * n..(i + 1) * n]
    }

    pub fn control(&self, path: usize, i: usize) -> &[f64] {
        let k = self.control_dim;
        &self.paths[path].controls[i * k..(i + 1) * k]
    }

    pub fn increment(&self, path: usize, i: usize) -> &[f64] {
        let m = self.noise_dim;
        &self.paths[path].increments[i * m..(i + 1) * m]
    }

    /// Number of stored states on `path`.
    pub fn len(&self, path: usize) -> usize {
        self.paths[path].states.len() / self.state_dim
    }

    pub fn exit(&self, path: usize) -> Option<&ExitRecord> {
        match &self.paths[path].end {
            PathEnd::Exited(r) => Some(r),
            _ => None,
        }
    }
}

/// Simulates `config.n_paths` trajectories from `(t0, x0)`.
///
/// Path `p` draws from the stream `(config.seed, p)`, so the batch is
/// bit-identical under any executor.
pub fn simulate<E: Executor>(
    problem: &ControlProblem,
    policy: &ControlPolicy,
    t0: f64,
    x0: &[f64],
    config: &SimConfig,
    exec: &E,
) -> Result<PathBatch> {
    let stepper = Stepper::new(problem, policy, t0, x0, config)?;
    let n = problem.state_dim();
    let k = problem.control_dim();
    let m = problem.noise_dim();
    let results = exec.map_indexed(config.n_paths, |p| {
        let cap = stepper.grid.n_steps + 1;
        let mut states = Vec::with_capacity(cap * n);
        let mut controls = Vec::with_capacity(cap * k);
        let mut increments = Vec::with_capacity(cap * m);
        let summary = stepper.run_path(p, |v| {
            states.extend_from_slice(v.state);
            controls.extend_from_slice(v.control);
            increments.extend_from_slice(v.increment);
        })?;
        if !matches!(summary.end, PathEnd::Escaped { .. }) {
            states.extend_from_slice(&summary.final_state[..n]);
        }
        Ok((
            PathRecord {
                states,
                controls,
                increments,
                end: summary.end,
            },
            summary.projected_controls,
        ))
    });
    let mut paths = Vec::with_capacity(config.n_paths);
    let mut projected = 0;
    for r in results {
        let (rec, proj) = r?;
        projected += proj;
        paths.push(rec);
    }
    if paths
        .iter()
        .all(|p| matches!(p.end, PathEnd::Diverged { .. }))
    {
        return Err(Error::AllDiverged {
            n_paths: paths.len(),
        });
    }
    if projected > 0 {
        log::warn!("{projected} controls fell outside U and were projected onto it");
    }
    Ok(PathBatch {
        grid: stepper.grid,
        state_dim: n,
        control_dim: k,
        noise_dim: m,
        seed: config.seed,
        paths,
        projected_controls: projected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::problem::ControlSet;
    use alloc::vec;

    fn decay(alpha: f64, sigma: f64) -> ControlProblem {
        ControlProblem::builder(1, 1)
            .finite_horizon(1.0, |_| 0.0)
            .drift(move |_, x, out| out[0] = -alpha * x[0])
            .diffusion(move |_, _, b| b[0] = sigma)
            .control_set(ControlSet::interval(0.0, 1.0).unwrap())
            .build()
            .unwrap()
    }

    fn brownian_on_unit_interval(horizon: f64) -> ControlProblem {
        ControlProblem::builder(1, 1)
            .finite_horizon(horizon, |_| 0.0)
            .diffusion(|_, _, b| b[0] = 1.0)
            .control_set(ControlSet::finite(vec![vec![0.0]]).unwrap())
            .exit_domain(Domain::interval(0.0, 1.0).unwrap(), |_, _| 0.0)
            .build()
            .unwrap()
    }

    #[test]
    fn deterministic_decay_tracks_exponential() {
        let p = decay(1.0, 0.0);
        let cfg = SimConfig::new(1e-4, 2, 1);
        let batch = simulate(
            &p,
            &ControlPolicy::Constant(vec![0.0]),
            0.0,
            &[1.0],
            &cfg,
            &Sequential,
        )
        .unwrap();
        let last = batch.len(0) - 1;
        let y = batch.state(0, last)[0];
        assert!((y - 0.3679).abs() < 2e-4, "{y}");
        assert!((batch.time(last) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stored_increments_reproduce_states() {
        let p = decay(0.7, 0.4);
        let cfg = SimConfig::new(1e-2, 5, 42);
        let batch = simulate(
            &p,
            &ControlPolicy::Constant(vec![0.5]),
            0.0,
            &[0.3],
            &cfg,
            &Sequential,
        )
        .unwrap();
        for path in 0..batch.n_paths() {
            assert_eq!(batch.state(path, 0), &[0.3]);
            for i in 0..batch.len(path) - 1 {
                let x = batch.state(path, i)[0];
                let expected =
                    x + (-0.7 * x + 0.0) * batch.grid.dt + 0.4 * batch.increment(path, i)[0];
                let got = batch.state(path, i + 1)[0];
                assert!((got - expected).abs() <= 1e-12 * (1.0 + got.abs()));
            }
        }
    }

    #[test]
    fn feedback_controls_depend_only_on_current_state() {
        let p = decay(0.2, 0.3);
        let policy = ControlPolicy::feedback(|t, x, out| {
            out[0] = (0.5 + 0.3 * x[0] - 0.1 * t).clamp(0.0, 1.0);
            Ok(())
        });
        let cfg = SimConfig::new(1e-2, 3, 9);
        let batch = simulate(&p, &policy, 0.0, &[0.1], &cfg, &Sequential).unwrap();
        for path in 0..3 {
            for i in 0..batch.len(path) - 1 {
                let x = batch.state(path, i)[0];
                let t = batch.time(i);
                assert_eq!(
                    batch.control(path, i)[0],
                    (0.5 + 0.3 * x - 0.1 * t).clamp(0.0, 1.0)
                );
            }
        }
    }

    #[test]
    fn out_of_set_controls_are_projected() {
        let p = decay(0.2, 0.3);
        let cfg = SimConfig::new(1e-2, 2, 9);
        let batch = simulate(
            &p,
            &ControlPolicy::Constant(vec![3.0]),
            0.0,
            &[0.1],
            &cfg,
            &Sequential,
        )
        .unwrap();
        assert_eq!(batch.control(0, 0), &[1.0]);
        assert_eq!(batch.projected_controls, 2 * 100);
    }

    #[test]
    fn open_loop_policy_is_piecewise_constant() {
        let p = decay(0.0, 0.0);
        let policy = ControlPolicy::OpenLoop {
            times: vec![0.0, 0.5],
            controls: vec![vec![0.25, 0.75]],
        };
        let cfg = SimConfig::new(0.1, 1, 0);
        let batch = simulate(&p, &policy, 0.0, &[0.0], &cfg, &Sequential).unwrap();
        assert_eq!(batch.control(0, 0), &[0.25]);
        assert_eq!(batch.control(0, 4), &[0.25]);
        assert_eq!(batch.control(0, 5), &[0.75]);
    }

    #[test]
    fn grid_crossing_detects_first_sign_change() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let rec = detect_exit(
            &[0.5, 0.9, 1.1, 0.7],
            1,
            &d,
            ExitRule::GridCrossing,
            0.0,
            0.1,
            |_| 1.0,
            |_| 0.5,
        )
        .unwrap();
        assert_eq!(rec.step, 2);
        assert_eq!(rec.state, vec![1.0]);
        assert!((rec.time - 0.2).abs() < 1e-15);
        assert!(detect_exit(
            &[0.5; 20],
            1,
            &d,
            ExitRule::GridCrossing,
            0.0,
            0.1,
            |_| 1.0,
            |_| 0.5
        )
        .is_none());
    }

    #[test]
    fn bridge_catches_excursions_between_interior_points() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        // both endpoints 0.01 from the boundary with variance·dt = 1e-2:
        // crossing probability exp(-2e-4 / 1e-2) ≈ 0.98
        let rec = detect_exit(
            &[0.99, 0.99],
            1,
            &d,
            ExitRule::BrownianBridge,
            0.0,
            0.01,
            |_| 1.0,
            |_| 0.5,
        );
        assert_eq!(rec.unwrap().state, vec![1.0]);
        let none = detect_exit(
            &[0.5, 0.5],
            1,
            &d,
            ExitRule::BrownianBridge,
            0.0,
            0.01,
            |_| 1.0,
            |_| 0.5,
        );
        assert!(none.is_none());
    }

    #[test]
    fn stored_path_exit_matches_simulated_exit() {
        let p = brownian_on_unit_interval(2.0);
        for rule in [ExitRule::GridCrossing, ExitRule::BrownianBridge] {
            let cfg = SimConfig::new(1e-2, 20, 5).with_exit_rule(rule);
            let batch = simulate(
                &p,
                &ControlPolicy::Constant(vec![0.0]),
                0.0,
                &[0.5],
                &cfg,
                &Sequential,
            )
            .unwrap();
            let d = p.domain().unwrap();
            for path in 0..batch.n_paths() {
                let states = &batch.paths[path].states;
                let mut stream = PathStream::new(5, path as u64, 1);
                let found = detect_exit(
                    states,
                    1,
                    d,
                    rule,
                    0.0,
                    batch.grid.dt,
                    |_| 1.0,
                    |i| {
                        stream.seek_step(i);
                        let mut w = [0.0];
                        stream.step_draws(&mut w)
                    },
                );
                assert_eq!(
                    found.as_ref(),
                    batch.exit(path),
                    "path {path} rule {rule:?}"
                );
                // strictly inside before the exit step
                if let Some(rec) = batch.exit(path) {
                    for i in 0..rec.step {
                        assert!(d.signed_distance(batch.state(path, i)) < 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_setups() {
        let p = brownian_on_unit_interval(1.0);
        let policy = ControlPolicy::Constant(vec![0.0]);
        assert!(simulate(
            &p,
            &policy,
            0.0,
            &[1.5],
            &SimConfig::new(0.01, 1, 0),
            &Sequential
        )
        .is_err());
        assert!(simulate(
            &p,
            &policy,
            0.0,
            &[0.5],
            &SimConfig::new(0.5, 1, 0),
            &Sequential
        )
        .is_err());
        assert!(simulate(
            &p,
            &policy,
            0.0,
            &[0.5],
            &SimConfig::new(0.01, 0, 0),
            &Sequential
        )
        .is_err());
    }

    #[test]
    fn all_diverged_is_an_error_and_divergence_is_flagged() {
        let p = ControlProblem::builder(1, 1)
            .finite_horizon(1.0, |_| 0.0)
            .drift(|_, x, out| out[0] = x[0] * x[0] * 1e3)
            .diffusion(|_, _, b| b[0] = 0.0)
            .control_set(ControlSet::interval(0.0, 1.0).unwrap())
            .build()
            .unwrap();
        let err = simulate(
            &p,
            &ControlPolicy::Constant(vec![0.0]),
            0.0,
            &[10.0],
            &SimConfig::new(0.01, 3, 0),
            &Sequential,
        )
        .unwrap_err();
        assert_eq!(err, Error::AllDiverged { n_paths: 3 });
    }
}
