//! Control-problem data model and sampled probes of the coefficient
//! hypotheses (Lipschitz constants, ellipticity, boundedness of B⁻¹F₁).

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::PathStream;
use crate::MAX_DIM;
#[allow(unused_imports)] // shadowed by inherent methods when std is in the build
use num_traits::Float;

/// F₀(t, x) written into `out` (length n).
pub type DriftFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// F₁(t, x, z) written into `out` (length n).
pub type ControlledDriftFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// B(t, x) written row-major into `out` (length n·m).
pub type DiffusionFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
pub type RunningCostFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
pub type TerminalCostFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type BoundaryCostFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// Closed-form Hamiltonian in the problem's own sense: returns the optimal
/// value at `(t, x, p)` and writes the optimizing control into `out`.
pub type HamiltonianFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }
}

#[derive(Clone)]
pub enum Horizon {
    Finite {
        horizon: f64,
        terminal_cost: TerminalCostFn,
    },
    /// Infinite horizon with discount rate λ; the running cost is then the
    /// autonomous l₁(x, z) and its time argument is ignored.
    DiscountedInfinite { rate: f64 },
}

impl fmt::Debug for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Finite { horizon, .. } => {
                f.debug_struct("Finite").field("horizon", horizon).finish()
            }
            Horizon::DiscountedInfinite { rate } => f
                .debug_struct("DiscountedInfinite")
                .field("rate", rate)
                .finish(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlSetKind {
    /// Componentwise box; upper bounds may be `+∞`.
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Finite(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    kind: ControlSetKind,
    grid_resolution: usize,
}

impl ControlSet {
    pub const DEFAULT_RESOLUTION: usize = 64;

    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::boxed(vec![lower], vec![upper])
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() || lower.len() > MAX_DIM {
            return Err(Error::InvalidProblem(
                "box control set has inconsistent dimensions".into(),
            ));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !lo.is_finite() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidProblem(
                    "box control set needs finite lower bounds with lower <= upper".into(),
                ));
            }
        }
        Ok(Self {
            kind: ControlSetKind::Box { lower, upper },
            grid_resolution: Self::DEFAULT_RESOLUTION,
        })
    }

    pub fn finite(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidProblem("finite control set is empty".into()));
        };
        let k = first.len();
        if k == 0
            || k > MAX_DIM
            || points
                .iter()
                .any(|p| p.len() != k || p.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidProblem(
                "finite control set has inconsistent points".into(),
            ));
        }
        Ok(Self {
            kind: ControlSetKind::Finite(points),
            grid_resolution: Self::DEFAULT_RESOLUTION,
        })
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.grid_resolution = resolution.max(2);
        self
    }

    pub fn kind(&self) -> &ControlSetKind {
        &self.kind
    }

    pub fn grid_resolution(&self) -> usize {
        self.grid_resolution
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ControlSetKind::Box { lower, .. } => lower.len(),
            ControlSetKind::Finite(points) => points[0].len(),
        }
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        if z.len() != self.dim() {
            return false;
        }
        match &self.kind {
            ControlSetKind::Box { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (lo, hi))| *v >= lo - 1e-12 && *v <= hi + 1e-12),
            ControlSetKind::Finite(points) => points
                .iter()
                .any(|p| p.iter().zip(z).all(|(a, b)| (a - b).abs() <= 1e-12)),
        }
    }

    /// Projects `z` onto the set in place; returns whether it moved.
    pub fn project(&self, z: &mut [f64]) -> bool {
        if self.contains(z) {
            return false;
        }
        match &self.kind {
            ControlSetKind::Box { lower, upper } => {
                for ((v, lo), hi) in z.iter_mut().zip(lower).zip(upper) {
                    *v = v.max(*lo).min(*hi);
                }
            }
            ControlSetKind::Finite(points) => {
                let mut best = &points[0];
                let mut best_d = f64::INFINITY;
                for p in points {
                    let d: f64 = p.iter().zip(z.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best_d {
                        best_d = d;
                        best = p;
                    }
                }
                z.copy_from_slice(best);
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainShape {
    Interval { lower: f64, upper: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

/// Open bounded domain O for exit-time problems.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    shape: DomainShape,
}

impl Domain {
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidProblem(
                "domain interval must satisfy a < b".into(),
            ));
        }
        Ok(Self {
            lower: vec![lower],
            upper: vec![upper],
            shape: DomainShape::Interval { lower, upper },
        })
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty()
            || lower.len() != upper.len()
            || lower
                .iter()
                .zip(&upper)
                .any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
        {
            return Err(Error::InvalidProblem(
                "domain box must satisfy lower < upper on every axis".into(),
            ));
        }
        Ok(Self {
            shape: DomainShape::Box {
                lower: lower.clone(),
                upper: upper.clone(),
            },
            lower,
            upper,
        })
    }

    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn centroid(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// Negative inside, zero on the boundary, positive outside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        let mut inside_margin = f64::INFINITY;
        let mut outside_sq = 0.0;
        let mut outside = false;
        for ((v, lo), hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            let below = lo - v;
            let above = v - hi;
            let excess = below.max(above);
            if excess > 0.0 {
                outside = true;
                outside_sq += excess * excess;
            } else {
                inside_margin = inside_margin.min(-excess);
            }
        }
        if outside {
            outside_sq.sqrt()
        } else {
            -inside_margin
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// Nearest boundary point: clamps outside points onto the box, and moves
    /// interior points onto their nearest face.
    pub fn project_to_boundary(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        if self.signed_distance(x) >= 0.0 {
            for ((v, lo), hi) in out.iter_mut().zip(&self.lower).zip(&self.upper) {
                *v = v.max(*lo).min(*hi);
            }
            return;
        }
        let mut best_axis = 0;
        let mut best_d = f64::INFINITY;
        let mut to_upper = false;
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            let dl = x[i] - lo;
            let du = hi - x[i];
            if dl < best_d {
                best_d = dl;
                best_axis = i;
                to_upper = false;
            }
            if du < best_d {
                best_d = du;
                best_axis = i;
                to_upper = true;
            }
        }
        out[best_axis] = if to_upper {
            self.upper[best_axis]
        } else {
            self.lower[best_axis]
        };
    }
}

/// Domain plus the boundary cost ψ(t, x) paid at the exit time.
#[derive(Clone)]
pub struct ExitSpec {
    pub domain: Domain,
    pub boundary_cost: BoundaryCostFn,
}

impl fmt::Debug for ExitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExitSpec")
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

/// Full description of a controlled diffusion
/// `dy = [F₀(s, y) + F₁(s, y, z)] ds + B(s, y) dW` and its cost.
#[derive(Clone)]
pub struct ControlProblem {
    name: String,
    state_dim: usize,
    noise_dim: usize,
    horizon: Horizon,
    f0: DriftFn,
    f1: ControlledDriftFn,
    diffusion: DiffusionFn,
    running_cost: RunningCostFn,
    control_set: ControlSet,
    exit: Option<ExitSpec>,
    sense: Sense,
    original_sense: Sense,
    hamiltonian: Option<HamiltonianFn>,
    kinks: Vec<f64>,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("noise_dim", &self.noise_dim)
            .field("horizon", &self.horizon)
            .field("control_set", &self.control_set)
            .field("exit", &self.exit)
            .field("sense", &self.sense)
            .field("closed_form_hamiltonian", &self.hamiltonian.is_some())
            .field("kinks", &self.kinks)
            .finish()
    }
}

pub struct ControlProblemBuilder {
    name: String,
    state_dim: usize,
    noise_dim: usize,
    horizon: Option<Horizon>,
    f0: Option<DriftFn>,
    f1: Option<ControlledDriftFn>,
    diffusion: Option<DiffusionFn>,
    running_cost: Option<RunningCostFn>,
    control_set: Option<ControlSet>,
    exit: Option<ExitSpec>,
    sense: Sense,
    hamiltonian: Option<HamiltonianFn>,
    kinks: Vec<f64>,
}

impl ControlProblemBuilder {
    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn finite_horizon(
        mut self,
        horizon: f64,
        terminal_cost: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.horizon = Some(Horizon::Finite {
            horizon,
            terminal_cost: Arc::new(terminal_cost),
        });
        self
    }

    pub fn discounted(mut self, rate: f64) -> Self {
        self.horizon = Some(Horizon::DiscountedInfinite { rate });
        self
    }

    pub fn drift(mut self, f0: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.f0 = Some(Arc::new(f0));
        self
    }

    pub fn controlled_drift(
        mut self,
        f1: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.f1 = Some(Arc::new(f1));
        self
    }

    pub fn diffusion(
        mut self,
        b: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.diffusion = Some(Arc::new(b));
        self
    }

    pub fn running_cost(
        mut self,
        l: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.running_cost = Some(Arc::new(l));
        self
    }

    pub fn control_set(mut self, u: ControlSet) -> Self {
        self.control_set = Some(u);
        self
    }

    pub fn exit_domain(
        mut self,
        domain: Domain,
        psi: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.exit = Some(ExitSpec {
            domain,
            boundary_cost: Arc::new(psi),
        });
        self
    }

    pub fn sense(mut self, sense: Sense) -> Self {
        self.sense = sense;
        self
    }

    /// Registers an exact Hamiltonian (in the problem's own sense) used in
    /// place of the numerical scan.
    pub fn closed_form_hamiltonian(
        mut self,
        h: impl Fn(f64, &[f64], &[f64], &mut [f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.hamiltonian = Some(Arc::new(h));
        self
    }

    /// Registers a point where the value function is known not to be C².
    pub fn kink(mut self, x: f64) -> Self {
        self.kinks.push(x);
        self
    }

    pub fn build(self) -> Result<ControlProblem> {
        let missing = |what: &str| Error::InvalidProblem(alloc::format!("missing {what}"));
        if self.state_dim == 0
            || self.state_dim > MAX_DIM
            || self.noise_dim == 0
            || self.noise_dim > MAX_DIM
        {
            return Err(Error::InvalidProblem(alloc::format!(
                "state and noise dimensions must lie in 1..={MAX_DIM}"
            )));
        }
        let horizon = self.horizon.ok_or_else(|| missing("horizon"))?;
        match &horizon {
            Horizon::Finite { horizon, .. } if !(horizon.is_finite() && *horizon > 0.0) => {
                return Err(Error::InvalidProblem(
                    "horizon T must be positive and finite".into(),
                ));
            }
            Horizon::DiscountedInfinite { rate } if !(rate.is_finite() && *rate > 0.0) => {
                return Err(Error::InvalidProblem(
                    "discount rate must be positive".into(),
                ));
            }
            _ => {}
        }
        let control_set = self.control_set.ok_or_else(|| missing("control set"))?;
        if let Some(exit) = &self.exit {
            if exit.domain.dim() != self.state_dim {
                return Err(Error::InvalidProblem(
                    "domain dimension differs from state dimension".into(),
                ));
            }
        }
        let problem = ControlProblem {
            name: self.name,
            state_dim: self.state_dim,
            noise_dim: self.noise_dim,
            horizon,
            f0: self
                .f0
                .unwrap_or_else(|| Arc::new(|_, _, out: &mut [f64]| out.fill(0.0))),
            f1: self
                .f1
                .unwrap_or_else(|| Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0))),
            diffusion: self.diffusion.ok_or_else(|| missing("diffusion"))?,
            running_cost: self.running_cost.unwrap_or_else(|| Arc::new(|_, _, _| 0.0)),
            control_set,
            exit: self.exit,
            sense: self.sense,
            original_sense: self.sense,
            hamiltonian: self.hamiltonian,
            kinks: self.kinks,
        };
        problem.check_exit_compatibility()?;
        Ok(problem)
    }
}

impl ControlProblem {
    pub fn builder(state_dim: usize, noise_dim: usize) -> ControlProblemBuilder {
        ControlProblemBuilder {
            name: String::from("custom"),
            state_dim,
            noise_dim,
            horizon: None,
            f0: None,
            f1: None,
            diffusion: None,
            running_cost: None,
            control_set: None,
            exit: None,
            sense: Sense::Minimize,
            hamiltonian: None,
            kinks: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_set.dim()
    }

    pub fn horizon(&self) -> &Horizon {
        &self.horizon
    }

    /// Terminal time T for finite-horizon problems.
    pub fn terminal_time(&self) -> Option<f64> {
        match self.horizon {
            Horizon::Finite { horizon, .. } => Some(horizon),
            Horizon::DiscountedInfinite { .. } => None,
        }
    }

    pub fn discount_rate(&self) -> Option<f64> {
        match self.horizon {
            Horizon::DiscountedInfinite { rate } => Some(rate),
            Horizon::Finite { .. } => None,
        }
    }

    pub fn control_set(&self) -> &ControlSet {
        &self.control_set
    }

    pub fn exit(&self) -> Option<&ExitSpec> {
        self.exit.as_ref()
    }

    pub fn domain(&self) -> Option<&Domain> {
        self.exit.as_ref().map(|e| &e.domain)
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Sense the problem was originally posed in; survives [`canonicalize`].
    pub fn original_sense(&self) -> Sense {
        self.original_sense
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    pub fn has_closed_form_hamiltonian(&self) -> bool {
        self.hamiltonian.is_some()
    }

    /// Multiplier taking canonical (minimization) values back to the sign of
    /// the original problem.
    pub fn report_sign(&self) -> f64 {
        self.original_sense.sign()
    }

    fn canonical_sign(&self) -> f64 {
        self.sense.sign()
    }

    pub fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.f0)(t, x, out)
    }

    pub fn controlled_drift(&self, t: f64, x: &[f64], z: &[f64], out: &mut [f64]) {
        (self.f1)(t, x, z, out)
    }

    /// B(t, x), row-major n×m.
    pub fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }

    /// (B Bᵀ)(t, x) for one-dimensional state.
    pub fn variance_1d(&self, t: f64, x: f64) -> f64 {
        let mut b = [0.0; MAX_DIM];
        let m = self.noise_dim;
        (self.diffusion)(t, &[x], &mut b[..m]);
        b[..m].iter().map(|v| v * v).sum()
    }

    /// Running cost in the minimization convention.
    pub fn running_cost(&self, t: f64, x: &[f64], z: &[f64]) -> f64 {
        self.canonical_sign() * (self.running_cost)(t, x, z)
    }

    /// Terminal cost φ in the minimization convention (0 for discounted problems).
    pub fn terminal_cost(&self, x: &[f64]) -> f64 {
        match &self.horizon {
            Horizon::Finite { terminal_cost, .. } => self.canonical_sign() * terminal_cost(x),
            Horizon::DiscountedInfinite { .. } => 0.0,
        }
    }

    /// Boundary cost ψ in the minimization convention.
    pub fn boundary_cost(&self, t: f64, x: &[f64]) -> Option<f64> {
        self.exit
            .as_ref()
            .map(|e| self.canonical_sign() * (e.boundary_cost)(t, x))
    }

    /// Closed-form minimized Hamiltonian, if registered, in the minimization
    /// convention: for a maximization problem H_min(p) = −H_sup(−p).
    pub fn closed_form_hamiltonian(
        &self,
        t: f64,
        x: &[f64],
        p: &[f64],
        argmin: &mut [f64],
    ) -> Option<f64> {
        let h = self.hamiltonian.as_ref()?;
        match self.sense {
            Sense::Minimize => Some(h(t, x, p, argmin)),
            Sense::Maximize => {
                let mut q = [0.0; MAX_DIM];
                for (qi, pi) in q.iter_mut().zip(p) {
                    *qi = -pi;
                }
                Some(-h(t, x, &q[..p.len()], argmin))
            }
        }
    }

    fn check_exit_compatibility(&self) -> Result<()> {
        let (Some(exit), Some(horizon)) = (&self.exit, self.terminal_time()) else {
            return Ok(());
        };
        let domain = &exit.domain;
        if !(domain.signed_distance(&domain.centroid()) < 0.0) {
            return Err(Error::InvalidProblem(
                "domain centroid is not interior".into(),
            ));
        }
        for x in boundary_samples(domain) {
            let psi = (exit.boundary_cost)(horizon, &x);
            let phi = match &self.horizon {
                Horizon::Finite { terminal_cost, .. } => terminal_cost(&x),
                Horizon::DiscountedInfinite { .. } => continue,
            };
            if (psi - phi).abs() > 1e-12 {
                return Err(Error::Incompatible(alloc::format!(
                    "boundary cost psi(T, x) = {psi} differs from terminal cost phi(x) = {phi} at boundary point {x:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Corner and face-center points of a box domain.
fn boundary_samples(domain: &Domain) -> Vec<Vec<f64>> {
    let n = domain.dim();
    let mut out = Vec::new();
    let center = domain.centroid();
    for axis in 0..n {
        for bound in [domain.lower()[axis], domain.upper()[axis]] {
            let mut p = center.clone();
            p[axis] = bound;
            out.push(p);
        }
    }
    if n > 1 && n <= 4 {
        for mask in 0..(1usize << n) {
            let p = (0..n)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        domain.upper()[i]
                    } else {
                        domain.lower()[i]
                    }
                })
                .collect();
            out.push(p);
        }
    }
    out
}

/// Maps a maximization problem to the equivalent minimization by negating
/// l, φ, ψ (and the registered Hamiltonian). Idempotent.
pub fn canonicalize(problem: &ControlProblem) -> ControlProblem {
    if problem.sense == Sense::Minimize {
        return problem.clone();
    }
    let mut out = problem.clone();
    let l = problem.running_cost.clone();
    out.running_cost = Arc::new(move |t, x, z| -l(t, x, z));
    if let Horizon::Finite {
        horizon,
        terminal_cost,
    } = &problem.horizon
    {
        let phi = terminal_cost.clone();
        out.horizon = Horizon::Finite {
            horizon: *horizon,
            terminal_cost: Arc::new(move |x| -phi(x)),
        };
    }
    if let Some(exit) = &problem.exit {
        let psi = exit.boundary_cost.clone();
        out.exit = Some(ExitSpec {
            domain: exit.domain.clone(),
            boundary_cost: Arc::new(move |t, x| -psi(t, x)),
        });
    }
    if let Some(h) = &problem.hamiltonian {
        let h = h.clone();
        out.hamiltonian = Some(Arc::new(move |t, x, p, argmin| {
            let mut q = [0.0; MAX_DIM];
            for (qi, pi) in q.iter_mut().zip(p) {
                *qi = -pi;
            }
            -h(t, x, &q[..p.len()], argmin)
        }));
    }
    out.sense = Sense::Minimize;
    out
}

/// Axis-aligned sampling region for hypothesis probes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRegion {
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    /// Time window; defaults to `[0, T]` (or `[0, 1]` for discounted problems).
    pub time: Option<(f64, f64)>,
    /// Controls on unbounded axes are drawn from `[lower, lower + span]`.
    pub unbounded_control_span: f64,
}

impl ProbeRegion {
    pub fn new(state_lower: Vec<f64>, state_upper: Vec<f64>) -> Self {
        Self {
            state_lower,
            state_upper,
            time: None,
            unbounded_control_span: 1.0,
        }
    }
}

/// Sampled lower bounds of the coefficient constants.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    /// max |F₀(t,x₁) − F₀(t,x₂)| / |x₁ − x₂|
    pub lipschitz_f0_estimate: f64,
    /// max |F₁(t,x₁,z) − F₁(t,x₂,z)| / |x₁ − x₂| (the constant K)
    pub lipschitz_f1_estimate: f64,
    /// min eigenvalue of B Bᵀ over the samples (λ₀)
    pub ellipticity_lambda0_estimate: f64,
    /// sup ‖B⁻¹F₁‖ (least-squares inverse), `+∞` when F₁ leaves the range of B
    pub girsanov_sup_estimate: f64,
    pub samples_used: usize,
}

struct ProbeScratch {
    bmat: [f64; MAX_DIM * MAX_DIM],
}

/// Samples `n_samples` pairs of states (plus a time and a control) and reports
/// maxima of difference quotients and related constants. Deterministic in
/// `(seed, n_samples, region)`; sample `i` is drawn from stream `i`, so a
/// larger sample count extends the sample set of a smaller one.
pub fn probe_hypotheses(
    problem: &ControlProblem,
    n_samples: usize,
    seed: u64,
    region: &ProbeRegion,
) -> Result<HypothesisReport> {
    let n = problem.state_dim;
    let m = problem.noise_dim;
    if n_samples < 2 {
        return Err(Error::InvalidParams(
            "probe_hypotheses needs at least 2 samples".into(),
        ));
    }
    if region.state_lower.len() != n
        || region.state_upper.len() != n
        || region
            .state_lower
            .iter()
            .zip(&region.state_upper)
            .any(|(a, b)| !(a < b))
    {
        return Err(Error::InvalidParams(
            "probe region must be a nondegenerate box of the state dimension".into(),
        ));
    }
    let (t_lo, t_hi) = region.time.unwrap_or(match problem.horizon {
        Horizon::Finite { horizon, .. } => (0.0, horizon),
        Horizon::DiscountedInfinite { .. } => (0.0, 1.0),
    });

    let mut report = HypothesisReport {
        lipschitz_f0_estimate: 0.0,
        lipschitz_f1_estimate: 0.0,
        ellipticity_lambda0_estimate: f64::INFINITY,
        girsanov_sup_estimate: 0.0,
        samples_used: n_samples,
    };
    let k = problem.control_dim();
    let mut scratch = ProbeScratch {
        bmat: [0.0; MAX_DIM * MAX_DIM],
    };
    for i in 0..n_samples {
        let mut stream = PathStream::new(seed, i as u64, 1);
        let t = t_lo + (t_hi - t_lo) * stream.uniform();
        let mut x1 = [0.0; MAX_DIM];
        let mut x2 = [0.0; MAX_DIM];
        for d in 0..n {
            let (lo, hi) = (region.state_lower[d], region.state_upper[d]);
            x1[d] = lo + (hi - lo) * stream.uniform();
            x2[d] = lo + (hi - lo) * stream.uniform();
        }
        let mut z = [0.0; MAX_DIM];
        sample_control(
            problem.control_set(),
            region.unbounded_control_span,
            &mut stream,
            &mut z[..k],
        );
        let (x1, x2, z) = (&x1[..n], &x2[..n], &z[..k]);

        let mut a = [0.0; MAX_DIM];
        let mut b = [0.0; MAX_DIM];
        problem.drift(t, x1, &mut a[..n]);
        problem.drift(t, x2, &mut b[..n]);
        check_finite("F0", t, x1, &a[..n])?;
        check_finite("F0", t, x2, &b[..n])?;
        let dx = dist(x1, x2);
        if dx > 0.0 {
            report.lipschitz_f0_estimate = report
                .lipschitz_f0_estimate
                .max(dist(&a[..n], &b[..n]) / dx);
        }

        problem.controlled_drift(t, x1, z, &mut a[..n]);
        problem.controlled_drift(t, x2, z, &mut b[..n]);
        check_finite("F1", t, x1, &a[..n])?;
        check_finite("F1", t, x2, &b[..n])?;
        if dx > 0.0 {
            report.lipschitz_f1_estimate = report
                .lipschitz_f1_estimate
                .max(dist(&a[..n], &b[..n]) / dx);
        }

        problem.diffusion(t, x1, &mut scratch.bmat[..n * m]);
        check_finite("B", t, x1, &scratch.bmat[..n * m])?;
        let bm = DMatrix::from_row_slice(n, m, &scratch.bmat[..n * m]);
        let bbt = &bm * bm.transpose();
        let lambda_min = bbt
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        report.ellipticity_lambda0_estimate =
            report.ellipticity_lambda0_estimate.min(lambda_min.max(0.0));

        let f1 = DVector::from_column_slice(&a[..n]);
        report.girsanov_sup_estimate = report.girsanov_sup_estimate.max(girsanov_norm(&bm, &f1));
    }
    Ok(report)
}

fn sample_control(set: &ControlSet, span: f64, stream: &mut PathStream, out: &mut [f64]) {
    match set.kind() {
        ControlSetKind::Box { lower, upper } => {
            for (d, v) in out.iter_mut().enumerate() {
                let hi = if upper[d].is_finite() {
                    upper[d]
                } else {
                    lower[d] + span
                };
                *v = lower[d] + (hi - lower[d]) * stream.uniform();
            }
        }
        ControlSetKind::Finite(points) => {
            let idx = ((stream.uniform() * points.len() as f64) as usize).min(points.len() - 1);
            out.copy_from_slice(&points[idx]);
        }
    }
}

/// ‖B⁺F₁‖ with B⁺ the least-squares inverse, or `+∞` when B u = F₁ has a
/// residual above 1e-10.
fn girsanov_norm(b: &DMatrix<f64>, f1: &DVector<f64>) -> f64 {
    if f1.norm() == 0.0 {
        return 0.0;
    }
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = smax * 1e-14;
    let Ok(u) = svd.solve(f1, eps) else {
        return f64::INFINITY;
    };
    let residual = (b * &u - f1).norm();
    if residual > 1e-10 || !u.norm().is_finite() {
        return f64::INFINITY;
    }
    u.norm()
}

fn check_finite(what: &'static str, t: f64, x: &[f64], values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what,
            t,
            x: x.to_vec(),
        })
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Minimize => "minimize",
            Sense::Maximize => "maximize",
        })
    }
}

impl ControlSet {
    /// Human-readable summary used in reports.
    pub fn describe(&self) -> String {
        match &self.kind {
            ControlSetKind::Box { lower, upper } => alloc::format!("box {lower:?} .. {upper:?}"),
            ControlSetKind::Finite(points) => {
                alloc::format!("finite set of {} points", points.len())
            }
        }
    }
}
