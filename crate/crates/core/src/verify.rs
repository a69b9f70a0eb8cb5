//! Monte Carlo verification: cost estimates, the identity
//!
//! ```text
//! J(t, x; z) = v(t, x) + E ∫_t^{τ∧T} [H_CV(s, y, ∂ₓv; z) − H(s, y, ∂ₓv)] ds
//! ```
//!
//! checked on common random numbers, and the resulting optimality
//! certificates. Discounted problems use the identity over `[0, T₁]` with the
//! tail term `e^{−λT₁} v(y(T₁))`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::field::{Provenance, ValueField};
use crate::hamiltonian::{self, tol_gap};
use crate::problem::{ControlProblem, Horizon, Sense};
use crate::sde::{ControlPolicy, PathEnd, SimConfig, Stepper};
use crate::MAX_DIM;
#[allow(unused_imports)] // shadowed by inherent methods when std is in the build
use num_traits::Float;

/// Largest tolerated fraction of diverged or escaped paths.
pub const MAX_DISCARDED_FRACTION: f64 = 1e-3;

/// Seed offset for the independent-seeds variant of the identity check.
const INDEPENDENT_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub discarded_diverged: usize,
}

impl CostEstimate {
    fn from_samples(samples: &[f64], discarded: usize) -> Self {
        let (mean, se) = mean_and_se(samples);
        Self {
            mean,
            std_error: se,
            n_paths: samples.len(),
            discarded_diverged: discarded,
        }
    }
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Tolerance `k·SE + c_dx·Δx + c_dt·√dt`, or a fixed absolute value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TolerancePolicy {
    pub se_multiplier: f64,
    pub c_dx: f64,
    pub c_dt: f64,
    pub absolute: Option<f64>,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self {
            se_multiplier: 3.0,
            c_dx: 1.0,
            c_dt: 1.0,
            absolute: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityOptions {
    pub tolerance: TolerancePolicy,
    /// Estimate cost and gap on the same paths (default). When false the gap
    /// term is estimated on an independent batch.
    pub common_random_numbers: bool,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        Self {
            tolerance: TolerancePolicy::default(),
            common_random_numbers: true,
        }
    }
}

/// Pieces of the identity tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allowance {
    pub statistical: f64,
    pub spatial: f64,
    pub temporal: f64,
    pub absolute_override: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailReport {
    pub truncation: f64,
    /// E[e^{−λT₁} v(y(T₁))], original sign.
    pub estimate: f64,
    /// e^{−λT₁} · sup |v| over the visited terminal states.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub sense: Sense,
    pub t0: f64,
    pub x0: Vec<f64>,
    /// v(t0, x0) in the original sign.
    pub v_at_start: f64,
    /// Ĵ in the original sign.
    pub cost: CostEstimate,
    /// E ∫ gap ds, always nonnegative.
    pub gap_integral: CostEstimate,
    pub identity_defect: f64,
    pub combined_std_error: f64,
    pub tolerance_used: f64,
    pub allowance: Allowance,
    pub passed: bool,
    pub min_unclamped_gap: f64,
    pub positive_gap_steps: u64,
    pub total_steps: u64,
    pub escaped_paths: usize,
    pub dt: f64,
    pub tail: Option<TailReport>,
    pub inconclusive_reason: Option<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    OptimalWithinTolerance,
    Suboptimal,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::OptimalWithinTolerance => "optimal_within_tolerance",
            Verdict::Suboptimal => "suboptimal",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NecessityScan {
    pub label: &'static str,
    /// Fraction of retained (path, step) points whose gap exceeds `tol_gap`.
    pub positive_gap_fraction: f64,
    pub steps_checked: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub verdict: Verdict,
    pub optimality_margin: f64,
    pub evidence: IdentityReport,
    pub lower_bound_note: Option<String>,
    pub necessity: Option<NecessityScan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CertifyOptions {
    pub identity: IdentityOptions,
    /// Run the gap scan along the paths (meaningful when v is the value function).
    pub necessity: bool,
    /// The field passed the refinement-ladder diagnostic.
    pub ladder_passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Kept,
    Diverged,
    Escaped,
}

#[derive(Debug, Clone, Copy)]
struct PathOutcome {
    status: Status,
    /// Canonical-sign cost including terminal, boundary and tail terms.
    cost: f64,
    gap: f64,
    min_unclamped: f64,
    positive: u64,
    steps: u64,
    tail: f64,
    tail_abs: f64,
}

struct Integrand<'a> {
    problem: &'a ControlProblem,
    field: Option<&'a dyn ValueField>,
    /// Discount rate for discounted problems.
    rate: Option<f64>,
    /// Tail term `e^{−λT₁} v(y(T₁))` for discounted identity checks.
    tail: bool,
}

impl Integrand<'_> {
    fn run(&self, stepper: &Stepper<'_>, path: usize) -> Result<PathOutcome> {
        let problem = self.problem;
        let n = problem.state_dim();
        let rate = self.rate;
        let mut cost = 0.0;
        let mut gap = 0.0;
        let mut min_unclamped = f64::INFINITY;
        let mut positive = 0u64;
        let mut steps = 0u64;
        let mut escaped = false;
        let mut failure: Option<Error> = None;
        let weight = |t: f64, dt: f64| match rate {
            Some(l) => (-l * t).exp() * (1.0 - (-l * dt).exp()) / l,
            None => dt,
        };
        let summary = stepper.run_path(path, |v| {
            if escaped || failure.is_some() {
                return;
            }
            let w = weight(v.t, v.dt);
            cost += w * problem.running_cost(v.t, v.state, v.control);
            let Some(field) = self.field else { return };
            let mut p = [0.0; MAX_DIM];
            match field.gradient(v.t, v.state, &mut p[..n]) {
                Ok(()) => {}
                Err(Error::OutsideGrid { .. }) => {
                    escaped = true;
                    return;
                }
                Err(e) => {
                    failure = Some(e);
                    return;
                }
            }
            let g = hamiltonian::minimize(problem, v.t, v.state, &p[..n])
                .and_then(|h| h.gap_at(problem, v.control).map(|g| (g, h.value)));
            match g {
                Ok((g, value)) => {
                    min_unclamped = min_unclamped.min(g);
                    steps += 1;
                    let clamped = hamiltonian::clamp_gap(g, value);
                    if clamped > tol_gap(value) {
                        positive += 1;
                    }
                    gap += w * clamped;
                }
                Err(e) => failure = Some(e),
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        let discount = |t: f64| rate.map_or(1.0, |l| (-l * t).exp());
        let mut tail = 0.0;
        let mut tail_abs = 0.0;
        let status = match &summary.end {
            PathEnd::Diverged { .. } => Status::Diverged,
            PathEnd::Escaped { .. } => Status::Escaped,
            _ if escaped => Status::Escaped,
            PathEnd::Exited(rec) => {
                cost +=
                    discount(rec.time) * problem.boundary_cost(rec.time, &rec.state).unwrap_or(0.0);
                Status::Kept
            }
            PathEnd::Horizon => {
                let y = &summary.final_state[..n];
                cost += problem.terminal_cost(y);
                if self.tail {
                    if let Some(field) = self.field {
                        let v = field.value(summary.final_time, y)?;
                        tail = discount(summary.final_time) * v;
                        tail_abs = v.abs();
                        cost += tail;
                    }
                }
                Status::Kept
            }
        };
        Ok(PathOutcome {
            status,
            cost,
            gap,
            min_unclamped,
            positive,
            steps,
            tail,
            tail_abs,
        })
    }
}

fn run_batch<E: Executor>(
    integrand: &Integrand<'_>,
    stepper: &Stepper<'_>,
    n_paths: usize,
    exec: &E,
) -> Result<Vec<PathOutcome>> {
    let outcomes = exec.map_indexed(n_paths, |p| integrand.run(stepper, p));
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let diverged = outcomes
        .iter()
        .filter(|o| o.status == Status::Diverged)
        .count();
    let escaped = outcomes
        .iter()
        .filter(|o| o.status == Status::Escaped)
        .count();
    if diverged == n_paths {
        return Err(Error::AllDiverged { n_paths });
    }
    if diverged as f64 > MAX_DISCARDED_FRACTION * n_paths as f64 {
        return Err(Error::TooManyDiverged {
            discarded: diverged,
            n_paths,
        });
    }
    if escaped as f64 > MAX_DISCARDED_FRACTION * n_paths as f64 {
        return Err(Error::TooManyEscaped { escaped, n_paths });
    }
    Ok(outcomes)
}

fn discount_rate(problem: &ControlProblem) -> Option<f64> {
    match problem.horizon() {
        Horizon::DiscountedInfinite { rate } => Some(*rate),
        Horizon::Finite { .. } => None,
    }
}

/// Monte Carlo estimate of J(t0, x0; policy), original sign.
///
/// Running cost uses left-endpoint quadrature; a path pays ψ at its exit time
/// or φ at T. Discounted problems integrate up to `config.end_time`.
pub fn estimate_cost<E: Executor>(
    problem: &ControlProblem,
    policy: &ControlPolicy,
    t0: f64,
    x0: &[f64],
    config: &SimConfig,
    exec: &E,
) -> Result<CostEstimate> {
    let stepper = Stepper::new(problem, policy, t0, x0, config)?;
    let integrand = Integrand {
        problem,
        field: None,
        rate: discount_rate(problem),
        tail: false,
    };
    let outcomes = run_batch(&integrand, &stepper, config.n_paths, exec)?;
    let sign = problem.report_sign();
    let costs: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.status == Status::Kept)
        .map(|o| sign * o.cost)
        .collect();
    let diverged = outcomes
        .iter()
        .filter(|o| o.status == Status::Diverged)
        .count();
    Ok(CostEstimate::from_samples(&costs, diverged))
}

/// Checks the identity `J = v + E∫gap` for `policy` against `field`
/// (minimization convention) from `(t0, x0)`.
pub fn fundamental_identity<E: Executor>(
    problem: &ControlProblem,
    field: &dyn ValueField,
    policy: &ControlPolicy,
    t0: f64,
    x0: &[f64],
    config: &SimConfig,
    opts: &IdentityOptions,
    exec: &E,
) -> Result<IdentityReport> {
    if discount_rate(problem).is_some() {
        return Err(Error::InvalidProblem(
            "use discounted_verify for discounted problems".into(),
        ));
    }
    identity(problem, field, policy, t0, x0, config, opts, exec, false)
}

/// Identity over `[0, T₁]` for a discounted problem with the tail term
/// `e^{−λT₁} v(y(T₁))` folded into the cost.
pub fn discounted_verify<E: Executor>(
    problem: &ControlProblem,
    field: &dyn ValueField,
    policy: &ControlPolicy,
    x0: &[f64],
    truncation: f64,
    config: &SimConfig,
    opts: &IdentityOptions,
    exec: &E,
) -> Result<IdentityReport> {
    if discount_rate(problem).is_none() {
        return Err(Error::InvalidProblem(
            "discounted_verify needs a discounted problem".into(),
        ));
    }
    if !(truncation > 0.0) {
        return Err(Error::InvalidSimulation(
            "truncation time must be positive".into(),
        ));
    }
    let config = config.clone().with_end_time(truncation);
    identity(problem, field, policy, 0.0, x0, &config, opts, exec, true)
}

#[allow(clippy::too_many_arguments)]
fn identity<E: Executor>(
    problem: &ControlProblem,
    field: &dyn ValueField,
    policy: &ControlPolicy,
    t0: f64,
    x0: &[f64],
    config: &SimConfig,
    opts: &IdentityOptions,
    exec: &E,
    with_tail: bool,
) -> Result<IdentityReport> {
    let stepper = Stepper::new(problem, policy, t0, x0, config)?;
    let rate = discount_rate(problem);
    let integrand = Integrand {
        problem,
        field: Some(field),
        rate,
        tail: with_tail,
    };
    let outcomes = run_batch(&integrand, &stepper, config.n_paths, exec)?;
    let kept: Vec<&PathOutcome> = outcomes
        .iter()
        .filter(|o| o.status == Status::Kept)
        .collect();
    let diverged = outcomes
        .iter()
        .filter(|o| o.status == Status::Diverged)
        .count();
    let escaped = outcomes
        .iter()
        .filter(|o| o.status == Status::Escaped)
        .count();
    let sign = problem.report_sign();
    let v0 = field.value(t0, x0)?;

    let costs: Vec<f64> = kept.iter().map(|o| o.cost).collect();
    let (gap_samples, gap_diverged) = if opts.common_random_numbers {
        (kept.iter().map(|o| o.gap).collect::<Vec<_>>(), diverged)
    } else {
        let mut other = config.clone();
        other.seed = config.seed.wrapping_add(INDEPENDENT_SEED_OFFSET);
        let other_stepper = Stepper::new(problem, policy, t0, x0, &other)?;
        let more = run_batch(&integrand, &other_stepper, other.n_paths, exec)?;
        let d = more.iter().filter(|o| o.status == Status::Diverged).count();
        (
            more.iter()
                .filter(|o| o.status == Status::Kept)
                .map(|o| o.gap)
                .collect(),
            d,
        )
    };

    let cost = CostEstimate::from_samples(&costs, diverged);
    let gap_integral = CostEstimate::from_samples(&gap_samples, gap_diverged);
    let (defect, combined_se) = if opts.common_random_numbers {
        let d: Vec<f64> = kept.iter().map(|o| o.cost - o.gap).collect();
        let (m, se) = mean_and_se(&d);
        ((m - v0).abs(), se)
    } else {
        (
            (cost.mean - gap_integral.mean - v0).abs(),
            (cost.std_error * cost.std_error + gap_integral.std_error * gap_integral.std_error)
                .sqrt(),
        )
    };

    let dt = stepper.grid.dt;
    let pol = opts.tolerance;
    let allowance = Allowance {
        statistical: pol.se_multiplier * combined_se,
        spatial: pol.c_dx * field.spatial_step(),
        temporal: pol.c_dt * dt.sqrt(),
        absolute_override: pol.absolute.is_some(),
    };
    let tolerance_used = pol
        .absolute
        .unwrap_or(allowance.statistical + allowance.spatial + allowance.temporal);
    let mut passed = defect <= tolerance_used;
    let mut notes = Vec::new();
    let mut inconclusive_reason = None;

    let tail = if with_tail {
        let truncation = stepper.grid.end();
        let l = rate.unwrap_or(0.0);
        let sup_v = kept.iter().map(|o| o.tail_abs).fold(0.0, f64::max);
        let estimate = sign * kept.iter().map(|o| o.tail).sum::<f64>() / kept.len() as f64;
        let bound = (-l * truncation).exp() * sup_v;
        if bound > tolerance_used {
            passed = false;
            inconclusive_reason = Some(format!(
                "tail bound {bound:.3e} exceeds the tolerance {tolerance_used:.3e}; raise the truncation time T1"
            ));
        }
        Some(TailReport {
            truncation,
            estimate,
            bound,
        })
    } else {
        None
    };
    if gap_integral.mean < -3.0 * gap_integral.std_error {
        notes.push(String::from(
            "gap integral negative beyond Monte Carlo noise",
        ));
    }
    if escaped > 0 {
        notes.push(format!(
            "{escaped} paths left the field's grid and were dropped"
        ));
    }
    if diverged > 0 {
        notes.push(format!("{diverged} diverged paths discarded"));
    }

    let min_unclamped_gap = kept
        .iter()
        .map(|o| o.min_unclamped)
        .fold(f64::INFINITY, f64::min);
    Ok(IdentityReport {
        sense: problem.original_sense(),
        t0,
        x0: x0.to_vec(),
        v_at_start: sign * v0,
        cost: CostEstimate {
            mean: sign * cost.mean,
            ..cost
        },
        gap_integral,
        identity_defect: defect,
        combined_std_error: combined_se,
        tolerance_used,
        allowance,
        passed,
        min_unclamped_gap,
        positive_gap_steps: kept.iter().map(|o| o.positive).sum(),
        total_steps: kept.iter().map(|o| o.steps).sum(),
        escaped_paths: escaped,
        dt,
        tail,
        inconclusive_reason,
        notes,
    })
}

/// Three-valued certificate built on [`fundamental_identity`].
pub fn certify<E: Executor>(
    problem: &ControlProblem,
    field: &dyn ValueField,
    policy: &ControlPolicy,
    t0: f64,
    x0: &[f64],
    config: &SimConfig,
    opts: &CertifyOptions,
    exec: &E,
) -> Result<Certificate> {
    let report =
        fundamental_identity(problem, field, policy, t0, x0, config, &opts.identity, exec)?;
    Ok(certificate_from(report, field.provenance(), opts))
}

/// Verdict for an identity report (also used for discounted reports).
pub fn certificate_from(
    mut report: IdentityReport,
    provenance: Provenance,
    opts: &CertifyOptions,
) -> Certificate {
    let gap = report.gap_integral;
    let verdict = if !report.passed {
        if report.inconclusive_reason.is_none() {
            report.inconclusive_reason = Some(format!(
                "identity defect {:.3e} exceeds the tolerance {:.3e}",
                report.identity_defect, report.tolerance_used
            ));
        }
        Verdict::Inconclusive
    } else if gap.mean <= 3.0 * gap.std_error + report.tolerance_used {
        Verdict::OptimalWithinTolerance
    } else {
        Verdict::Suboptimal
    };
    let lower_bound_note =
        (opts.ladder_passed || provenance == Provenance::ClosedForm).then(|| match report.sense {
            Sense::Minimize => format!(
                "v <= V: no admissible control has expected cost below v(t0, x0) = {:.6}",
                report.v_at_start
            ),
            Sense::Maximize => format!(
                "v >= V: no admissible control has expected reward above v(t0, x0) = {:.6}",
                report.v_at_start
            ),
        });
    let necessity = opts.necessity.then(|| NecessityScan {
        label: "conditional on v = V",
        positive_gap_fraction: if report.total_steps == 0 {
            0.0
        } else {
            report.positive_gap_steps as f64 / report.total_steps as f64
        },
        steps_checked: report.total_steps,
    });
    Certificate {
        verdict,
        optimality_margin: gap.mean,
        evidence: report,
        lower_bound_note,
        necessity,
    }
}
