//! The four workflows behind the CLI. Each writes its outputs into `out_dir`
//! and returns the list of gated checks that failed.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use hjbv_core::benchmarks::{
    expected_exit_time, AdvertisingParams, AdvertisingSolution, ConstantField,
};
use hjbv_core::hamiltonian::{feedback_map, minimize, tol_gap, unclamped_gap};
use hjbv_core::hjb::{
    gradient_diagnostics, refine_ladder, residual, solve_exit, solve_parabolic,
    ApproximationLadder, Boundary, GradientProbes, Grid1D, ResidualReport, SpaceTimeField,
};
use hjbv_core::problem::{probe_hypotheses, ProbeRegion};
use hjbv_core::rng::PathStream;
use hjbv_core::sde::{simulate, ControlPolicy, SimConfig};
use hjbv_core::verify::{
    certificate_from, certify, discounted_verify, estimate_cost, CertifyOptions, IdentityOptions,
    TolerancePolicy, Verdict,
};
use hjbv_core::{ControlProblem, Provenance, ValueField};
use serde::Serialize;

use crate::config::{
    num, BoundarySpec, ExitVariant, FieldSpec, PolicySpec, ProblemSection, RunConfig,
};
use crate::error::{Error, Result};
use crate::formats::{write_field_csv, write_paths_csv};
use crate::parallel::Parallel;
use crate::report::{
    markdown, write_json, Check, EstimateJson, Failure, FieldDiagnosticsJson, GradientJson,
    LadderJson, ResidualJson, VerifyJson,
};

pub const CONFIG_ECHO: &str = "config.resolved.ini";
pub const FAILURES: &str = "failures.json";

/// Result of a command: files written and gated checks that failed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub failures: Vec<Failure>,
    /// Resolved configuration the outputs were produced from.
    pub config: String,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn gate(&mut self, check: &Check) {
        if !check.passed {
            self.failures.push(Failure::new(
                &check.name,
                format!(
                    "value {:e} exceeds threshold {:e}",
                    check.value, check.threshold
                ),
            ));
        }
    }
}

/// Writes `failures.json` when a command failed or errored and returns the
/// process exit status (0 pass, 1 gated failure, 2 error).
pub fn finish(out_dir: &Path, command: &str, result: &Result<Outcome>) -> i32 {
    #[derive(Serialize)]
    struct Failures<'a> {
        failures: &'a [Failure],
    }
    let (code, failures, config) = match result {
        Ok(o) if o.passed() => return 0,
        Ok(o) => (1, o.failures.clone(), o.config.as_str()),
        Err(e) => (2, vec![Failure::new("error", e.to_string())], ""),
    };
    if std::fs::create_dir_all(out_dir).is_ok() {
        let _ = write_json(
            &out_dir.join(FAILURES),
            command,
            config,
            Failures {
                failures: &failures,
            },
        );
    }
    code
}

fn prepare(out_dir: &Path, cfg: &RunConfig, outcome: &mut Outcome) -> Result<String> {
    std::fs::create_dir_all(out_dir)?;
    let echo = cfg.echo();
    let path = out_dir.join(CONFIG_ECHO);
    std::fs::write(&path, &echo)?;
    outcome.written.push(path);
    outcome.config = echo.clone();
    Ok(echo)
}

fn horizon_of(cfg: &RunConfig, problem: &ControlProblem) -> Option<f64> {
    match cfg.problem {
        ProblemSection::Discounted { .. } => None,
        _ => problem.terminal_time(),
    }
}

/// Exact value in the minimization convention, when one is known.
pub fn closed_form_field(cfg: &RunConfig) -> Result<Arc<dyn ValueField>> {
    match cfg.problem {
        ProblemSection::Advertising { .. } => {
            let params = cfg.problem.advertising_params().unwrap()?;
            Ok(Arc::new(
                AdvertisingSolution::new(params)?.canonical_field(),
            ))
        }
        ProblemSection::ExitDemo(ExitVariant::Constant { value }) => {
            Ok(Arc::new(ConstantField { dim: 1, value }))
        }
        ProblemSection::Discounted { rate, cost } => Ok(Arc::new(ConstantField {
            dim: 1,
            value: cost / rate,
        })),
        ProblemSection::ExitDemo(_) => Err(Error::Unsupported(
            "this exit_demo variant has no closed-form value; set field = solved".into(),
        )),
    }
}

pub struct SolvedField {
    pub field: SpaceTimeField,
    pub residual: ResidualReport,
    pub ladder: Option<ApproximationLadder>,
}

/// Solves the HJB equation on the configured grid, plus the ladder
/// diagnostic when `ladder_levels >= 3`.
pub fn solve_field(
    cfg: &RunConfig,
    problem: &ControlProblem,
    exec: &Parallel,
) -> Result<SolvedField> {
    let g = &cfg.grid;
    let grid = Grid1D::new(g.x_min, g.x_max, g.nx, g.nt)?;
    let exact = match (cfg.problem, g.boundary) {
        (ProblemSection::Discounted { .. }, _) => {
            return Err(Error::Unsupported(
                "the solver handles finite-horizon problems only; use field = closed_form".into(),
            ))
        }
        (ProblemSection::Advertising { .. }, BoundarySpec::ClosedForm) => {
            Some(closed_form_field(cfg)?)
        }
        (ProblemSection::ExitDemo(_), _) | (_, BoundarySpec::LinearExtrapolation) => None,
    };
    let boundary = match &exact {
        Some(f) => Boundary::DirichletFrom(f.as_ref()),
        None => Boundary::LinearExtrapolation,
    };
    let field = if problem.domain().is_some() {
        solve_exit(problem, grid)?
    } else {
        solve_parabolic(problem, grid, boundary)?
    };
    let residual = residual(&field, problem, 1)?;
    let ladder = match cfg.verify.ladder_levels {
        0 => None,
        n => Some(refine_ladder(problem, grid, n, boundary, exec)?),
    };
    Ok(SolvedField {
        field,
        residual,
        ladder,
    })
}

fn policy_for(
    cfg: &RunConfig,
    problem: &ControlProblem,
    field: &Arc<dyn ValueField>,
) -> (ControlPolicy, String) {
    let k = problem.control_dim();
    match cfg.verify.policy {
        PolicySpec::Feedback => (feedback_map(problem, field.clone()), "feedback".into()),
        PolicySpec::Zero => (ControlPolicy::Constant(vec![0.0; k]), "zero".into()),
        PolicySpec::Constant(z) => (
            ControlPolicy::Constant(vec![z; k]),
            format!("constant:{}", num(z)),
        ),
    }
}

fn sim_config(cfg: &RunConfig) -> SimConfig {
    let m = &cfg.mc;
    let sim = SimConfig::new(m.dt, m.paths, m.seed).with_exit_rule(m.exit_rule);
    match cfg.problem {
        ProblemSection::Discounted { .. } => sim.with_end_time(cfg.verify.truncation_t1),
        _ => sim,
    }
}

fn dump_paths(
    cfg: &RunConfig,
    problem: &ControlProblem,
    policy: &ControlPolicy,
    out_dir: &Path,
    exec: &Parallel,
    outcome: &mut Outcome,
) -> Result<()> {
    let mut sim = sim_config(cfg);
    sim.n_paths = cfg.mc.dump_paths.min(cfg.mc.paths);
    if sim.n_paths == 0 {
        return Ok(());
    }
    let batch = simulate(problem, policy, cfg.verify.t0, &[cfg.verify.x0], &sim, exec)?;
    let path = out_dir.join("paths.csv");
    write_paths_csv(&path, &batch, cfg.mc.stride)?;
    outcome.written.push(path);
    Ok(())
}

#[derive(Serialize)]
struct SolveJson {
    problem: String,
    grid: GridJson,
    stability_ratio: f64,
    value_at_start: f64,
    residual: ResidualJson,
    closed_form_max_error: Option<f64>,
    ladder: Option<LadderJson>,
}

#[derive(Serialize)]
struct GridJson {
    x_min: f64,
    x_max: f64,
    nx: usize,
    nt: usize,
    boundary: &'static str,
}

/// Solves the HJB equation and writes `field.csv` and `residual.json`.
/// Gated: the ladder (when requested) passes.
pub fn cmd_solve(cfg: &RunConfig, out_dir: &Path, exec: &Parallel) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let echo = prepare(out_dir, cfg, &mut outcome)?;
    let problem = cfg.problem.build()?;
    let solved = solve_field(cfg, &problem, exec)?;
    let sign = problem.report_sign();
    let path = out_dir.join("field.csv");
    write_field_csv(&path, &solved.field, sign)?;
    outcome.written.push(path);

    let grid = *solved.field.grid();
    let closed_form_max_error = match closed_form_field(cfg) {
        Ok(exact) => {
            let mut err = 0.0f64;
            for j in 0..=grid.nt {
                let t = solved.field.time(j);
                for i in 0..grid.nx {
                    err = err.max((solved.field.at(j, i) - exact.value(t, &[grid.x(i)])?).abs());
                }
            }
            Some(err)
        }
        Err(_) => None,
    };
    if let Some(l) = &solved.ladder {
        if !l.passed {
            outcome
                .failures
                .push(Failure::new("ladder", l.notes.join("; ")));
        }
    }
    let body = SolveJson {
        problem: problem.name().to_string(),
        grid: GridJson {
            x_min: grid.x_min,
            x_max: grid.x_max,
            nx: grid.nx,
            nt: grid.nt,
            boundary: if problem.domain().is_some() {
                "exit_data"
            } else {
                match cfg.grid.boundary {
                    BoundarySpec::ClosedForm => "closed_form",
                    BoundarySpec::LinearExtrapolation => "linear_extrapolation",
                }
            },
        },
        stability_ratio: grid.stability_ratio(solved.field.horizon()),
        value_at_start: sign * solved.field.value(cfg.verify.t0, &[cfg.verify.x0])?,
        residual: (&solved.residual).into(),
        closed_form_max_error,
        ladder: solved.ladder.as_ref().map(Into::into),
    };
    let path = out_dir.join("residual.json");
    write_json(&path, "solve", &echo, body)?;
    outcome.written.push(path);
    Ok(outcome)
}

#[derive(Serialize)]
struct SimulateJson {
    problem: String,
    policy: String,
    t0: f64,
    x0: f64,
    dt: f64,
    exit_rule: &'static str,
    estimate: EstimateJson,
}

/// Estimates the expected cost of the configured policy; writes
/// `paths.csv` and `estimate.json`.
pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path, exec: &Parallel) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let echo = prepare(out_dir, cfg, &mut outcome)?;
    let problem = cfg.problem.build()?;
    let field = field_for_policy(cfg, &problem, exec)?;
    let (policy, label) = policy_for(cfg, &problem, &field);
    let sim = sim_config(cfg);
    let est = estimate_cost(
        &problem,
        &policy,
        cfg.verify.t0,
        &[cfg.verify.x0],
        &sim,
        exec,
    )?;
    dump_paths(cfg, &problem, &policy, out_dir, exec, &mut outcome)?;
    let body = SimulateJson {
        problem: problem.name().to_string(),
        policy: label,
        t0: cfg.verify.t0,
        x0: cfg.verify.x0,
        dt: cfg.mc.dt,
        exit_rule: cfg.mc.exit_rule.as_str(),
        estimate: (&est).into(),
    };
    let path = out_dir.join("estimate.json");
    write_json(&path, "simulate", &echo, body)?;
    outcome.written.push(path);
    Ok(outcome)
}

/// Field used by feedback policies: closed form or solved per `verify.field`.
fn field_for_policy(
    cfg: &RunConfig,
    problem: &ControlProblem,
    exec: &Parallel,
) -> Result<Arc<dyn ValueField>> {
    match (cfg.verify.policy, cfg.verify.field) {
        (PolicySpec::Feedback, FieldSpec::Solved) => {
            let mut quick = *cfg;
            quick.verify.ladder_levels = 0;
            Ok(Arc::new(solve_field(&quick, problem, exec)?.field))
        }
        (PolicySpec::Feedback, FieldSpec::ClosedForm) => closed_form_field(cfg),
        _ => Ok(Arc::new(ConstantField { dim: 1, value: 0.0 })),
    }
}

fn probe_region(cfg: &RunConfig) -> ProbeRegion {
    ProbeRegion::new(vec![cfg.grid.x_min], vec![cfg.grid.x_max])
}

/// Runs the identity check and certificate; writes `report.md`,
/// `report.json` and `paths.csv`. Gated: the verdict is not inconclusive and
/// the ladder (when requested) passes.
pub fn cmd_verify(cfg: &RunConfig, out_dir: &Path, exec: &Parallel) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let echo = prepare(out_dir, cfg, &mut outcome)?;
    let problem = cfg.problem.build()?;
    let v = &cfg.verify;

    let hypotheses = probe_hypotheses(&problem, 2000, cfg.mc.seed, &probe_region(cfg))?;

    let mut diag = FieldDiagnosticsJson::default();
    let mut ladder_passed = false;
    let field: Arc<dyn ValueField> = match v.field {
        FieldSpec::ClosedForm => closed_form_field(cfg)?,
        FieldSpec::Solved => {
            let solved = solve_field(cfg, &problem, exec)?;
            diag.residual = Some((&solved.residual).into());
            if let Some(l) = &solved.ladder {
                ladder_passed = l.passed;
                if !l.passed {
                    outcome
                        .failures
                        .push(Failure::new("ladder", l.notes.join("; ")));
                }
                diag.ladder = Some(l.into());
            }
            Arc::new(solved.field)
        }
    };
    if !problem.has_closed_form_hamiltonian() {
        diag.notes.push(
            "minimized Hamiltonian computed by grid scan with golden-section refinement; \
             this assumes it is continuous, discontinuous data may give grid-dependent values"
                .into(),
        );
    }
    diag.provenance = field.provenance().as_str().to_string();
    diag.spatial_step = field.spatial_step();
    if let Some(horizon) = horizon_of(cfg, &problem) {
        let n = 21;
        let points: Vec<f64> = (0..n)
            .map(|i| cfg.grid.x_min + (cfg.grid.x_max - cfg.grid.x_min) * i as f64 / (n - 1) as f64)
            .collect();
        let mut probes = GradientProbes::new(vec![0.0, 0.5 * horizon, 0.9 * horizon], points);
        if field.provenance() == Provenance::ClosedForm && !problem.kinks().is_empty() {
            probes = probes.with_kinks(problem.kinks().to_vec(), 1.0);
        }
        diag.gradient = Some(GradientJson::from(&gradient_diagnostics(
            field.as_ref(),
            horizon,
            &probes,
        )?));
    } else {
        diag.notes
            .push("gradient diagnostics skipped: no finite horizon (discounted problem)".into());
    }

    let (policy, label) = policy_for(cfg, &problem, &field);
    let sim = sim_config(cfg);
    let opts = CertifyOptions {
        identity: IdentityOptions {
            tolerance: TolerancePolicy {
                se_multiplier: v.se_multiplier,
                c_dx: v.c_dx,
                c_dt: v.c_dt,
                absolute: v.tolerance,
            },
            common_random_numbers: v.common_random_numbers,
        },
        necessity: v.necessity,
        ladder_passed,
    };
    let x0 = [v.x0];
    let cert = match cfg.problem {
        ProblemSection::Discounted { .. } => {
            if v.t0 != 0.0 {
                return Err(Error::Unsupported(
                    "discounted problems are verified from t0 = 0".into(),
                ));
            }
            let report = discounted_verify(
                &problem,
                field.as_ref(),
                &policy,
                &x0,
                v.truncation_t1,
                &sim,
                &opts.identity,
                exec,
            )?;
            certificate_from(report, field.provenance(), &opts)
        }
        _ => certify(
            &problem,
            field.as_ref(),
            &policy,
            v.t0,
            &x0,
            &sim,
            &opts,
            exec,
        )?,
    };
    if cert.verdict == Verdict::Inconclusive {
        outcome.failures.push(Failure::new(
            "identity",
            cert.evidence
                .inconclusive_reason
                .clone()
                .unwrap_or_else(|| "identity check failed".into()),
        ));
    }
    dump_paths(cfg, &problem, &policy, out_dir, exec, &mut outcome)?;

    let body = VerifyJson {
        problem: problem.name().to_string(),
        policy: label,
        hypotheses: (&hypotheses).into(),
        field: diag,
        identity: (&cert.evidence).into(),
        certificate: (&cert).into(),
    };
    let path = out_dir.join("report.md");
    std::fs::write(&path, markdown(&body, &echo))?;
    outcome.written.push(path);
    let path = out_dir.join("report.json");
    write_json(&path, "verify", &echo, body)?;
    outcome.written.push(path);
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Benchmark {
    /// Coefficient and profile tables at the requested times over `points`
    /// nodes of `[x_min, x_max]`.
    Advertising {
        times: Vec<f64>,
        x_min: f64,
        x_max: f64,
        points: usize,
    },
    ExitDemo,
}

#[derive(Serialize)]
struct AdvertisingBenchJson {
    eta: f64,
    alpha: f64,
    beta: f64,
    horizon: f64,
    k: f64,
    a0: f64,
    b0: f64,
    c0: f64,
    checks: Vec<Check>,
}

#[derive(Serialize)]
struct ExitBenchJson {
    problem: String,
    pde_value: f64,
    mc_estimate: EstimateJson,
    checks: Vec<Check>,
}

/// Random `(t, x, p, z)` samples for the gap property: returns the most
/// negative normalized unclamped gap `gap / (1 + |H⁰|)` and the largest gap
/// at the argmin.
pub fn gap_property(
    problem: &ControlProblem,
    n: usize,
    seed: u64,
    x_range: (f64, f64),
    p_range: (f64, f64),
    z_range: (f64, f64),
) -> Result<(f64, f64)> {
    let horizon = problem.terminal_time().unwrap_or(1.0);
    let mut worst = f64::INFINITY;
    let mut argmin_gap = 0.0f64;
    for i in 0..n {
        let mut s = PathStream::new(seed, i as u64, 1);
        let t = horizon * s.uniform();
        let x = x_range.0 + (x_range.1 - x_range.0) * s.uniform();
        let p = p_range.0 + (p_range.1 - p_range.0) * s.uniform();
        let z = z_range.0 + (z_range.1 - z_range.0) * s.uniform();
        let h = minimize(problem, t, &[x], &[p])?;
        let gap = unclamped_gap(problem, t, &[x], &[p], &[z])?;
        worst = worst.min(gap / (1.0 + h.value.abs()));
        argmin_gap = argmin_gap.max(h.gap_at(problem, h.argmin())? - tol_gap(h.value));
    }
    Ok((worst, argmin_gap))
}

/// Writes benchmark tables and a self-check summary. Gated: every check in
/// the summary.
pub fn cmd_benchmark(
    cfg: &RunConfig,
    bench: &Benchmark,
    out_dir: &Path,
    exec: &Parallel,
) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let echo = prepare(out_dir, cfg, &mut outcome)?;
    match (bench, cfg.problem) {
        (
            Benchmark::Advertising {
                times,
                x_min,
                x_max,
                points,
            },
            ProblemSection::Advertising { .. },
        ) => {
            let params = cfg.problem.advertising_params().unwrap()?;
            advertising_benchmark(
                &params,
                times,
                (*x_min, *x_max),
                *points,
                cfg,
                out_dir,
                &echo,
                &mut outcome,
            )?;
        }
        (Benchmark::ExitDemo, ProblemSection::ExitDemo(variant)) => {
            exit_benchmark(variant, cfg, out_dir, &echo, exec, &mut outcome)?;
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "benchmark does not match the configured problem kind `{}`",
                cfg.problem.kind()
            )))
        }
    }
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
fn advertising_benchmark(
    params: &AdvertisingParams,
    times: &[f64],
    (x_min, x_max): (f64, f64),
    points: usize,
    cfg: &RunConfig,
    out_dir: &Path,
    echo: &str,
    outcome: &mut Outcome,
) -> Result<()> {
    let sol = AdvertisingSolution::new(*params)?;
    let horizon = params.horizon;
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && **t <= horizon)) {
        return Err(Error::Unsupported(format!(
            "requested time {t} lies outside [0, T] = [0, {horizon}]"
        )));
    }
    if points < 2 || x_min.partial_cmp(&x_max) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Unsupported(
            "profile needs x_min < x_max and at least 2 points".into(),
        ));
    }

    let n_coef = 100;
    let mut w = csv::Writer::from_path(out_dir.join("coefficients.csv"))?;
    w.write_record(["t", "a", "b"])?;
    let mut rk4_dev = 0.0f64;
    for j in 0..=n_coef {
        let t = horizon * j as f64 / n_coef as f64;
        let (a, b) = (sol.a(t), sol.b(t));
        let (ra, rb) = sol.rk4_coefficients(t);
        rk4_dev = rk4_dev.max(((ra - a) / a).abs()).max(((rb - b) / b).abs());
        w.write_record([num(t), num(a), num(b)])?;
    }
    w.flush()?;
    outcome.written.push(out_dir.join("coefficients.csv"));

    let mut w = csv::Writer::from_path(out_dir.join("profile.csv"))?;
    w.write_record(["t", "x", "v", "dvdx", "feedback"])?;
    let mut residual_max = 0.0f64;
    for &t in times {
        for i in 0..points {
            let x = x_min + (x_max - x_min) * i as f64 / (points - 1) as f64;
            w.write_record([
                num(t),
                num(x),
                num(sol.value(t, x)),
                num(sol.gradient(t, x)),
                num(sol.feedback(t, x)),
            ])?;
            if x != 0.0 && t < horizon {
                let scale = 1.0 + sol.value(t, x).abs();
                residual_max = residual_max.max(sol.hjb_residual(t, x).abs() / scale);
            }
        }
    }
    w.flush()?;
    outcome.written.push(out_dir.join("profile.csv"));

    let probes = GradientProbes::new(vec![0.0], vec![1.0]).with_kinks(vec![0.0], 1.0);
    let d = gradient_diagnostics(&sol.field(), horizon, &probes)?;
    let problem = cfg.problem.build()?;
    let (worst_gap, argmin_gap) = gap_property(
        &problem,
        10_000,
        cfg.mc.seed,
        (-5.0, 5.0),
        (-6.0, 6.0),
        (0.0, 10.0),
    )?;
    let checks = vec![
        Check::at_most("rk4_relative_deviation", rk4_dev, 1e-8),
        Check::at_most("hjb_relative_residual", residual_max, 1e-8),
        Check::at_most(
            "kink_exponent_error",
            (d.kinks[0].exponent - (params.eta - 1.0)).abs(),
            0.05,
        ),
        Check::at_most("gap_negativity", -worst_gap, 1e-9),
        Check::at_most("argmin_gap_excess", argmin_gap, 0.0),
    ];
    for c in &checks {
        outcome.gate(c);
    }
    let body = AdvertisingBenchJson {
        eta: params.eta,
        alpha: params.alpha,
        beta: params.beta,
        horizon,
        k: params.k(),
        a0: sol.a(0.0),
        b0: sol.b(0.0),
        c0: sol.c(0.0),
        checks,
    };
    let path = out_dir.join("summary.json");
    write_json(&path, "benchmark", echo, body)?;
    outcome.written.push(path);
    Ok(())
}

fn exit_benchmark(
    variant: ExitVariant,
    cfg: &RunConfig,
    out_dir: &Path,
    echo: &str,
    exec: &Parallel,
    outcome: &mut Outcome,
) -> Result<()> {
    let problem = cfg.problem.build()?;
    let mut quick = *cfg;
    quick.verify.ladder_levels = 0;
    let solved = solve_field(&quick, &problem, exec)?;
    let path = out_dir.join("field.csv");
    write_field_csv(&path, &solved.field, problem.report_sign())?;
    outcome.written.push(path);

    let (t0, x0) = (cfg.verify.t0, cfg.verify.x0);
    let pde = solved.field.value(t0, &[x0])?;
    let field: Arc<dyn ValueField> = Arc::new(solved.field);
    let policy = feedback_map(&problem, field);
    let est = estimate_cost(&problem, &policy, t0, &[x0], &sim_config(cfg), exec)?;
    let mut checks = vec![Check::at_most(
        "pde_mc_agreement",
        (est.mean - pde).abs(),
        3.0 * est.std_error + 1e-2,
    )];
    match variant {
        ExitVariant::ExitTime { .. } => {
            checks.push(Check::at_most(
                "pde_vs_expected_exit_time",
                (pde - expected_exit_time(x0)).abs(),
                5e-3,
            ));
        }
        ExitVariant::Constant { value } => {
            checks.push(Check::at_most(
                "constant_exactness",
                (pde - value).abs(),
                1e-12,
            ));
        }
        ExitVariant::Controlled => {}
    }
    for c in &checks {
        outcome.gate(c);
    }
    let body = ExitBenchJson {
        problem: problem.name().to_string(),
        pde_value: pde,
        mc_estimate: (&est).into(),
        checks,
    };
    let path = out_dir.join("summary.json");
    write_json(&path, "benchmark", echo, body)?;
    outcome.written.push(path);
    Ok(())
}
