//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always printed:
//! `cargo test -p hjbv --test acceptance`.

use std::path::Path;
use std::time::Instant;

use hjbv::commands::gap_property;
use hjbv::config::RunConfig;
use hjbv::{cmd_verify, Parallel};
use hjbv_core::benchmarks::{
    advertising_coefficients, expected_exit_time, make_advertising_problem, make_discounted_demo,
    make_exit_demo, AdvertisingParams, AdvertisingSolution, ConstantField, ExitDemo,
};
use hjbv_core::hjb::{
    gradient_diagnostics, ladder_on_grids, refine_ladder, solve_exit, solve_parabolic, Boundary,
    GradientProbes, Grid1D,
};
use hjbv_core::sde::{ControlPolicy, ExitRule, SimConfig};
use hjbv_core::verify::{discounted_verify, estimate_cost, IdentityOptions};
use hjbv_core::{Sequential, ValueField};
use serde_json::Value;

/// a(0), b(0) for η=0.5, α=1, β=0.5, T=1 from an independent high-precision
/// evaluation of the Bernoulli and linear coefficient equations.
const A0: f64 = 0.3003325459344889;
const B0: f64 = -4.08062433502646;
/// v(0, 2) of the same instance.
const V02: f64 = 0.8494687193651895;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn f(v: &Value, ptr: &str) -> f64 {
    v.pointer(ptr).and_then(Value::as_f64).unwrap_or(f64::NAN)
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let params = AdvertisingParams::reference();
    let (a, b) = advertising_coefficients(&params, 0.0).map_err(|e| e.to_string())?;
    let (ra, rb) = AdvertisingSolution::new(params)
        .unwrap()
        .rk4_coefficients(0.0);
    let rel = |x: f64, y: f64| ((x - y) / y).abs();
    let elapsed = start.elapsed().as_secs_f64();
    ensure(
        rel(a, A0) <= 1e-8 && rel(b, B0) <= 1e-8 && rel(ra, a) <= 1e-8 && rel(rb, b) <= 1e-8 && elapsed < 1.0,
        format!(
            "a(0)={a:.12} b(0)={b:.12}; oracle rel err {:.1e}/{:.1e}; rk4 rel dev {:.1e}/{:.1e}; {elapsed:.3}s",
            rel(a, A0),
            rel(b, B0),
            rel(ra, a),
            rel(rb, b)
        ),
    )
}

fn verify_run(text: &str, threads: usize, dir: &Path) -> Result<(Value, f64), String> {
    let cfg = RunConfig::parse(text).map_err(|e| e.to_string())?;
    let exec = Parallel::new(Some(threads)).unwrap();
    let start = Instant::now();
    cmd_verify(&cfg, dir, &exec).map_err(|e| e.to_string())?;
    Ok((
        read_json(&dir.join("report.json")),
        start.elapsed().as_secs_f64(),
    ))
}

/// Criterion 2 config: closed-form field, feedback policy, x0=2, t0=0, 1e5 paths, dt=1e-3.
const OPTIMAL: &str = "[problem]\nkind = advertising\n[mc]\npaths = 100000\ndt = 0.001\nseed = 1\n[verify]\npolicy = feedback\nfield = closed_form\nt0 = 0\nx0 = 2\n";

fn criterion_2(dir: &Path) -> Check {
    let (r, secs) = verify_run(OPTIMAL, 1, dir)?;
    let (gap, gap_se) = (
        f(&r, "/identity/gap_integral/mean"),
        f(&r, "/identity/gap_integral/std_error"),
    );
    let (j, j_se) = (
        f(&r, "/identity/cost/mean"),
        f(&r, "/identity/cost/std_error"),
    );
    let verdict = r
        .pointer("/certificate/verdict")
        .and_then(Value::as_str)
        .unwrap_or("");
    ensure(
        gap <= 3.0 * gap_se
            && (j - V02).abs() <= 3.0 * j_se + 1e-2
            && verdict == "optimal_within_tolerance"
            && secs < 120.0,
        format!("gap {gap:.3e} (SE {gap_se:.1e}); |J - v| = {:.3e} vs {:.3e}; {verdict}; {secs:.1}s single-threaded", (j - V02).abs(), 3.0 * j_se + 1e-2),
    )
}

fn criterion_3(dir: &Path) -> Check {
    let text = OPTIMAL.replace("policy = feedback", "policy = zero");
    let (r, _) = verify_run(&text, 1, dir)?;
    let defect = f(&r, "/identity/identity_defect");
    let tol = f(&r, "/identity/tolerance_used");
    let (gap, gap_se) = (
        f(&r, "/identity/gap_integral/mean"),
        f(&r, "/identity/gap_integral/std_error"),
    );
    let se = f(&r, "/identity/combined_std_error");
    let shortfall = f(&r, "/identity/v_at_start") - f(&r, "/identity/cost/mean");
    let margin = f(&r, "/certificate/optimality_margin");
    ensure(
        defect <= tol && gap > 10.0 * gap_se && (margin - shortfall).abs() <= 3.0 * se,
        format!(
            "defect {defect:.3e} <= tol {tol:.3e}; gap {gap:.4e} = {:.0} SE; |margin - (v - J)| = {:.3e} vs 3 SE {:.3e}",
            gap / gap_se,
            (margin - shortfall).abs(),
            3.0 * se
        ),
    )
}

fn advertising_error(nx: usize, nt: usize) -> f64 {
    let params = AdvertisingParams::reference();
    let exact = AdvertisingSolution::new(params).unwrap().canonical_field();
    let problem = make_advertising_problem(&params).unwrap();
    let grid = Grid1D::new(0.1, 5.0, nx, nt).unwrap();
    let field = solve_parabolic(&problem, grid, Boundary::DirichletFrom(&exact)).unwrap();
    let mut err = 0.0f64;
    for j in 0..=nt {
        let t = field.time(j);
        for i in 0..nx {
            let x = grid.x(i);
            if x >= 0.2 - 1e-12 {
                err = err.max((field.at(j, i) - exact.value(t, &[x]).unwrap()).abs());
            }
        }
    }
    err
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let coarse = advertising_error(401, 1000);
    let fine = advertising_error(801, 2000);
    let secs = start.elapsed().as_secs_f64();
    ensure(
        coarse <= 1e-2 && coarse / fine >= 1.5 && secs < 60.0,
        format!(
            "max error {coarse:.3e} (401x1000), {fine:.3e} (801x2000), ratio {:.2}; {secs:.1}s",
            coarse / fine
        ),
    )
}

fn criterion_5() -> Check {
    let problem = make_exit_demo(ExitDemo::ExpectedExitTime { horizon: 5.0 }).unwrap();
    let field = solve_exit(&problem, Grid1D::new(0.0, 1.0, 201, 5000).unwrap())
        .map_err(|e| e.to_string())?;
    let v = field.value(0.0, &[0.5]).unwrap();
    let cfg = SimConfig::new(1e-3, 20_000, 7).with_exit_rule(ExitRule::BrownianBridge);
    let est = estimate_cost(
        &problem,
        &ControlPolicy::Constant(vec![0.0]),
        0.0,
        &[0.5],
        &cfg,
        &Sequential,
    )
    .map_err(|e| e.to_string())?;
    let constant = make_exit_demo(ExitDemo::Constant(2.5)).unwrap();
    let cf = solve_exit(&constant, Grid1D::new(0.0, 1.0, 51, 100).unwrap())
        .map_err(|e| e.to_string())?;
    let const_err = cf
        .values()
        .iter()
        .fold(0.0f64, |m, x| m.max((x - 2.5).abs()));
    ensure(
        (v - expected_exit_time(0.5)).abs() <= 5e-3
            && (est.mean - v).abs() <= 3.0 * est.std_error + 1e-2
            && const_err <= 1e-12,
        format!(
            "PDE v(0,0.5) = {v:.6}; MC {:.5} ± {:.1e} (bridge exit); constant instance max error {const_err:.1e}",
            est.mean, est.std_error
        ),
    )
}

fn criterion_6() -> Check {
    let params = AdvertisingParams::reference();
    let sol = AdvertisingSolution::new(params).unwrap();
    // offsets span [window/100, window]: two decades
    let probes = GradientProbes::new(vec![0.0, 0.5, 0.9], vec![1.0]).with_kinks(vec![0.0], 1.0);
    let d =
        gradient_diagnostics(&sol.field(), params.horizon, &probes).map_err(|e| e.to_string())?;
    let worst = d
        .kinks
        .iter()
        .map(|k| (k.exponent - (params.eta - 1.0)).abs())
        .fold(0.0, f64::max);
    let exps: Vec<String> = d
        .kinks
        .iter()
        .map(|k| format!("{:.4}", k.exponent))
        .collect();
    ensure(
        worst <= 0.05,
        format!(
            "exponents [{}] vs eta - 1 = {}",
            exps.join(", "),
            params.eta - 1.0
        ),
    )
}

fn criterion_7() -> Check {
    let adv = make_advertising_problem(&AdvertisingParams::reference()).unwrap();
    let (w1, a1) = gap_property(&adv, 10_000, 11, (-5.0, 5.0), (-6.0, 6.0), (0.0, 10.0))
        .map_err(|e| e.to_string())?;
    let exit = make_exit_demo(ExitDemo::Controlled).unwrap();
    let (w2, a2) = gap_property(&exit, 10_000, 12, (0.0, 1.0), (-4.0, 4.0), (-1.0, 1.0))
        .map_err(|e| e.to_string())?;
    ensure(
        w1 >= -1e-9 && w2 >= -1e-9 && a1 <= 0.0 && a2 <= 0.0,
        format!(
            "min gap/(1+|H0|): advertising {w1:.2e}, controlled exit {w2:.2e}; argmin gap over tol: {a1:.1e}, {a2:.1e}"
        ),
    )
}

fn criterion_8() -> Check {
    let params = AdvertisingParams::reference();
    let problem = make_advertising_problem(&params).unwrap();
    let exact = AdvertisingSolution::new(params).unwrap().canonical_field();
    let base = Grid1D::new(0.1, 5.0, 101, 100).unwrap();
    let good = refine_ladder(
        &problem,
        base,
        4,
        Boundary::DirichletFrom(&exact),
        &Sequential,
    )
    .map_err(|e| e.to_string())?;
    // last level takes one time step, far beyond the accuracy of the scheme
    let grids = [
        Grid1D::new(0.1, 5.0, 101, 100).unwrap(),
        Grid1D::new(0.1, 5.0, 201, 200).unwrap(),
        Grid1D::new(0.1, 5.0, 401, 400).unwrap(),
        Grid1D::new(0.1, 5.0, 801, 1).unwrap(),
    ];
    let bad = ladder_on_grids(
        &problem,
        &grids,
        Boundary::DirichletFrom(&exact),
        &Sequential,
    )
    .map_err(|e| e.to_string())?;
    let fmt = |d: &[f64]| {
        d.iter()
            .map(|x| format!("{x:.2e}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    ensure(
        good.passed && !bad.passed,
        format!(
            "advertising [{}] last ratio {:.3} passed={}; unstable [{}] passed={}",
            fmt(&good.value_distances),
            good.last_ratio().unwrap_or(f64::NAN),
            good.passed,
            fmt(&bad.value_distances),
            bad.passed
        ),
    )
}

fn criterion_9(first: &Path, second: &Path) -> Check {
    verify_run(OPTIMAL, 4, second)?;
    let mut names: Vec<String> = std::fs::read_dir(first)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut compared = Vec::new();
    for name in &names {
        let a = std::fs::read(first.join(name)).unwrap();
        let b = std::fs::read(second.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if a != b {
            return Err(format!(
                "{name} differs between --threads 1 and --threads 4"
            ));
        }
        compared.push(name.as_str());
    }
    ensure(
        compared.iter().any(|n| n.ends_with(".csv"))
            && compared.iter().any(|n| n.ends_with(".json")),
        format!(
            "byte-identical under threads 1 vs 4: {}",
            compared.join(", ")
        ),
    )
}

fn criterion_10() -> Check {
    let (rate, cost) = (1.0, 0.7);
    let problem = make_discounted_demo(rate, cost).unwrap();
    let exact = cost / rate;
    let field = ConstantField {
        dim: 1,
        value: exact,
    };
    let policy = ControlPolicy::Constant(vec![0.3]);
    let opts = IdentityOptions::default();
    let run = |t1: f64| {
        discounted_verify(
            &problem,
            &field,
            &policy,
            &[0.0],
            t1,
            &SimConfig::new(1e-2, 2000, 4),
            &opts,
            &Sequential,
        )
    };
    let r = run(20.0).map_err(|e| e.to_string())?;
    let r2 = run(40.0).map_err(|e| e.to_string())?;
    let tail = r.tail.ok_or("no tail term reported")?;
    // a constant integrand has zero sample variance; allow for rounding in the quadrature sum
    let floor = 1e-12 * exact;
    let bound = (-rate * 20.0f64).exp() * exact;
    ensure(
        (r.cost.mean - exact).abs() <= 3.0 * r.cost.std_error + floor
            && tail.estimate.abs() <= tail.bound
            && tail.bound == bound
            && (r2.identity_defect - r.identity_defect).abs() <= tail.bound,
        format!(
            "|J - c/lambda| = {:.2e} (SE {:.1e}); tail {:.3e} <= bound {:.3e}; defect {:.2e} (T1=20), {:.2e} (T1=40)",
            (r.cost.mean - exact).abs(),
            r.cost.std_error,
            tail.estimate,
            tail.bound,
            r.identity_defect,
            r2.identity_defect
        ),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let c2 = tmp.path().join("c2");
    let c3 = tmp.path().join("c3");
    let c9 = tmp.path().join("c9");
    let criteria: Vec<Criterion> = vec![
        ("advertising value oracle", Box::new(criterion_1)),
        ("identity, optimal feedback", Box::new(|| criterion_2(&c2))),
        ("identity, zero control", Box::new(|| criterion_3(&c3))),
        ("HJB solver oracle", Box::new(criterion_4)),
        ("exit-time oracle", Box::new(criterion_5)),
        ("C1-not-C2 exponent", Box::new(criterion_6)),
        ("gap nonnegativity", Box::new(criterion_7)),
        ("ladder diagnostic", Box::new(criterion_8)),
        (
            "reproducibility across threads",
            Box::new(|| criterion_9(&c2, &c9)),
        ),
        ("discounted truncation", Box::new(criterion_10)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
