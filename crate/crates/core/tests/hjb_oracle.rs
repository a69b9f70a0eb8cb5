use hjbv_core::benchmarks::{
    expected_exit_time, make_advertising_problem, make_exit_demo, AdvertisingParams,
    AdvertisingSolution, ExitDemo,
};
use hjbv_core::hjb::{
    gradient_diagnostics, ladder_on_grids, refine_ladder, residual, solve_exit, solve_parabolic,
    Boundary, GradientProbes, Grid1D, SpaceTimeField,
};
use hjbv_core::sde::{ControlPolicy, ExitRule, SimConfig};
use hjbv_core::verify::estimate_cost;
use hjbv_core::{Sequential, ValueField};

fn advertising() -> (AdvertisingSolution, hjbv_core::ControlProblem) {
    let params = AdvertisingParams::reference();
    (
        AdvertisingSolution::new(params).unwrap(),
        make_advertising_problem(&params).unwrap(),
    )
}

fn max_error(nx: usize, nt: usize) -> f64 {
    let (sol, problem) = advertising();
    let exact = sol.canonical_field();
    let grid = Grid1D::new(0.1, 5.0, nx, nt).unwrap();
    let field = solve_parabolic(&problem, grid, Boundary::DirichletFrom(&exact)).unwrap();
    let mut err: f64 = 0.0;
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

#[test]
fn solver_matches_closed_form_at_first_order() {
    let coarse = max_error(401, 1000);
    let fine = max_error(801, 2000);
    assert!(coarse < 1e-2, "{coarse}");
    let ratio = coarse / fine;
    assert!((1.5..=2.5).contains(&ratio), "{ratio}");
}

#[test]
fn advertising_ladder_passes_and_halves() {
    let (sol, problem) = advertising();
    let exact = sol.canonical_field();
    let base = Grid1D::new(0.1, 5.0, 101, 100).unwrap();
    let ladder = refine_ladder(
        &problem,
        base,
        4,
        Boundary::DirichletFrom(&exact),
        &Sequential,
    )
    .unwrap();
    assert!(ladder.passed);
    for w in ladder.value_distances.windows(2) {
        let r = w[1] / w[0];
        assert!((0.4..0.6).contains(&r), "{r}");
    }
    assert_eq!(ladder.fields.len(), 4);
}

#[test]
fn unstable_level_breaks_the_ladder() {
    let (sol, problem) = advertising();
    let exact = sol.canonical_field();
    // a single time step at the finest level puts the explicit Hamiltonian far
    // outside its stable range
    let grids = [
        Grid1D::new(0.1, 5.0, 101, 100).unwrap(),
        Grid1D::new(0.1, 5.0, 201, 200).unwrap(),
        Grid1D::new(0.1, 5.0, 401, 400).unwrap(),
        Grid1D::new(0.1, 5.0, 801, 1).unwrap(),
    ];
    let ladder = ladder_on_grids(
        &problem,
        &grids,
        Boundary::DirichletFrom(&exact),
        &Sequential,
    )
    .unwrap();
    assert!(!ladder.passed);
    assert!(ladder.value_distances[2] > ladder.value_distances[1]);
}

#[test]
fn closed_form_residual_is_small() {
    let (sol, problem) = advertising();
    let grid = Grid1D::new(0.1, 5.0, 401, 1000).unwrap();
    let sampled = SpaceTimeField::sample(&sol.canonical_field(), grid, 1.0).unwrap();
    let r = residual(&sampled, &problem, 1).unwrap();
    assert!(
        r.sup_interior_residual < 5e-2,
        "{}",
        r.sup_interior_residual
    );
    assert_eq!(r.excluded_nodes, vec![0, 400]);
}

#[test]
fn kink_exponent_is_eta_minus_one() {
    let (sol, _) = advertising();
    let probes =
        GradientProbes::new(vec![0.0, 0.5, 0.9], vec![0.5, 1.0, 2.0]).with_kinks(vec![0.0], 1.0);
    let d = gradient_diagnostics(&sol.field(), 1.0, &probes).unwrap();
    assert!(
        (d.kinks[0].exponent + 0.5).abs() < 0.02,
        "{}",
        d.kinks[0].exponent
    );
    assert!(d.weighted_gradient_sup.is_finite());
}

#[test]
fn expected_exit_time_pde_and_monte_carlo_agree() {
    let problem = make_exit_demo(ExitDemo::ExpectedExitTime { horizon: 5.0 }).unwrap();
    let field = solve_exit(&problem, Grid1D::new(0.0, 1.0, 201, 5000).unwrap()).unwrap();
    let v = field.value(0.0, &[0.5]).unwrap();
    assert!((v - expected_exit_time(0.5)).abs() < 5e-3);
    let cfg = SimConfig::new(1e-3, 20_000, 7).with_exit_rule(ExitRule::BrownianBridge);
    let est = estimate_cost(
        &problem,
        &ControlPolicy::Constant(vec![0.0]),
        0.0,
        &[0.5],
        &cfg,
        &Sequential,
    )
    .unwrap();
    assert!(
        (est.mean - v).abs() <= 3.0 * est.std_error + 1e-2,
        "{est:?} vs {v}"
    );
}

#[test]
fn constant_exit_instance_is_exact() {
    let problem = make_exit_demo(ExitDemo::Constant(1.75)).unwrap();
    let field = solve_exit(&problem, Grid1D::new(0.0, 1.0, 51, 100).unwrap()).unwrap();
    assert!(field.values().iter().all(|v| (v - 1.75).abs() <= 1e-12));
}

#[test]
fn exit_demo_weighted_gradient_is_stable_under_refinement() {
    let problem = make_exit_demo(ExitDemo::ExpectedExitTime { horizon: 5.0 }).unwrap();
    let probes = GradientProbes::new(vec![0.0, 2.5, 4.9], vec![0.1, 0.5, 0.9]);
    let w = |nx, nt| {
        let f = solve_exit(&problem, Grid1D::new(0.0, 1.0, nx, nt).unwrap()).unwrap();
        gradient_diagnostics(&f, 5.0, &probes)
            .unwrap()
            .weighted_gradient_sup
    };
    let (a, b) = (w(101, 1000), w(201, 2000));
    assert!(a.is_finite() && ((a - b) / b).abs() < 0.1);
}

#[test]
fn comparison_principle_on_controlled_exit_demo() {
    let lo = make_exit_demo(ExitDemo::Controlled).unwrap();
    let grid = Grid1D::new(0.0, 1.0, 41, 200).unwrap();
    let base = solve_exit(&lo, grid).unwrap();
    // the same problem with φ, ψ raised by one
    let hi = hjbv_core::ControlProblem::builder(1, 1)
        .finite_horizon(1.0, |_| 1.0)
        .diffusion(|_, _, b| b[0] = 1.0)
        .controlled_drift(|_, _, z, out| out[0] = z[0])
        .running_cost(|_, _, z| 1.0 + 0.5 * z[0] * z[0])
        .control_set(hjbv_core::ControlSet::interval(-1.0, 1.0).unwrap())
        .exit_domain(hjbv_core::Domain::interval(0.0, 1.0).unwrap(), |_, _| 1.0)
        .build()
        .unwrap();
    let raised = solve_exit(&hi, grid).unwrap();
    for (a, b) in base.values().iter().zip(raised.values()) {
        assert!(b >= a);
    }
}
