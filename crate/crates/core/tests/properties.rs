use std::sync::{Arc, Mutex};

use hjbv_core::benchmarks::{
    advertising_feedback, advertising_gradient, make_advertising_problem, make_exit_demo,
    AdvertisingParams, ExitDemo,
};
use hjbv_core::hamiltonian::{
    current_value, duality_gap, feedback_map, minimize, minimize_by_scan, tol_gap, unclamped_gap,
    Method,
};
use hjbv_core::problem::{canonicalize, probe_hypotheses, ProbeRegion};
use hjbv_core::sde::{simulate, ControlPolicy, SimConfig};
use hjbv_core::{ControlProblem, Executor, Sense, Sequential};
use proptest::prelude::*;

fn advertising() -> ControlProblem {
    make_advertising_problem(&AdvertisingParams::reference()).unwrap()
}

/// Runs items in reverse order and hands them back in index order.
struct Reversed;

impl Executor for Reversed {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
        for i in (0..n).rev() {
            let v = f(i);
            slots.lock().unwrap()[i] = Some(v);
        }
        slots
            .into_inner()
            .unwrap()
            .into_iter()
            .map(Option::unwrap)
            .collect()
    }
}

proptest! {
    #[test]
    fn advertising_gap_is_nonnegative(t in 0.0..1.0f64, x in -5.0..5.0f64, p in -6.0..6.0f64, z in 0.0..10.0f64) {
        let problem = advertising();
        let h = minimize(&problem, t, &[x], &[p]).unwrap();
        prop_assert_eq!(h.method, Method::ClosedForm);
        let g = unclamped_gap(&problem, t, &[x], &[p], &[z]).unwrap();
        prop_assert!(g >= -tol_gap(h.value));
        prop_assert!(duality_gap(&problem, t, &[x], &[p], &[z]).unwrap() >= 0.0);
        prop_assert!(h.gap_at(&problem, h.argmin()).unwrap().abs() <= tol_gap(h.value));
    }

    #[test]
    fn controlled_exit_gap_is_nonnegative(t in 0.0..1.0f64, x in 0.0..1.0f64, p in -4.0..4.0f64, z in -1.0..1.0f64) {
        let problem = make_exit_demo(ExitDemo::Controlled).unwrap();
        let h = minimize(&problem, t, &[x], &[p]).unwrap();
        prop_assert_eq!(h.method, Method::GridRefined);
        let g = unclamped_gap(&problem, t, &[x], &[p], &[z]).unwrap();
        prop_assert!(g >= -tol_gap(h.value));
        // exact minimizer: z* = clamp(−p, −1, 1)
        let zs = (-p).clamp(-1.0, 1.0);
        let exact = 1.0 + zs * p + 0.5 * zs * zs;
        prop_assert!((h.value - exact).abs() <= 1e-12 + tol_gap(exact));
    }

    #[test]
    fn scan_agrees_with_closed_form(x in 0.1..3.0f64, p in -4.0..2.0f64) {
        let problem = advertising();
        let closed = minimize(&problem, 0.0, &[x], &[p]).unwrap();
        let scanned = minimize_by_scan(&problem, 0.0, &[x], &[p]).unwrap();
        prop_assert!((closed.value - scanned.value).abs() <= 1e-9 * (1.0 + closed.value.abs()));
    }

    #[test]
    fn hamiltonian_is_lipschitz_in_p(p in -3.0..3.0f64, q in -3.0..3.0f64) {
        // |F₁| ≤ 1 on U = [−1, 1]
        let problem = make_exit_demo(ExitDemo::Controlled).unwrap();
        let a = minimize(&problem, 0.5, &[0.5], &[p]).unwrap().value;
        let b = minimize(&problem, 0.5, &[0.5], &[q]).unwrap().value;
        prop_assert!((a - b).abs() <= (p - q).abs() + 1e-9);
    }

    #[test]
    fn minimum_is_below_every_current_value(p in -3.0..3.0f64, z in -1.0..1.0f64) {
        let problem = make_exit_demo(ExitDemo::Controlled).unwrap();
        let h = minimize(&problem, 0.1, &[0.4], &[p]).unwrap();
        let cv = current_value(&problem, 0.1, &[0.4], &[p], &[z]).unwrap();
        prop_assert!(h.value <= cv + tol_gap(h.value));
    }

    #[test]
    fn advertising_feedback_is_the_argmin_of_the_gradient(t in 0.0..1.0f64, x in -4.0..4.0f64) {
        let params = AdvertisingParams::reference();
        let problem = advertising();
        let g = advertising_gradient(&params, t, x).unwrap();
        // canonical covector is −∂ₓv
        let h = minimize(&problem, t, &[x], &[-g]).unwrap();
        let z = advertising_feedback(&params, t, x).unwrap();
        prop_assert!(z >= 0.0);
        prop_assert!((h.argmin()[0] - z).abs() <= 1e-10);
    }
}

#[test]
fn feedback_map_reproduces_the_closed_form_feedback() {
    let params = AdvertisingParams::reference();
    let problem = advertising();
    let sol = hjbv_core::benchmarks::AdvertisingSolution::new(params).unwrap();
    let ControlPolicy::Feedback(g) = feedback_map(&problem, Arc::new(sol.canonical_field())) else {
        panic!("expected a feedback policy");
    };
    for i in 0..=40 {
        let x = -2.0 + 0.1 * i as f64;
        let mut z = [0.0];
        g(0.3, &[x], &mut z).unwrap();
        assert!((z[0] - sol.feedback(0.3, x)).abs() <= 1e-10);
    }
}

#[test]
fn canonicalization_flips_signs_once() {
    let problem = advertising();
    let c = canonicalize(&problem);
    assert_eq!(c.sense(), Sense::Minimize);
    assert_eq!(c.original_sense(), Sense::Maximize);
    assert_eq!(c.report_sign(), -1.0);
    let cc = canonicalize(&c);
    for x in [-1.5, 0.0, 2.0] {
        assert_eq!(problem.terminal_cost(&[x]), c.terminal_cost(&[x]));
        assert_eq!(c.terminal_cost(&[x]), cc.terminal_cost(&[x]));
        assert_eq!(
            problem.running_cost(0.0, &[x], &[0.7]),
            c.running_cost(0.0, &[x], &[0.7])
        );
    }
    let (mut a, mut b) = ([0.0], [0.0]);
    let ha = minimize(&problem, 0.0, &[1.0], &[-1.2]).unwrap();
    let hb = minimize(&cc, 0.0, &[1.0], &[-1.2]).unwrap();
    a[0] = ha.argmin()[0];
    b[0] = hb.argmin()[0];
    assert_eq!(ha.value, hb.value);
    assert_eq!(a, b);
}

#[test]
fn batches_do_not_depend_on_scheduling() {
    let problem = advertising();
    let cfg = SimConfig::new(1e-2, 64, 77);
    let policy = ControlPolicy::Constant(vec![0.3]);
    let a = simulate(&problem, &policy, 0.0, &[1.0], &cfg, &Sequential).unwrap();
    let b = simulate(&problem, &policy, 0.0, &[1.0], &cfg, &Reversed).unwrap();
    assert_eq!(a, b);
    let c = simulate(
        &problem,
        &policy,
        0.0,
        &[1.0],
        &SimConfig::new(1e-2, 64, 78),
        &Sequential,
    )
    .unwrap();
    assert_ne!(a, c);
}

#[test]
fn advertising_girsanov_term_is_unbounded_near_zero() {
    let problem = advertising();
    let near = |lo: f64| {
        probe_hypotheses(&problem, 2_000, 1, &ProbeRegion::new(vec![lo], vec![1.0]))
            .unwrap()
            .girsanov_sup_estimate
    };
    let (a, b, c) = (near(0.1), near(0.01), near(0.001));
    assert!(b > 5.0 * a && c > 3.0 * b, "{a} {b} {c}");
    let r = probe_hypotheses(&problem, 2_000, 1, &ProbeRegion::new(vec![-1.0], vec![1.0])).unwrap();
    assert!(r.ellipticity_lambda0_estimate < 1e-4);
    assert!((r.lipschitz_f0_estimate - 1.0).abs() < 1e-9);
}
