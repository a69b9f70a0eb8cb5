//! Closed-form reference problems.
//!
//! The advertising problem maximizes
//!
//! ```text
//! E[ h(y(T)) − ∫ z^{1+η} ds ],   dy = (−αy + z) ds + βy dW,   z ≥ 0
//! ```
//!
//! with `h(x) = |x|^{1+η} sgn x`. Its value is `a(t) x^{1+η}` for `x > 0`,
//! where `w = a^{−1/η}` solves the linear equation `w' = (k/η) w + 1`,
//! `w(T) = 1`, and `k = ½β²η(1+η) − α(1+η)`. The value is C¹ but not C² at
//! `x = 0`.
//!
//! For `x < 0` the coefficient returned as `b` is `−e^{k(t−T)}`, the solution of
//! `b' = k b`. That equation drops the Hamiltonian, which is active on this
//! branch because `∂ₓv > 0` there, so value, gradient and feedback for `x < 0`
//! use `v = −c(t)|x|^{1+η}` with `c' = −k c + η c^{1+1/η}`, `c(T) = 1`, which
//! does solve the HJB equation. Both agree at `t = T`.
//!
//! The exit demos are Brownian motion on `(0, 1)`.

use alloc::format;
use alloc::vec;

use crate::error::{Error, Result};
use crate::field::{Provenance, ValueField};
use crate::problem::{ControlProblem, ControlSet, Domain, Sense};
#[allow(unused_imports)] // shadowed by inherent methods when std is in the build
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvertisingParams {
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub horizon: f64,
}

impl AdvertisingParams {
    pub fn new(eta: f64, alpha: f64, beta: f64, horizon: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidParams(format!(
                "eta must lie in (0, 1), got {eta}"
            )));
        }
        if !(alpha > 0.0 && beta > 0.0 && horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParams(
                "alpha, beta and T must be positive".into(),
            ));
        }
        let lhs = 0.5 * beta * beta * eta;
        if !(lhs < alpha) {
            return Err(Error::InvalidParams(format!(
                "global existence of a(t) needs beta^2 eta / 2 < alpha, but {lhs} >= {alpha}"
            )));
        }
        let p = Self {
            eta,
            alpha,
            beta,
            horizon,
        };
        if !(p.bernoulli_w(0.0) > 0.0) {
            return Err(Error::InvalidParams(
                "a(t) blows up before t = 0 for these parameters".into(),
            ));
        }
        Ok(p)
    }

    /// Default instance: η = 0.5, α = 1, β = 0.5, T = 1.
    pub fn reference() -> Self {
        Self {
            eta: 0.5,
            alpha: 1.0,
            beta: 0.5,
            horizon: 1.0,
        }
    }

    /// k = ½β²η(1+η) − α(1+η).
    pub fn k(&self) -> f64 {
        (1.0 + self.eta) * (0.5 * self.beta * self.beta * self.eta - self.alpha)
    }

    fn bernoulli_w(&self, t: f64) -> f64 {
        let (k, eta) = (self.k(), self.eta);
        let e = ((k / eta) * (t - self.horizon)).exp();
        -eta / k + (1.0 + eta / k) * e
    }

    fn negative_w(&self, t: f64) -> f64 {
        let (k, eta) = (self.k(), self.eta);
        let e = ((k / eta) * (t - self.horizon)).exp();
        eta / k + (1.0 - eta / k) * e
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvertisingSolution {
    params: AdvertisingParams,
}

impl AdvertisingSolution {
    pub fn new(params: AdvertisingParams) -> Result<Self> {
        let p = AdvertisingParams::new(params.eta, params.alpha, params.beta, params.horizon)?;
        Ok(Self { params: p })
    }

    pub fn params(&self) -> &AdvertisingParams {
        &self.params
    }

    pub fn a(&self, t: f64) -> f64 {
        if t == self.params.horizon {
            return 1.0;
        }
        self.params.bernoulli_w(t).powf(-self.params.eta)
    }

    pub fn b(&self, t: f64) -> f64 {
        -(self.params.k() * (t - self.params.horizon)).exp()
    }

    /// Coefficient of the negative branch, `v = −c|x|^{1+η}` for `x < 0`.
    pub fn c(&self, t: f64) -> f64 {
        if t == self.params.horizon {
            return 1.0;
        }
        self.params.negative_w(t).powf(-self.params.eta)
    }

    /// a'(t) from the Riccati-type equation.
    pub fn a_derivative(&self, t: f64) -> f64 {
        let (k, eta) = (self.params.k(), self.params.eta);
        let a = self.a(t);
        -k * a - eta * a.powf(1.0 + 1.0 / eta)
    }

    pub fn b_derivative(&self, t: f64) -> f64 {
        self.params.k() * self.b(t)
    }

    pub fn c_derivative(&self, t: f64) -> f64 {
        let (k, eta) = (self.params.k(), self.params.eta);
        let c = self.c(t);
        -k * c + eta * c.powf(1.0 + 1.0 / eta)
    }

    /// (a, b) at `t` by classical RK4 marched backward from T with step T·1e-4.
    pub fn rk4_coefficients(&self, t: f64) -> (f64, f64) {
        let (k, eta, horizon) = (self.params.k(), self.params.eta, self.params.horizon);
        let fa = |a: f64| -k * a - eta * a.powf(1.0 + 1.0 / eta);
        let fb = |b: f64| k * b;
        let span = horizon - t;
        let steps = ((span / (horizon * 1e-4)).ceil() as usize).max(1);
        let h = -span / steps as f64;
        let (mut a, mut b) = (1.0, -1.0);
        for _ in 0..steps {
            a = rk4_step(a, h, fa);
            b = rk4_step(b, h, fb);
        }
        (a, b)
    }

    /// Value in the original (maximization) sign.
    pub fn value(&self, t: f64, x: f64) -> f64 {
        let q = 1.0 + self.params.eta;
        if x > 0.0 {
            self.a(t) * x.powf(q)
        } else if x < 0.0 {
            -self.c(t) * (-x).powf(q)
        } else {
            0.0
        }
    }

    pub fn gradient(&self, t: f64, x: f64) -> f64 {
        let eta = self.params.eta;
        if x > 0.0 {
            (1.0 + eta) * self.a(t) * x.powf(eta)
        } else if x < 0.0 {
            (1.0 + eta) * self.c(t) * (-x).powf(eta)
        } else {
            0.0
        }
    }

    /// ∂ₓₓv, unbounded as x → 0.
    pub fn second_derivative(&self, t: f64, x: f64) -> f64 {
        let eta = self.params.eta;
        let s = (1.0 + eta) * eta;
        if x > 0.0 {
            s * self.a(t) * x.powf(eta - 1.0)
        } else if x < 0.0 {
            -s * self.c(t) * (-x).powf(eta - 1.0)
        } else {
            f64::INFINITY
        }
    }

    pub fn time_derivative(&self, t: f64, x: f64) -> f64 {
        let q = 1.0 + self.params.eta;
        if x > 0.0 {
            self.a_derivative(t) * x.powf(q)
        } else if x < 0.0 {
            -self.c_derivative(t) * (-x).powf(q)
        } else {
            0.0
        }
    }

    pub fn feedback(&self, t: f64, x: f64) -> f64 {
        let inv = 1.0 / self.params.eta;
        if x > 0.0 {
            self.a(t).powf(inv) * x
        } else if x < 0.0 {
            self.c(t).powf(inv) * (-x)
        } else {
            0.0
        }
    }

    /// Sup-form Hamiltonian `sup_{z ≥ 0} (z p − z^{1+η})` and its maximizer.
    pub fn hamiltonian(&self, p: f64) -> (f64, f64) {
        sup_hamiltonian(self.params.eta, p)
    }

    /// HJB residual from analytic derivatives, original sign.
    pub fn hjb_residual(&self, t: f64, x: f64) -> f64 {
        let AdvertisingParams { alpha, beta, .. } = self.params;
        let vx = self.gradient(t, x);
        self.time_derivative(t, x) + 0.5 * beta * beta * x * x * self.second_derivative(t, x)
            - alpha * x * vx
            + self.hamiltonian(vx).0
    }

    /// The value as a field in the original sign.
    pub fn field(&self) -> AdvertisingField {
        AdvertisingField {
            solution: *self,
            sign: 1.0,
        }
    }

    /// The value in the minimization convention (negated).
    pub fn canonical_field(&self) -> AdvertisingField {
        AdvertisingField {
            solution: *self,
            sign: -1.0,
        }
    }
}

fn rk4_step(y: f64, h: f64, f: impl Fn(f64) -> f64) -> f64 {
    let k1 = f(y);
    let k2 = f(y + 0.5 * h * k1);
    let k3 = f(y + 0.5 * h * k2);
    let k4 = f(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn sup_hamiltonian(eta: f64, p: f64) -> (f64, f64) {
    if !(p > 0.0) {
        return (0.0, 0.0);
    }
    let r = p / (1.0 + eta);
    (eta * r.powf(1.0 + 1.0 / eta), r.powf(1.0 / eta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvertisingField {
    solution: AdvertisingSolution,
    sign: f64,
}

impl ValueField for AdvertisingField {
    fn state_dim(&self) -> usize {
        1
    }

    fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.sign * self.solution.value(t, x[0]))
    }

    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = self.sign * self.solution.gradient(t, x[0]);
        Ok(())
    }

    fn provenance(&self) -> Provenance {
        Provenance::ClosedForm
    }
}

/// (a(t), b(t)).
pub fn advertising_coefficients(params: &AdvertisingParams, t: f64) -> Result<(f64, f64)> {
    let s = AdvertisingSolution::new(*params)?;
    check_time(params, t)?;
    Ok((s.a(t), s.b(t)))
}

pub fn advertising_value(params: &AdvertisingParams, t: f64, x: f64) -> Result<f64> {
    check_time(params, t)?;
    Ok(AdvertisingSolution::new(*params)?.value(t, x))
}

pub fn advertising_gradient(params: &AdvertisingParams, t: f64, x: f64) -> Result<f64> {
    check_time(params, t)?;
    Ok(AdvertisingSolution::new(*params)?.gradient(t, x))
}

pub fn advertising_feedback(params: &AdvertisingParams, t: f64, x: f64) -> Result<f64> {
    check_time(params, t)?;
    Ok(AdvertisingSolution::new(*params)?.feedback(t, x))
}

fn check_time(params: &AdvertisingParams, t: f64) -> Result<()> {
    if !(t >= 0.0 && t <= params.horizon) {
        return Err(Error::InvalidParams(format!(
            "t = {t} outside [0, {}]",
            params.horizon
        )));
    }
    Ok(())
}

/// Advertising problem in its original (maximization) sense.
pub fn make_advertising_problem(params: &AdvertisingParams) -> Result<ControlProblem> {
    let p = AdvertisingParams::new(params.eta, params.alpha, params.beta, params.horizon)?;
    let AdvertisingParams {
        eta,
        alpha,
        beta,
        horizon,
    } = p;
    let q = 1.0 + eta;
    ControlProblem::builder(1, 1)
        .name("advertising")
        .finite_horizon(horizon, move |x| x[0].abs().powf(q) * x[0].signum())
        .drift(move |_, x, out| out[0] = -alpha * x[0])
        .controlled_drift(|_, _, z, out| out[0] = z[0])
        .diffusion(move |_, x, b| b[0] = beta * x[0])
        .running_cost(move |_, _, z| -z[0].max(0.0).powf(q))
        .control_set(ControlSet::interval(0.0, f64::INFINITY)?)
        .sense(Sense::Maximize)
        .closed_form_hamiltonian(move |_, _, p, z| {
            let (h, arg) = sup_hamiltonian(eta, p[0]);
            z[0] = arg;
            h
        })
        .kink(0.0)
        .build()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExitDemo {
    /// l ≡ 0, ψ ≡ φ ≡ c: the value is c.
    Constant(f64),
    /// l ≡ 1, ψ ≡ φ ≡ 0 over the given horizon: the value approaches the
    /// expected exit time x(1 − x).
    ExpectedExitTime { horizon: f64 },
    /// dy = z ds + dW with z ∈ [−1, 1] and l = 1 + z²/2 (a nontrivial
    /// Hamiltonian on the exit geometry).
    Controlled,
}

/// Brownian exit problems on O = (0, 1).
pub fn make_exit_demo(kind: ExitDemo) -> Result<ControlProblem> {
    let domain = Domain::interval(0.0, 1.0)?;
    let base = ControlProblem::builder(1, 1).diffusion(|_, _, b| b[0] = 1.0);
    match kind {
        ExitDemo::Constant(c) => base
            .name("exit_constant")
            .finite_horizon(1.0, move |_| c)
            .control_set(ControlSet::finite(vec![vec![0.0]])?)
            .exit_domain(domain, move |_, _| c)
            .build(),
        ExitDemo::ExpectedExitTime { horizon } => base
            .name("exit_time")
            .finite_horizon(horizon, |_| 0.0)
            .running_cost(|_, _, _| 1.0)
            .control_set(ControlSet::finite(vec![vec![0.0]])?)
            .exit_domain(domain, |_, _| 0.0)
            .build(),
        ExitDemo::Controlled => base
            .name("exit_controlled")
            .finite_horizon(1.0, |_| 0.0)
            .controlled_drift(|_, _, z, out| out[0] = z[0])
            .running_cost(|_, _, z| 1.0 + 0.5 * z[0] * z[0])
            .control_set(ControlSet::interval(-1.0, 1.0)?)
            .exit_domain(domain, |_, _| 0.0)
            .build(),
    }
}

/// Discounted problem with constant running cost and no control effect:
/// `dy = dW`, `l₁ ≡ cost`, value `cost / rate`.
pub fn make_discounted_demo(rate: f64, cost: f64) -> Result<ControlProblem> {
    ControlProblem::builder(1, 1)
        .name("discounted_constant")
        .discounted(rate)
        .diffusion(|_, _, b| b[0] = 1.0)
        .running_cost(move |_, _, _| cost)
        .control_set(ControlSet::interval(-1.0, 1.0)?)
        .build()
}

/// A field equal to a constant everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantField {
    pub dim: usize,
    pub value: f64,
}

impl ValueField for ConstantField {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _: f64, _: &[f64]) -> Result<f64> {
        Ok(self.value)
    }

    fn gradient(&self, _: f64, _: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }

    fn provenance(&self) -> Provenance {
        Provenance::ClosedForm
    }
}

/// Exact value of the expected-exit-time demo as T → ∞.
pub fn expected_exit_time(x: f64) -> f64 {
    x * (1.0 - x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> AdvertisingSolution {
        AdvertisingSolution::new(AdvertisingParams::reference()).unwrap()
    }

    #[test]
    fn reference_coefficients() {
        let s = reference();
        assert!((s.params().k() + 1.40625).abs() < 1e-15);
        let a0 = 0.3003325459344889;
        let b0 = -4.08062433502646;
        assert!(((s.a(0.0) - a0) / a0).abs() < 1e-12);
        assert!(((s.b(0.0) - b0) / b0).abs() < 1e-12);
        assert!(((s.c(0.0) - 0.2121594903364528) / 0.2121594903364528).abs() < 1e-12);
        assert_eq!((s.a(1.0), s.b(1.0), s.c(1.0)), (1.0, -1.0, 1.0));
    }

    #[test]
    fn rk4_agrees_with_closed_forms() {
        let s = reference();
        for t in [0.0, 0.3, 0.77] {
            let (a, b) = s.rk4_coefficients(t);
            assert!(((a - s.a(t)) / s.a(t)).abs() < 1e-8);
            assert!(((b - s.b(t)) / s.b(t)).abs() < 1e-8);
        }
    }

    #[test]
    fn ode_residuals_vanish() {
        let s = reference();
        for i in 0..1000 {
            let t = i as f64 / 1000.0;
            let h = 1e-5;
            let t0 = if t < h { t } else { t - h };
            let t1 = t0 + 2.0 * h;
            let fd = (s.a(t1) - s.a(t0)) / (2.0 * h);
            assert!((fd - s.a_derivative(t0 + h)).abs() < 1e-8);
            let fdb = (s.b(t1) - s.b(t0)) / (2.0 * h);
            assert!((fdb - s.b_derivative(t0 + h)).abs() < 1e-8);
        }
    }

    #[test]
    fn value_solves_the_hjb_equation_off_the_kink() {
        let s = reference();
        for i in 0..200 {
            let t = (i % 10) as f64 / 10.0;
            let x = -3.0 + 6.0 * i as f64 / 199.0;
            if x.abs() <= 0.05 {
                continue;
            }
            assert!(s.hjb_residual(t, x).abs() < 1e-8, "t={t} x={x}");
        }
    }

    #[test]
    fn reference_value_and_feedback() {
        let p = AdvertisingParams::reference();
        let v = advertising_value(&p, 0.0, 2.0).unwrap();
        assert!((v - 0.8494687193651895).abs() < 1e-12);
        let z = advertising_feedback(&p, 0.0, 2.0).unwrap();
        assert!((z - 0.18039927629498376).abs() < 1e-12);
        assert_eq!(advertising_value(&p, 0.3, 0.0).unwrap(), 0.0);
        assert_eq!(advertising_gradient(&p, 0.3, 0.0).unwrap(), 0.0);
        assert_eq!(advertising_feedback(&p, 0.3, 0.0).unwrap(), 0.0);
        assert_eq!(advertising_value(&p, 1.0, -1.0).unwrap(), -1.0);
        assert_eq!(advertising_feedback(&p, 1.0, -1.0).unwrap(), 1.0);
        assert!(advertising_value(&p, 1.5, 1.0).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(AdvertisingParams::new(0.5, 0.01, 2.0, 1.0).is_err());
        assert!(AdvertisingParams::new(1.5, 1.0, 0.5, 1.0).is_err());
        assert!(AdvertisingParams::new(0.5, -1.0, 0.5, 1.0).is_err());
        assert!(AdvertisingParams::new(0.5, 1.0, 0.5, 1.0).is_ok());
    }

    #[test]
    fn feedback_is_the_hamiltonian_argmax() {
        let s = reference();
        for &(t, x) in &[(0.0, 2.0), (0.5, 0.1), (0.9, -1.3), (0.2, -0.01)] {
            let (_, z) = s.hamiltonian(s.gradient(t, x));
            assert!((z - s.feedback(t, x)).abs() < 1e-12);
        }
    }
}
