//! Runtime property suite behind `ftlab verify`.
//!
//! Each check can run against a deliberately broken component so the suite
//! itself can be shown to catch the defect.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{f_sat, xi_vector, zeta1, ControllerKind};
use crate::drem::DreKind;
use crate::error::Result;
use crate::mathx::{self, spow};
use crate::plant::{ElSystem, JointState, PhysicalParams, Plant, SystemRef, ThetaVector, TwoLinkArm};
use crate::regression::{Parameterization, RegressionFilter};
use crate::sim::{run_closed_loop, SimConfig};

/// Defect to inject before running the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Negates the Coriolis matrix.
    CoriolisSign,
    /// Returns the cofactor matrix instead of its transpose.
    WrongAdjugate,
}

impl std::str::FromStr for Mutation {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "coriolis-sign" => Ok(Self::CoriolisSign),
            "adjugate" => Ok(Self::WrongAdjugate),
            other => Err(crate::Error::invalid(format!("unknown mutation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: String) -> PropertyResult {
    PropertyResult { name, passed, detail }
}

/// Two-link arm with a negated Coriolis matrix.
struct FlippedCoriolis;

impl ElSystem for FlippedCoriolis {
    fn dof(&self) -> usize {
        TwoLinkArm.dof()
    }
    fn inertia_terms(&self) -> usize {
        TwoLinkArm.inertia_terms()
    }
    fn potential_terms(&self) -> usize {
        TwoLinkArm.potential_terms()
    }
    fn inertia_basis(&self, k: usize, q: &DVector<f64>) -> DMatrix<f64> {
        TwoLinkArm.inertia_basis(k, q)
    }
    fn inertia_basis_partial(&self, k: usize, i: usize, q: &DVector<f64>) -> DMatrix<f64> {
        TwoLinkArm.inertia_basis_partial(k, i, q)
    }
    fn potential_basis(&self, q: &DVector<f64>) -> DVector<f64> {
        TwoLinkArm.potential_basis(q)
    }
    fn psi(&self, q: &DVector<f64>) -> DMatrix<f64> {
        TwoLinkArm.psi(q)
    }
    fn coriolis_basis(&self, k: usize, q: &DVector<f64>, qd: &DVector<f64>) -> DMatrix<f64> {
        -TwoLinkArm.coriolis_basis(k, q, qd)
    }
}

fn wrong_adjugate(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(mathx::adjugate(a)?.transpose())
}

struct Hooks {
    plant: Plant,
    adjugate: fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
}

impl Hooks {
    fn new(m: Mutation) -> Self {
        let theta = PhysicalParams::default().theta();
        let system: SystemRef = match m {
            Mutation::CoriolisSign => Arc::new(FlippedCoriolis),
            _ => Arc::new(TwoLinkArm),
        };
        let adjugate = match m {
            Mutation::WrongAdjugate => wrong_adjugate,
            _ => mathx::adjugate,
        };
        Self { plant: Plant::new(system, theta).expect("bases match"), adjugate }
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-r..r))
}

fn check_cramer(h: &Hooks) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let m = rng.gen_range(1..=6);
        let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-2.0..2.0));
        let v = rand_vec(&mut rng, m, 2.0);
        let (Ok(y), Ok(adj)) = (mathx::cramer_products(&a, &v), (h.adjugate)(&a)) else {
            return result("mathx.cramer_equivalence", false, "evaluation error".into());
        };
        let rhs = adj * &v;
        worst = worst.max((y - &rhs).amax() / (1.0 + rhs.amax()));
    }
    result("mathx.cramer_equivalence", worst <= 1e-10, format!("max rel diff {worst:.2e} (tol 1e-10)"))
}

fn check_adjugate(h: &Hooks) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let m = rng.gen_range(1..=6);
        let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-2.0..2.0));
        let (Ok(adj), Ok(d)) = ((h.adjugate)(&a), mathx::det(&a)) else {
            return result("mathx.adjugate_identity", false, "evaluation error".into());
        };
        let err = (&a * adj - DMatrix::identity(m, m) * d).amax();
        worst = worst.max(err / (1.0 + d.abs()));
    }
    result("mathx.adjugate_identity", worst <= 1e-9, format!("max |A adj A - det I| {worst:.2e} (tol 1e-9)"))
}

fn check_skew(h: &Hooks) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = &h.plant;
    let step = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let q = rand_vec(&mut rng, 2, std::f64::consts::PI);
        let qd = rand_vec(&mut rng, 2, 3.0);
        let v = rand_vec(&mut rng, 2, 3.0);
        let m_dot = (p.inertia(&(&q + &qd * step)) - p.inertia(&(&q - &qd * step))) / (2.0 * step);
        let n = m_dot - p.coriolis(&q, &qd) * 2.0;
        worst = worst.max(v.dot(&(n * &v)).abs());
    }
    result("plant.skew_symmetry", worst <= 1e-5, format!("max |v^T (Mdot - 2C) v| {worst:.2e} (tol 1e-5)"))
}

fn check_gravity(h: &Hooks) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let ThetaVector { u, .. } = PhysicalParams::default().theta();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let q = rand_vec(&mut rng, 2, 2.0 * std::f64::consts::PI);
        let s12 = (q[0] + q[1]).sin();
        let closed = DVector::from_vec(vec![u[0] * s12 + u[1] * q[0].sin(), u[0] * s12]);
        worst = worst.max((h.plant.gravity(&q) - closed).amax());
    }
    result("plant.gravity_regressor", worst <= 1e-14, format!("max |g - Psi theta_U| {worst:.2e} (tol 1e-14)"))
}

/// `dE/dt = qd^T tau` along the dynamics, with `Mdot` from the analytic basis partials.
fn check_power(h: &Hooks) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let p = &h.plant;
    let sys = p.system.as_ref();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let q = rand_vec(&mut rng, 2, std::f64::consts::PI);
        let qd = rand_vec(&mut rng, 2, 3.0);
        let tau = rand_vec(&mut rng, 2, 5.0);
        let Ok(qdd) = p.forward_dynamics(&q, &qd, &tau, &DVector::zeros(2)) else {
            return result("plant.power_balance", false, "forward dynamics failed".into());
        };
        let mut m_dot = DMatrix::zeros(2, 2);
        for k in 0..sys.inertia_terms() {
            for i in 0..2 {
                m_dot += sys.inertia_basis_partial(k, i, &q) * (p.theta.m[k] * qd[i]);
            }
        }
        let e_dot = qd.dot(&(p.inertia(&q) * &qdd)) + 0.5 * qd.dot(&(m_dot * &qd)) + qd.dot(&p.gravity(&q));
        let power = qd.dot(&tau);
        worst = worst.max((e_dot - power).abs() / (1.0 + qd.norm() * tau.norm()));
    }
    result("plant.power_balance", worst <= 1e-9, format!("max rel |dE/dt - qd^T tau| {worst:.2e} (tol 1e-9)"))
}

/// Open-loop residual of both parameterizations under a smooth torque.
fn check_regression(h: &Hooks) -> PropertyResult {
    let p = &h.plant;
    let theta = p.theta.stacked();
    let dt = 1e-5;
    let mut worst = 0.0f64;
    for kind in [Parameterization::PowerBalance, Parameterization::ForceBalance] {
        let mut q = DVector::from_vec(vec![0.3, -0.4]);
        let mut qd = DVector::from_vec(vec![0.5, 0.0]);
        let state = JointState { q: q.clone(), qd: qd.clone() };
        let Ok(mut filt) = RegressionFilter::new(kind, p.system.clone(), 1.0, 1.0, &state) else {
            return result("regression.residual", false, "filter construction failed".into());
        };
        for k in 0..50_000 {
            let t = k as f64 * dt;
            let tau = p.gravity(&q) + DVector::from_vec(vec![(2.0 * t).sin(), 0.3 * (3.0 * t).cos()]);
            let (Ok(pair), Ok(qdd)) =
                (filt.step(&q, &qd, &tau, dt), p.forward_dynamics(&q, &qd, &tau, &DVector::zeros(2)))
            else {
                return result("regression.residual", false, "step failed".into());
            };
            worst = worst.max(pair.residual(&theta).norm() / (1.0 + pair.y.norm()));
            q += &qd * dt;
            qd += qdd * dt;
        }
    }
    result("regression.residual", worst <= 1e-3, format!("max rel |y - Omega theta| {worst:.2e} (tol 1e-3, dt 1e-5)"))
}

fn check_identity() -> PropertyResult {
    let mut worst = 0.0f64;
    for (kind, dre) in [(ControllerKind::C1, DreKind::LeastSquares), (ControllerKind::C2, DreKind::Kreisselmeier)] {
        let cfg = SimConfig { dre: Some(dre), ..SimConfig::for_controller(kind) };
        match run_closed_loop(&cfg) {
            Ok(tr) => worst = tr.records.iter().map(|r| r.identity_error).fold(worst, f64::max),
            Err(e) => return result("drem.scalar_identity", false, e.to_string()),
        }
    }
    result("drem.scalar_identity", worst <= 1e-4, format!("max |Y - Delta theta| rel {worst:.2e} (tol 1e-4)"))
}

fn check_zeta1() -> PropertyResult {
    let (b, d) = (0.5, SimConfig::default().adapt.d);
    let n = 1_000_000;
    let mut ok = true;
    let mut odd = true;
    for k in 0..=n {
        let delta = -1e6 + 2e6 * k as f64 / n as f64;
        let z = zeta1(delta, b, d);
        ok &= (0.0..1.0).contains(&z);
        odd &= f_sat(-delta, b, d) == -f_sat(delta, b, d);
    }
    result("control.zeta1_range", ok && odd, format!("range ok: {ok}, f odd: {odd} ({} points)", n + 1))
}

fn check_xi() -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let theta_u = PhysicalParams::default().theta().u;
    let c = 0.5;
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let delta = rng.gen_range(-5.0..5.0);
        let hat = rand_vec(&mut rng, 2, 10.0);
        let Ok(xi) = xi_vector(delta, &hat, &(&theta_u * delta), c) else {
            return result("control.xi_identity", false, "evaluation error".into());
        };
        let tilde = &hat - &theta_u;
        for k in 0..2 {
            worst = worst.max((xi[k] - spow(delta, c) * spow(tilde[k], c)).abs());
        }
    }
    result("control.xi_identity", worst <= 1e-12, format!("max deviation {worst:.2e} (tol 1e-12)"))
}

/// Fraction of steps on which `V1` does not grow beyond Euler slack.
pub fn v1_monotone_fraction(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 1.0;
    }
    let good = values.windows(2).filter(|w| w[1] - w[0] <= 1e-6 * (1.0 + w[0])).count();
    good as f64 / (values.len() - 1) as f64
}

fn check_v1() -> PropertyResult {
    match run_closed_loop(&SimConfig::default()) {
        Ok(tr) => {
            let v: Vec<f64> = tr.records.iter().map(|r| r.v1).collect();
            let frac = v1_monotone_fraction(&v);
            result(
                "sim.v1_monotone",
                frac >= 0.999,
                format!("nonincreasing on {:.4}% of steps (need 99.9%)", 100.0 * frac),
            )
        }
        Err(e) => result("sim.v1_monotone", false, e.to_string()),
    }
}

/// Runs the whole suite with `mutation` injected.
pub fn run_all(mutation: Mutation) -> Vec<PropertyResult> {
    let h = Hooks::new(mutation);
    vec![
        check_cramer(&h),
        check_adjugate(&h),
        check_skew(&h),
        check_gravity(&h),
        check_power(&h),
        check_regression(&h),
        check_identity(),
        check_zeta1(),
        check_xi(),
        check_v1(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn passed(m: Mutation, name: &str) -> bool {
        let h = Hooks::new(m);
        let r = match name {
            "cramer" => check_cramer(&h),
            "skew" => check_skew(&h),
            "power" => check_power(&h),
            "adjugate" => check_adjugate(&h),
            _ => unreachable!(),
        };
        r.passed
    }

    #[test]
    fn clean_hooks_pass() {
        for name in ["cramer", "skew", "power", "adjugate"] {
            assert!(passed(Mutation::None, name), "{name}");
        }
    }

    #[test]
    fn coriolis_flip_is_caught() {
        assert!(!passed(Mutation::CoriolisSign, "skew"));
        assert!(!passed(Mutation::CoriolisSign, "power"));
        assert!(passed(Mutation::CoriolisSign, "cramer"));
    }

    #[test]
    fn wrong_adjugate_is_caught() {
        assert!(!passed(Mutation::WrongAdjugate, "cramer"));
        assert!(!passed(Mutation::WrongAdjugate, "adjugate"));
        assert!(passed(Mutation::WrongAdjugate, "skew"));
    }

    #[test]
    fn monotone_fraction() {
        assert_eq!(v1_monotone_fraction(&[3.0, 2.0, 2.0, 1.0]), 1.0);
        assert_eq!(v1_monotone_fraction(&[1.0, 2.0, 1.0]), 0.5);
    }
}
