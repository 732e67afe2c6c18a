//! Online generation of the linear regression `y = Omega theta` from measured
//! joint signals and applied torque.
//!
//! Two parameterizations are available:
//!
//! * power balance: scalar `y` built from the supplied power `qd^T tau`, with
//!   `Omega^T = z + lambda0 omega(q, qd)` where `omega` is the energy regressor;
//! * force balance: vector `y` built from `tau` itself, with
//!   `Omega = [z + lambda0 phi3, Omega_D2]`.
//!
//! Both filter banks are stable first order systems discretized with
//! explicit Euler. Filter states are initialized so that `Omega(0) = 0` and
//! `y(0) = 0`, which makes the regression identity hold from the first sample.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::plant::{JointState, SystemRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parameterization {
    PowerBalance,
    ForceBalance,
}

impl FromStr for Parameterization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power_balance" => Ok(Self::PowerBalance),
            "force_balance" => Ok(Self::ForceBalance),
            other => Err(Error::invalid(format!("unknown parameterization `{other}`"))),
        }
    }
}

impl fmt::Display for Parameterization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PowerBalance => "power_balance",
            Self::ForceBalance => "force_balance",
        })
    }
}

/// One sample of the regression: `y` has one row for power balance and `n`
/// rows for force balance; `omega` has matching rows and `l` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionPair {
    pub y: DVector<f64>,
    pub omega: DMatrix<f64>,
}

impl RegressionPair {
    /// `y - Omega theta`.
    pub fn residual(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.omega * theta
    }
}

fn check_gains(lambda0: f64, lambda1: f64) -> Result<()> {
    if !(lambda0 > 0.0) || !(lambda1 > 0.0) {
        return Err(Error::invalid(format!(
            "regression filter gains must be positive (lambda0 = {lambda0}, lambda1 = {lambda1})"
        )));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("step size must be positive, got {dt}")));
    }
    Ok(())
}

/// Power-balance filter bank.
#[derive(Clone)]
pub struct PowerBalanceState {
    system: SystemRef,
    y: f64,
    z: DVector<f64>,
    lambda0: f64,
    lambda1: f64,
}

impl PowerBalanceState {
    pub fn new(system: SystemRef, lambda0: f64, lambda1: f64, state0: &JointState) -> Result<Self> {
        check_gains(lambda0, lambda1)?;
        let z = -system.omega(&state0.q, &state0.qd) * lambda0;
        Ok(Self { system, y: 0.0, z, lambda0, lambda1 })
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    /// Current `(y, Omega)` given the measurement at the current instant.
    pub fn output(&self, q: &DVector<f64>, qd: &DVector<f64>) -> RegressionPair {
        let row = &self.z + self.system.omega(q, qd) * self.lambda0;
        RegressionPair {
            y: DVector::from_element(1, self.y),
            omega: DMatrix::from_row_slice(1, row.len(), row.as_slice()),
        }
    }

    /// Returns the pair at the current instant, then advances the filters
    /// by one Euler step driven by `(q, qd, tau)`.
    pub fn step(&mut self, q: &DVector<f64>, qd: &DVector<f64>, tau: &DVector<f64>, dt: f64) -> Result<RegressionPair> {
        check_dt(dt)?;
        let omega_vec = self.system.omega(q, qd);
        let row = &self.z + &omega_vec * self.lambda0;
        let pair = RegressionPair {
            y: DVector::from_element(1, self.y),
            omega: DMatrix::from_row_slice(1, row.len(), row.as_slice()),
        };
        let power = qd.dot(tau);
        self.y += dt * (-self.lambda1 * self.y + self.lambda0 * power);
        self.z -= (&self.z + omega_vec * self.lambda0) * (dt * self.lambda1);
        Ok(pair)
    }
}

/// Force-balance filter bank.
#[derive(Clone)]
pub struct ForceBalanceState {
    system: SystemRef,
    y: DVector<f64>,
    z: DMatrix<f64>,
    omega_d2: DMatrix<f64>,
    lambda0: f64,
    lambda1: f64,
}

impl ForceBalanceState {
    pub fn new(system: SystemRef, lambda0: f64, lambda1: f64, state0: &JointState) -> Result<Self> {
        check_gains(lambda0, lambda1)?;
        let n = system.dof();
        let j = system.potential_terms();
        let z = -phi3(&system, &state0.q, &state0.qd) * lambda0;
        Ok(Self { system, y: DVector::zeros(n), z, omega_d2: DMatrix::zeros(n, j), lambda0, lambda1 })
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn output(&self, q: &DVector<f64>, qd: &DVector<f64>) -> RegressionPair {
        let d1 = &self.z + phi3(&self.system, q, qd) * self.lambda0;
        RegressionPair { y: self.y.clone(), omega: hcat(&d1, &self.omega_d2) }
    }

    pub fn step(&mut self, q: &DVector<f64>, qd: &DVector<f64>, tau: &DVector<f64>, dt: f64) -> Result<RegressionPair> {
        check_dt(dt)?;
        let pair = self.output(q, qd);
        let p1 = phi1(&self.system, q, qd, self.lambda0, self.lambda1);
        let p2 = self.system.psi(q);
        self.y += (tau * self.lambda0 - &self.y * self.lambda1) * dt;
        self.z -= (&self.z + p1) * (dt * self.lambda1);
        self.omega_d2 += (p2 * self.lambda0 - &self.omega_d2 * self.lambda1) * dt;
        Ok(pair)
    }
}

/// `phi1_k = lambda0 M_k qd + lambda0 / (2 lambda1) grad_q{qd^T M_k qd}`.
pub fn phi1(system: &SystemRef, q: &DVector<f64>, qd: &DVector<f64>, lambda0: f64, lambda1: f64) -> DMatrix<f64> {
    let n = system.dof();
    let mut out = DMatrix::zeros(n, system.inertia_terms());
    for k in 0..system.inertia_terms() {
        let col = system.inertia_basis(k, q) * qd * lambda0
            + system.quadratic_form_gradient(k, q, qd) * (lambda0 / (2.0 * lambda1));
        out.set_column(k, &col);
    }
    out
}

/// `phi3 = [M_1 qd .. M_i qd]`.
pub fn phi3(system: &SystemRef, q: &DVector<f64>, qd: &DVector<f64>) -> DMatrix<f64> {
    let n = system.dof();
    let mut out = DMatrix::zeros(n, system.inertia_terms());
    for k in 0..system.inertia_terms() {
        out.set_column(k, &(system.inertia_basis(k, q) * qd));
    }
    out
}

fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Either filter bank behind one interface.
#[derive(Clone)]
pub enum RegressionFilter {
    Power(PowerBalanceState),
    Force(ForceBalanceState),
}

impl RegressionFilter {
    pub fn new(
        kind: Parameterization,
        system: SystemRef,
        lambda0: f64,
        lambda1: f64,
        state0: &JointState,
    ) -> Result<Self> {
        Ok(match kind {
            Parameterization::PowerBalance => Self::Power(PowerBalanceState::new(system, lambda0, lambda1, state0)?),
            Parameterization::ForceBalance => Self::Force(ForceBalanceState::new(system, lambda0, lambda1, state0)?),
        })
    }

    pub fn output(&self, q: &DVector<f64>, qd: &DVector<f64>) -> RegressionPair {
        match self {
            Self::Power(s) => s.output(q, qd),
            Self::Force(s) => s.output(q, qd),
        }
    }

    pub fn step(&mut self, q: &DVector<f64>, qd: &DVector<f64>, tau: &DVector<f64>, dt: f64) -> Result<RegressionPair> {
        match self {
            Self::Power(s) => s.step(q, qd, tau, dt),
            Self::Force(s) => s.step(q, qd, tau, dt),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{PhysicalParams, Plant, TwoLinkArm};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn arm() -> SystemRef {
        Arc::new(TwoLinkArm)
    }

    #[test]
    fn power_balance_starts_with_zero_regressor() {
        let s0 = JointState::at_rest(v(&[3.0, 0.0]));
        let pb = PowerBalanceState::new(arm(), 1.0, 1.0, &s0).unwrap();
        let pair = pb.output(&s0.q, &s0.qd);
        assert_eq!(pair.omega.shape(), (1, 5));
        assert_eq!(pair.omega.amax(), 0.0);
        assert_eq!(pair.y[0], 0.0);
        let theta = PhysicalParams::default().theta().stacked();
        assert_eq!(pair.residual(&theta)[0], 0.0);
    }

    #[test]
    fn power_balance_unforced() {
        let q = v(&[0.4, -0.2]);
        let s0 = JointState::at_rest(q.clone());
        let mut pb = PowerBalanceState::new(arm(), 1.0, 1.0, &s0).unwrap();
        for _ in 0..100 {
            let pair = pb.step(&q, &s0.qd, &v(&[0.0, 0.0]), 5e-4).unwrap();
            assert_eq!(pair.y[0], 0.0);
            assert!(pair.omega.columns(0, 3).amax() == 0.0);
        }
    }

    #[test]
    fn power_balance_euler_recursion() {
        let q = v(&[0.0, 0.0]);
        let s0 = JointState::at_rest(q.clone());
        let mut pb = PowerBalanceState::new(arm(), 1.0, 1.0, &s0).unwrap();
        // qd^T tau = 1 with the joint state used by the filter
        let qd = v(&[1.0, 0.0]);
        let tau = v(&[1.0, 0.0]);
        pb.step(&q, &qd, &tau, 5e-4).unwrap();
        assert!((pb.y() - 5e-4).abs() < 1e-18);
        pb.step(&q, &qd, &tau, 5e-4).unwrap();
        assert!((pb.y() - 5e-4 * (1.0 + (1.0 - 5e-4))).abs() < 1e-18);
    }

    #[test]
    fn bad_gains_and_steps() {
        let s0 = JointState::at_rest(v(&[0.0, 0.0]));
        assert!(PowerBalanceState::new(arm(), 0.0, 1.0, &s0).is_err());
        assert!(ForceBalanceState::new(arm(), 1.0, -1.0, &s0).is_err());
        let mut fb = ForceBalanceState::new(arm(), 1.0, 1.0, &s0).unwrap();
        assert!(fb.step(&s0.q, &s0.qd, &v(&[0.0, 0.0]), 0.0).is_err());
        let mut pb = PowerBalanceState::new(arm(), 1.0, 1.0, &s0).unwrap();
        assert!(pb.step(&s0.q, &s0.qd, &v(&[0.0, 0.0]), -1.0).is_err());
    }

    #[test]
    fn force_balance_initial_and_phi() {
        let sys = arm();
        let q = v(&[PI / 2.0, 0.0]);
        let qd = v(&[0.0, 0.0]);
        assert_eq!(phi1(&sys, &q, &qd, 1.0, 1.0).amax(), 0.0);
        assert_eq!(phi3(&sys, &q, &qd).amax(), 0.0);
        assert!((sys.psi(&q) - DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0])).amax() < 1e-15);
        let fb = ForceBalanceState::new(sys, 1.0, 1.0, &JointState::at_rest(q.clone())).unwrap();
        let pair = fb.output(&q, &qd);
        assert_eq!(pair.omega.shape(), (2, 5));
        assert_eq!(pair.omega.amax(), 0.0);
    }

    #[test]
    fn force_balance_nonzero_initial_velocity_still_starts_at_zero() {
        let s0 = JointState::new(v(&[0.3, 1.2]), v(&[0.5, -0.7])).unwrap();
        let fb = ForceBalanceState::new(arm(), 2.0, 3.0, &s0).unwrap();
        assert!(fb.output(&s0.q, &s0.qd).omega.amax() < 1e-15);
    }

    /// Open-loop excitation with a fine plant integration: the filtered
    /// regression must track `y = Omega theta` up to discretization error.
    #[test]
    fn regression_identity_open_loop() {
        let plant = Plant::two_link(&PhysicalParams::default()).unwrap();
        let theta = plant.theta.stacked();
        let dt = 1e-5;
        for kind in [Parameterization::PowerBalance, Parameterization::ForceBalance] {
            let mut st = JointState::at_rest(v(&[0.5, -0.3]));
            let mut filt = RegressionFilter::new(kind, plant.system.clone(), 1.0, 1.0, &st).unwrap();
            let mut worst: f64 = 0.0;
            for k in 0..100_000 {
                let t = k as f64 * dt;
                let tau = plant.gravity(&st.q) + v(&[0.3 * (3.0 * t).sin(), 0.1 * (5.0 * t).cos()]);
                let pair = filt.step(&st.q, &st.qd, &tau, dt).unwrap();
                let r = pair.residual(&theta).amax();
                worst = worst.max(r / (1.0 + pair.y.amax()));
                let qdd = plant.forward_dynamics(&st.q, &st.qd, &tau, &DVector::zeros(2)).unwrap();
                st.q += &st.qd * dt;
                st.qd += qdd * dt;
            }
            assert!(worst < 1e-3, "{kind}: {worst}");
        }
    }
}
