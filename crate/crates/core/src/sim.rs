//! Fixed-step closed-loop runner and trace monitors.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::control::{
    zeta1, Branch, C3Params, C4Params, CompositeAdaptGains, CompositeFtController, Controller, ControllerKind,
    FtPdGains, SlotineLiController, TsmController,
};
use crate::drem::{excitation_gramian, Dre, DreKind, KreisParams, KreisState, LsDreParams, LsDreState, MatrixNorm};
use crate::error::{Error, Result};
use crate::mathx::{self, spow_vec};
use crate::plant::{FrictionModel, JointState, NoiseModel, PhysicalParams, Plant, SystemRef, TwoLinkArm};
use crate::regression::{Parameterization, RegressionFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// No friction, exact measurements.
    Case1,
    /// Coulomb friction on the plant and sinusoidal measurement noise.
    Case2,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "case1" => Ok(Self::Case1),
            "case2" => Ok(Self::Case2),
            other => Err(Error::invalid(format!("unknown scenario `{other}`"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Case1 => "case1",
            Self::Case2 => "case2",
        })
    }
}

/// Everything one run needs. `Default` is C1 in Case 1.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub q_d: DVector<f64>,
    pub q0: DVector<f64>,
    pub qd0: DVector<f64>,
    pub scenario: Scenario,
    pub controller: ControllerKind,
    pub parameterization: Parameterization,
    /// Extension used by C1/C2; `None` picks least squares for C1 and
    /// Kreisselmeier for C2.
    pub dre: Option<DreKind>,
    pub physical: PhysicalParams,
    pub friction: FrictionModel,
    pub noise: NoiseModel,
    pub lambda0: f64,
    pub lambda1: f64,
    pub ftpd: FtPdGains,
    pub adapt: CompositeAdaptGains,
    pub ls: LsDreParams,
    pub kreis: KreisParams,
    pub c3_kreis: KreisParams,
    pub c3: C3Params,
    pub c4: C4Params,
    /// Initial `theta_hat_U` for C1/C2.
    pub theta_hat_u0: DVector<f64>,
    /// Initial full estimate for C3/C4.
    pub theta_hat0: DVector<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        let two = |x: f64| DVector::from_element(2, x);
        Self {
            dt: 5e-4,
            t_final: 10.0,
            q_d: two(2.0),
            q0: DVector::from_column_slice(&[3.0, 0.0]),
            qd0: two(0.0),
            scenario: Scenario::Case1,
            controller: ControllerKind::C1,
            parameterization: Parameterization::ForceBalance,
            dre: None,
            physical: PhysicalParams::default(),
            friction: FrictionModel::default(),
            noise: NoiseModel::default(),
            lambda0: 1.0,
            lambda1: 1.0,
            ftpd: FtPdGains { p: two(3.0), d: two(2.0), d_l: two(0.5), r1: 1.5, r2: 1.0 },
            adapt: CompositeAdaptGains {
                gamma1: 0.3,
                gamma2: 0.7,
                d1: 5.0,
                gamma: two(1.0),
                upsilon_u: two(50.0),
                c: 0.5,
                d: 0.1,
            },
            ls: LsDreParams {
                alpha: 10.0,
                beta0: 10.0,
                f0: 1.0,
                xi: 10.0,
                rho0: DVector::zeros(5),
                norm: MatrixNorm::Spectral,
            },
            kreis: KreisParams { lambda2: 1.0, lambda3: 1.3 },
            c3_kreis: KreisParams { lambda2: 1.0, lambda3: 1.0 },
            c3: C3Params {
                k1: 2.0,
                k2: 1.5,
                ks: 0.6,
                a: 1.0 / 3.0,
                gamma_tau1: 0.001,
                k_tau1: 5000.0,
                gamma_tau2: 1.0,
                k_tau2: 50.0,
                singularity_floor: 1e-6,
            },
            c4: C4Params { k1: 2.0, k2: 1.5, alpha: 10.0, beta0: 10.0, p0: 1.0, k0: 10.0, norm: MatrixNorm::Spectral },
            theta_hat_u0: two(0.0),
            theta_hat0: DVector::zeros(5),
        }
    }
}

impl SimConfig {
    pub fn for_controller(kind: ControllerKind) -> Self {
        Self { controller: kind, ..Self::default() }
    }

    pub fn step_count(&self) -> usize {
        (self.t_final / self.dt + 1e-9).floor() as usize
    }

    /// Extension actually used by C1/C2.
    pub fn effective_dre(&self) -> DreKind {
        self.dre.unwrap_or(match self.controller {
            ControllerKind::C1 | ControllerKind::C4 => DreKind::LeastSquares,
            ControllerKind::C2 | ControllerKind::C3 => DreKind::Kreisselmeier,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt must be positive"));
        }
        if !(self.t_final > self.dt) {
            return Err(Error::invalid("t_final must exceed dt"));
        }
        let n = 2;
        for (name, v) in
            [("q_d", &self.q_d), ("q0", &self.q0), ("qd0", &self.qd0), ("theta_hat_u0", &self.theta_hat_u0)]
        {
            if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("{name} must hold {n} finite values")));
            }
        }
        if self.theta_hat0.len() != 5 || self.ls.rho0.len() != 5 {
            return Err(Error::invalid("theta_hat0 and rho0 must hold 5 values"));
        }
        if !(self.lambda0 > 0.0 && self.lambda1 > 0.0) {
            return Err(Error::invalid("lambda0 and lambda1 must be positive"));
        }
        self.physical.validate()?;
        self.ftpd.validate()?;
        self.adapt.validate()?;
        self.ls.validate()?;
        self.kreis.validate()?;
        self.c3_kreis.validate()?;
        self.c3.validate()?;
        self.c4.validate()
    }

    /// True plant of this configuration.
    pub fn plant(&self) -> Result<Plant> {
        Plant::two_link(&self.physical)
    }

    /// Fresh controller, with filters initialized at the first measurement.
    pub fn build_controller(&self, state0: &JointState) -> Result<Controller> {
        self.validate()?;
        let system: SystemRef = Arc::new(TwoLinkArm);
        let filter = RegressionFilter::new(self.parameterization, system.clone(), self.lambda0, self.lambda1, state0)?;
        let l = system.param_count();
        Ok(match self.controller {
            ControllerKind::C1 | ControllerKind::C2 => {
                let dre = match self.effective_dre() {
                    DreKind::LeastSquares => Dre::LeastSquares(LsDreState::new(self.ls.clone())?),
                    DreKind::Kreisselmeier => Dre::Kreisselmeier(KreisState::new(self.kreis, l)?),
                };
                Controller::Composite(Box::new(CompositeFtController::new(
                    system,
                    self.q_d.clone(),
                    self.ftpd.clone(),
                    self.adapt.clone(),
                    self.theta_hat_u0.clone(),
                    filter,
                    dre,
                )?))
            }
            ControllerKind::C3 => Controller::Tsm(Box::new(TsmController::new(
                self.plant()?,
                self.q_d.clone(),
                self.c3.clone(),
                self.theta_hat0.clone(),
                filter,
                KreisState::new(self.c3_kreis, l)?,
            )?)),
            ControllerKind::C4 => Controller::SlotineLi(Box::new(SlotineLiController::new(
                system,
                self.q_d.clone(),
                self.c4.clone(),
                self.theta_hat0.clone(),
                filter,
            )?)),
        })
    }
}

/// One row of a trace. Quantities a controller does not produce are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub e1: DVector<f64>,
    pub e2: DVector<f64>,
    pub tau: DVector<f64>,
    pub theta_hat: DVector<f64>,
    pub theta_tilde_u: DVector<f64>,
    pub delta: f64,
    pub zeta1: f64,
    pub v1: f64,
    pub psi_theta_tilde: DVector<f64>,
    /// `|Y - Delta theta| / (1 + |Delta| |theta|)`.
    pub identity_error: f64,
    pub min_eig_phi2: f64,
    pub ls_min_eig: f64,
    pub ls_z: f64,
    pub energy: f64,
    pub omega: DMatrix<f64>,
    pub branch: Option<Branch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub dt: f64,
    pub records: Vec<Record>,
}

impl Trace {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }
}

/// `V1` of the composite FT-PD closed loop.
pub fn compute_v1(
    inertia: &DMatrix<f64>,
    e1: &DVector<f64>,
    e2: &DVector<f64>,
    theta_tilde_u: &DVector<f64>,
    ftpd: &FtPdGains,
    adapt: &CompositeAdaptGains,
) -> f64 {
    let g_sum = adapt.gamma1 + adapt.gamma2;
    let me2 = inertia * e2;
    let v0 = ftpd.r1 / (2.0 * ftpd.r2) * e1.dot(&ftpd.p.component_mul(&spow_vec(e1, ftpd.a()))) + 0.5 * e2.dot(&me2);
    let cross = adapt.gamma1 * adapt.d1 * e1.map(f64::tanh).dot(&me2);
    let logcosh: f64 = e1.iter().zip(ftpd.d_l.iter()).map(|(e, dl)| dl * e.cosh().ln()).sum();
    let est: f64 = theta_tilde_u.iter().zip(adapt.gamma.iter()).map(|(t, g)| t * t / g).sum();
    g_sum * v0 + cross + adapt.gamma1 * adapt.d1 * logcosh + 0.5 * est
}

/// Runs the closed loop and records every step.
pub fn run_closed_loop(config: &SimConfig) -> Result<Trace> {
    config.validate()?;
    let plant = config.plant()?;
    let theta = plant.theta.stacked();
    let theta_u = plant.theta.u.clone();
    let j = theta_u.len();
    let steps = config.step_count();
    let dt = config.dt;
    let noisy = config.scenario == Scenario::Case2;
    let no_friction = FrictionModel::none(plant.dof());
    let friction = if noisy { &config.friction } else { &no_friction };

    let measure = |t: f64, q: &DVector<f64>, qd: &DVector<f64>| {
        if noisy {
            let (nq, nqd) = config.noise.sample(t);
            (q + nq, qd + nqd)
        } else {
            (q.clone(), qd.clone())
        }
    };

    let mut q = config.q0.clone();
    let mut qd = config.qd0.clone();
    let (qm0, qdm0) = measure(0.0, &q, &qd);
    let mut controller = config.build_controller(&JointState::new(qm0, qdm0)?)?;
    let b = config.ftpd.b();
    let composite = matches!(controller, Controller::Composite(_));

    let mut records = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let (qm, qdm) = measure(t, &q, &qd);
        let out = controller.step(&qm, &qdm, dt).map_err(|e| e.at_step(k))?;
        let e1 = &q - &config.q_d;
        let theta_tilde_u = &out.theta_hat_u - &theta_u;
        let inertia = plant.inertia(&q);
        let (delta, identity_error) = match &out.mixed {
            Some(m) => (m.delta, m.identity_error(&theta)),
            None => (f64::NAN, f64::NAN),
        };
        let v1 = if composite {
            compute_v1(&inertia, &e1, &qd, &theta_tilde_u, &config.ftpd, &config.adapt)
        } else {
            f64::NAN
        };
        let (ls_min_eig, ls_z) = out.ls_health.unwrap_or((f64::NAN, f64::NAN));
        debug_assert_eq!(theta_tilde_u.len(), j);
        records.push(Record {
            t,
            e2: qd.clone(),
            psi_theta_tilde: plant.psi(&q) * &theta_tilde_u,
            energy: plant.total_energy(&q, &qd),
            delta,
            zeta1: if delta.is_nan() { f64::NAN } else { zeta1(delta, b, config.adapt.d) },
            v1,
            identity_error,
            min_eig_phi2: out.min_eig_phi2.unwrap_or(f64::NAN),
            ls_min_eig,
            ls_z,
            omega: out.pair.omega,
            branch: out.branch,
            theta_hat: out.theta_hat,
            theta_tilde_u,
            tau: out.tau.clone(),
            e1,
            q: q.clone(),
            qd: qd.clone(),
        });
        if k == steps {
            break;
        }
        let tau_f = friction.torque(&qd);
        let qdd = plant.forward_dynamics(&q, &qd, &out.tau, &tau_f).map_err(|e| e.at_step(k))?;
        q += &qd * dt;
        qd += qdd * dt;
        if q.iter().chain(qd.iter()).any(|x| !x.is_finite()) {
            return Err(Error::degenerate("plant state diverged").at_step(k));
        }
    }
    Ok(Trace { dt, records })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Position band for settling, rad.
    pub settle: f64,
    /// Parameter band relative to the initial error norm.
    pub param_rel: f64,
    /// Trailing fraction of the trace treated as steady state.
    pub steady_fraction: f64,
    /// Excitation window `[t1, t1 + len]`.
    pub gramian_t1: f64,
    pub gramian_len: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { settle: 1e-3, param_rel: 0.05, steady_fraction: 0.2, gramian_t1: 0.0, gramian_len: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub settling_time: f64,
    pub steady_state_error: f64,
    pub param_convergence_time: f64,
    pub chattering_amplitude: f64,
    pub zeta1_integral: f64,
    pub min_eig_phi2: f64,
    pub gramian_min_eig: f64,
    pub max_identity_error: f64,
}

impl Metrics {
    /// `(key, value)` pairs in report order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("settling_time", self.settling_time),
            ("steady_state_error", self.steady_state_error),
            ("param_convergence_time", self.param_convergence_time),
            ("chattering_amplitude", self.chattering_amplitude),
            ("zeta1_integral", self.zeta1_integral),
            ("min_eig_phi2", self.min_eig_phi2),
            ("gramian_min_eig", self.gramian_min_eig),
            ("max_identity_error", self.max_identity_error),
        ]
    }
}

/// Time of the last sample where `norms` exceeds `tol`; 0 if never, infinite
/// if the last sample still exceeds.
pub fn last_exceedance(t: &[f64], norms: &[f64], tol: f64) -> f64 {
    match norms.iter().rposition(|v| *v > tol) {
        None => 0.0,
        Some(k) if k + 1 == norms.len() => f64::INFINITY,
        Some(k) => t[k],
    }
}

/// Running trapezoidal integral; first entry 0.
pub fn cumulative_trapezoid(t: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    for k in 0..v.len() {
        if k > 0 {
            acc += 0.5 * (t[k] - t[k - 1]) * (v[k] + v[k - 1]);
        }
        out.push(acc);
    }
    out
}

fn nan_min(xs: impl Iterator<Item = f64>) -> f64 {
    xs.filter(|x| !x.is_nan()).fold(f64::NAN, |a, b| if a.is_nan() { b } else { a.min(b) })
}

fn nan_max(xs: impl Iterator<Item = f64>) -> f64 {
    xs.filter(|x| !x.is_nan()).fold(f64::NAN, |a, b| if a.is_nan() { b } else { a.max(b) })
}

/// Summary metrics of a trace.
pub fn compute_metrics(trace: &Trace, tol: &Tolerances) -> Result<Metrics> {
    let recs = &trace.records;
    if recs.is_empty() {
        return Err(Error::invalid("compute_metrics: empty trace"));
    }
    if !(tol.steady_fraction > 0.0 && tol.steady_fraction <= 1.0) {
        return Err(Error::invalid("steady_fraction must lie in (0, 1]"));
    }
    let t = trace.times();
    let e_norm: Vec<f64> = recs.iter().map(|r| r.e1.norm()).collect();
    let p_norm: Vec<f64> = recs.iter().map(|r| r.theta_tilde_u.norm()).collect();
    let n = recs.len();
    let start = n - ((n as f64 * tol.steady_fraction).ceil() as usize).clamp(1, n);

    let steady_state_error = e_norm[start..].iter().sum::<f64>() / (n - start) as f64;
    let chattering_amplitude = (start.max(1)..n).map(|k| (&recs[k].tau - &recs[k - 1].tau).amax()).fold(0.0, f64::max);
    let zeta: Vec<f64> = recs.iter().map(|r| if r.zeta1.is_nan() { 0.0 } else { r.zeta1 }).collect();
    let zeta1_integral = *cumulative_trapezoid(&t, &zeta).last().unwrap_or(&0.0);

    let t_end = t[n - 1];
    let t1 = tol.gramian_t1.min(t_end);
    let len = tol.gramian_len.min(t_end - t1);
    let gramian_min_eig = if len > 0.0 {
        let g = excitation_gramian(recs.iter().map(|r| (r.t, &r.omega)), t1, len)?;
        mathx::min_eig_sym(&g)?
    } else {
        f64::NAN
    };

    Ok(Metrics {
        settling_time: last_exceedance(&t, &e_norm, tol.settle),
        steady_state_error,
        param_convergence_time: last_exceedance(&t, &p_norm, tol.param_rel * p_norm[0]),
        chattering_amplitude,
        zeta1_integral,
        min_eig_phi2: nan_min(recs.iter().map(|r| r.min_eig_phi2)),
        gramian_min_eig,
        max_identity_error: nan_max(recs.iter().map(|r| r.identity_error)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn synthetic(n: usize, e: f64, tau: impl Fn(usize) -> f64) -> Trace {
        let records = (0..n)
            .map(|k| Record {
                t: k as f64 * 0.1,
                q: v(&[e, 0.0]),
                qd: v(&[0.0, 0.0]),
                e1: v(&[e, 0.0]),
                e2: v(&[0.0, 0.0]),
                tau: v(&[tau(k), 0.0]),
                theta_hat: v(&[0.0, 0.0]),
                theta_tilde_u: v(&[0.0, 0.0]),
                delta: 0.0,
                zeta1: 0.0,
                v1: 0.0,
                psi_theta_tilde: v(&[0.0, 0.0]),
                identity_error: 0.0,
                min_eig_phi2: f64::NAN,
                ls_min_eig: f64::NAN,
                ls_z: f64::NAN,
                energy: 0.0,
                omega: DMatrix::identity(2, 5),
                branch: None,
            })
            .collect();
        Trace { dt: 0.1, records }
    }

    #[test]
    fn metrics_on_synthetic_traces() {
        let m = compute_metrics(&synthetic(50, 0.0, |_| 1.0), &Tolerances::default()).unwrap();
        assert_eq!(m.settling_time, 0.0);
        assert_eq!(m.chattering_amplitude, 0.0);
        assert_eq!(m.steady_state_error, 0.0);
        assert_eq!(m.param_convergence_time, 0.0);
        let m = compute_metrics(&synthetic(50, 0.5, |k| (k % 2) as f64), &Tolerances::default()).unwrap();
        assert_eq!(m.settling_time, f64::INFINITY);
        assert_eq!(m.chattering_amplitude, 1.0);
        assert!((m.steady_state_error - 0.5).abs() < 1e-15);
        assert!(compute_metrics(&Trace { dt: 0.1, records: vec![] }, &Tolerances::default()).is_err());
    }

    #[test]
    fn exceedance_and_trapezoid() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(last_exceedance(&t, &[1.0, 0.5, 0.0, 0.0], 0.1), 1.0);
        assert_eq!(cumulative_trapezoid(&t, &[0.0, 1.0, 1.0, 0.0]), vec![0.0, 0.5, 1.5, 2.0]);
    }

    #[test]
    fn v1_examples() {
        let c = SimConfig::default();
        let m = DMatrix::identity(2, 2);
        let z = DVector::zeros(2);
        assert_eq!(compute_v1(&m, &z, &z, &z, &c.ftpd, &c.adapt), 0.0);
        let v1 = compute_v1(&m, &v(&[1.0, 0.0]), &z, &z, &c.ftpd, &c.adapt);
        let expect = 2.25 + 0.3 * 5.0 * 0.5 * 1f64.cosh().ln();
        assert!((v1 - expect).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_is_preserved() {
        let mut c = SimConfig { t_final: 1.0, ..SimConfig::default() };
        c.q0 = c.q_d.clone();
        c.theta_hat_u0 = c.physical.theta().u;
        let trace = run_closed_loop(&c).unwrap();
        assert_eq!(trace.records.len(), 2001);
        for r in &trace.records {
            assert!(r.e1.norm() <= 1e-9, "t = {} e = {}", r.t, r.e1.norm());
        }
    }

    #[test]
    fn grid_is_uniform() {
        let c = SimConfig { t_final: 0.5, controller: ControllerKind::C4, ..SimConfig::default() };
        let trace = run_closed_loop(&c).unwrap();
        assert_eq!(trace.records.len(), 1001);
        for (k, r) in trace.records.iter().enumerate() {
            assert_eq!(r.t, k as f64 * c.dt);
        }
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(run_closed_loop(&SimConfig { dt: -1.0, ..SimConfig::default() }).is_err());
        assert!(run_closed_loop(&SimConfig { t_final: 1e-4, ..SimConfig::default() }).is_err());
    }
}
