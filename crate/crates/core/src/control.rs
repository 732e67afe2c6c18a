//! Set-point controllers.
//!
//! * `C1`/`C2`: finite-time PD with gravity-regressor compensation and the
//!   composite (direct + DREM prediction error) update of `theta_hat_U`;
//!   `C1` mixes through least squares with forgetting, `C2` through
//!   Kreisselmeier filtering.
//! * `C3`: switching terminal-sliding-mode adaptive controller with a
//!   normalized Kreisselmeier estimator.
//! * `C4`: Slotine–Li adaptive controller with a least-squares composite
//!   estimator.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::drem::{Dre, MatrixNorm, MixedRegression};
use crate::error::{Error, Result};
use crate::mathx::{self, spow, spow_vec};
use crate::plant::{ElSystem, Plant, SystemRef};
use crate::regression::{RegressionFilter, RegressionPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    C1,
    C2,
    C3,
    C4,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [Self::C1, Self::C2, Self::C3, Self::C4];
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c1" => Ok(Self::C1),
            "c2" => Ok(Self::C2),
            "c3" => Ok(Self::C3),
            "c4" => Ok(Self::C4),
            other => Err(Error::invalid(format!("unknown controller `{other}`"))),
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::C1 => "c1",
            Self::C2 => "c2",
            Self::C3 => "c3",
            Self::C4 => "c4",
        })
    }
}

fn all_positive(v: &DVector<f64>) -> bool {
    v.iter().all(|x| *x > 0.0 && x.is_finite())
}

/// Finite-time PD gains. Diagonal matrices are stored as their diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct FtPdGains {
    pub p: DVector<f64>,
    pub d: DVector<f64>,
    pub d_l: DVector<f64>,
    pub r1: f64,
    pub r2: f64,
}

impl FtPdGains {
    pub fn validate(&self) -> Result<()> {
        if !all_positive(&self.p) || !all_positive(&self.d) || !all_positive(&self.d_l) {
            return Err(Error::invalid("FT-PD gains P, D, D_L must be positive"));
        }
        if !(self.r2 > 0.0 && self.r1 > self.r2 && 2.0 * self.r2 > self.r1) {
            return Err(Error::invalid(format!(
                "FT-PD exponents need 2 r2 > r1 > r2 > 0 (r1 = {}, r2 = {})",
                self.r1, self.r2
            )));
        }
        Ok(())
    }

    fn m_c(&self) -> f64 {
        2.0 * self.r2 - self.r1
    }

    /// Position exponent `a = (2 r2 - r1) / r1`.
    pub fn a(&self) -> f64 {
        self.m_c() / self.r1
    }

    /// Velocity exponent `b = (2 r2 - r1) / r2`.
    pub fn b(&self) -> f64 {
        self.m_c() / self.r2
    }
}

/// `tau = -P [e1]^a - D [e2]^b - D_L e2 + Psi(q) theta_hat_U`.
pub fn ftpd_torque(
    system: &dyn ElSystem,
    e1: &DVector<f64>,
    e2: &DVector<f64>,
    q: &DVector<f64>,
    theta_hat_u: &DVector<f64>,
    gains: &FtPdGains,
) -> DVector<f64> {
    let prop = gains.p.component_mul(&spow_vec(e1, gains.a()));
    let damp = gains.d.component_mul(&spow_vec(e2, gains.b()));
    let visc = gains.d_l.component_mul(e2);
    system.psi(q) * theta_hat_u - prop - damp - visc
}

/// Composite adaptation gains.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeAdaptGains {
    pub gamma1: f64,
    pub gamma2: f64,
    pub d1: f64,
    /// Diagonal of the adaptation gain.
    pub gamma: DVector<f64>,
    /// Diagonal of the prediction-error weight.
    pub upsilon_u: DVector<f64>,
    /// Exponent of the prediction error (must equal the velocity exponent `b`).
    pub c: f64,
    /// Exponent of the saturation numerator.
    pub d: f64,
}

impl CompositeAdaptGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 > 0.0 && self.gamma2 > 0.0 && self.d1 > 0.0) {
            return Err(Error::invalid("gamma1, gamma2 and d1 must be positive"));
        }
        if !all_positive(&self.gamma) || !all_positive(&self.upsilon_u) {
            return Err(Error::invalid("Gamma and Upsilon_U must be positive definite"));
        }
        if !(self.c > 0.0 && self.c < 1.0) || !(self.d > 0.0) {
            return Err(Error::invalid(format!("need 0 < c < 1 and d > 0 (c = {}, d = {})", self.c, self.d)));
        }
        Ok(())
    }
}

/// Continuous saturation `f(Delta) = [Delta]^d / (1 + |Delta|^(c+d))`.
pub fn f_sat(delta: f64, c: f64, d: f64) -> f64 {
    spow(delta, d) / (1.0 + delta.abs().powf(c + d))
}

/// `zeta1 = f(Delta) [Delta]^b` with `c = b`, i.e. `x / (1 + x)` for
/// `x = |Delta|^(b+d)`; lies in `[0, 1)`.
pub fn zeta1(delta: f64, b: f64, d: f64) -> f64 {
    let x = delta.abs().powf(b + d);
    // x / (1 + x) rounds to 1 once x passes 2^53
    (x / (1.0 + x)).min(1.0 - f64::EPSILON / 2.0)
}

/// Prediction error `Xi_k = [Delta theta_hat_Uk - Y_Uk]^c`.
pub fn xi_vector(delta: f64, theta_hat_u: &DVector<f64>, y_u: &DVector<f64>, c: f64) -> Result<DVector<f64>> {
    if theta_hat_u.len() != y_u.len() {
        return Err(Error::invalid("xi_vector: theta_hat_U and Y_U differ in length"));
    }
    Ok((theta_hat_u * delta - y_u).map(|v| spow(v, c)))
}

/// Rate of `theta_hat_U` under the composite law:
/// `-Gamma Psi^T [g1 d1 tanh(e1) + (g1+g2) e2] - (g1+g2) Gamma Upsilon f(Delta) Xi`.
pub fn composite_adapt_rate(
    system: &dyn ElSystem,
    e1: &DVector<f64>,
    e2: &DVector<f64>,
    q: &DVector<f64>,
    theta_hat_u: &DVector<f64>,
    mixed: &MixedRegression,
    gains: &CompositeAdaptGains,
) -> Result<DVector<f64>> {
    let g_sum = gains.gamma1 + gains.gamma2;
    let drive = e1.map(f64::tanh) * (gains.gamma1 * gains.d1) + e2 * g_sum;
    let direct = gains.gamma.component_mul(&(system.psi(q).transpose() * drive));
    let xi = xi_vector(mixed.delta, theta_hat_u, &mixed.y_u, gains.c)?;
    let indirect =
        gains.gamma.component_mul(&gains.upsilon_u).component_mul(&xi) * (g_sum * f_sat(mixed.delta, gains.c, gains.d));
    Ok(-direct - indirect)
}

/// Parameters of the switching terminal-sliding-mode controller.
#[derive(Debug, Clone, PartialEq)]
pub struct C3Params {
    pub k1: f64,
    pub k2: f64,
    pub ks: f64,
    pub a: f64,
    /// Adaptation gain and estimator weight active on the terminal branch.
    pub gamma_tau1: f64,
    pub k_tau1: f64,
    /// Adaptation gain and estimator weight active on the linear branch.
    pub gamma_tau2: f64,
    pub k_tau2: f64,
    /// Floor on `|q_tilde_i|` inside the `a - 1` power of the reference acceleration.
    pub singularity_floor: f64,
}

impl C3Params {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.k1,
            self.k2,
            self.ks,
            self.gamma_tau1,
            self.k_tau1,
            self.gamma_tau2,
            self.k_tau2,
            self.singularity_floor,
        ];
        if all.iter().any(|v| !(*v > 0.0)) || !(self.a > 0.0 && self.a < 1.0) {
            return Err(Error::invalid("C3 gains must be positive and 0 < a < 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct C4Params {
    pub k1: f64,
    pub k2: f64,
    pub alpha: f64,
    pub beta0: f64,
    pub p0: f64,
    pub k0: f64,
    pub norm: MatrixNorm,
}

impl C4Params {
    pub fn validate(&self) -> Result<()> {
        let all = [self.k1, self.k2, self.alpha, self.beta0, self.p0];
        if all.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("C4 gains must be positive"));
        }
        if !(self.k0 >= 1.0 / self.p0) {
            return Err(Error::invalid("C4 needs k0 >= 1/p0"));
        }
        Ok(())
    }
}

/// Branch selected by the C3 switching function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Terminal,
    Linear,
}

/// `e2^T M e2 - lambda_max(M) |K2 [e1]^a|^2`.
pub fn tsm_switching_function(m: &DMatrix<f64>, e1: &DVector<f64>, e2: &DVector<f64>, k2: f64, a: f64) -> Result<f64> {
    let lam_max = mathx::max_eig_sym(m)?;
    let v = spow_vec(e1, a) * k2;
    Ok(e2.dot(&(m * e2)) - lam_max * v.norm_squared())
}

/// Everything a controller produced on one step.
#[derive(Debug, Clone)]
pub struct ControlOutput {
    pub tau: DVector<f64>,
    /// Estimate at the start of the step (`theta_hat_U` or the full vector).
    pub theta_hat: DVector<f64>,
    pub theta_hat_u: DVector<f64>,
    pub mixed: Option<MixedRegression>,
    pub pair: RegressionPair,
    pub min_eig_phi2: Option<f64>,
    /// `(min eig F, z)` for least-squares extensions.
    pub ls_health: Option<(f64, f64)>,
    pub branch: Option<Branch>,
}

/// Finite-time PD plus composite DREM adaptation (C1, C2).
#[derive(Clone)]
pub struct CompositeFtController {
    system: SystemRef,
    q_d: DVector<f64>,
    pub ftpd: FtPdGains,
    pub adapt: CompositeAdaptGains,
    theta_hat_u: DVector<f64>,
    filter: RegressionFilter,
    dre: Dre,
}

impl CompositeFtController {
    pub fn new(
        system: SystemRef,
        q_d: DVector<f64>,
        ftpd: FtPdGains,
        adapt: CompositeAdaptGains,
        theta_hat_u0: DVector<f64>,
        filter: RegressionFilter,
        dre: Dre,
    ) -> Result<Self> {
        ftpd.validate()?;
        adapt.validate()?;
        if (adapt.c - ftpd.b()).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "prediction-error exponent c = {} must equal b = {}",
                adapt.c,
                ftpd.b()
            )));
        }
        if theta_hat_u0.len() != system.potential_terms() || q_d.len() != system.dof() {
            return Err(Error::invalid("composite controller: dimension mismatch"));
        }
        Ok(Self { system, q_d, ftpd, adapt, theta_hat_u: theta_hat_u0, filter, dre })
    }

    pub fn theta_hat_u(&self) -> &DVector<f64> {
        &self.theta_hat_u
    }

    pub fn step(&mut self, q: &DVector<f64>, qd: &DVector<f64>, dt: f64) -> Result<ControlOutput> {
        let j = self.system.potential_terms();
        let e1 = q - &self.q_d;
        let mixed = self.dre.mix(j)?;
        let tau = ftpd_torque(self.system.as_ref(), &e1, qd, q, &self.theta_hat_u, &self.ftpd);
        let rate = composite_adapt_rate(self.system.as_ref(), &e1, qd, q, &self.theta_hat_u, &mixed, &self.adapt)?;
        let pair = self.filter.step(q, qd, &tau, dt)?;
        let (min_eig_phi2, ls_health) = match &self.dre {
            Dre::Kreisselmeier(k) => (Some(k.min_eig_phi2()?), None),
            Dre::LeastSquares(ls) => (None, Some((mathx::min_eig_sym(&ls.f)?, ls.z))),
        };
        self.dre.step(&pair, dt)?;
        let before = self.theta_hat_u.clone();
        self.theta_hat_u += rate * dt;
        Ok(ControlOutput {
            tau,
            theta_hat: before.clone(),
            theta_hat_u: before,
            mixed: Some(mixed),
            pair,
            min_eig_phi2,
            ls_health,
            branch: None,
        })
    }
}

/// Switching terminal-sliding-mode adaptive controller (C3).
#[derive(Clone)]
pub struct TsmController {
    system: SystemRef,
    /// Inertia used by the switching function; the scheme assumes it is available.
    inertia_model: Plant,
    q_d: DVector<f64>,
    pub params: C3Params,
    theta_hat: DVector<f64>,
    filter: RegressionFilter,
    kreis: crate::drem::KreisState,
}

impl TsmController {
    pub fn new(
        inertia_model: Plant,
        q_d: DVector<f64>,
        params: C3Params,
        theta_hat0: DVector<f64>,
        filter: RegressionFilter,
        kreis: crate::drem::KreisState,
    ) -> Result<Self> {
        params.validate()?;
        let system = inertia_model.system.clone();
        if theta_hat0.len() != system.param_count() || q_d.len() != system.dof() {
            return Err(Error::invalid("C3: dimension mismatch"));
        }
        Ok(Self { system, inertia_model, q_d, params, theta_hat: theta_hat0, filter, kreis })
    }

    /// Torque, estimator rate and active branch at the given measurement.
    pub fn torque_and_rate(&self, q: &DVector<f64>, qd: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, Branch)> {
        let p = &self.params;
        let q_tilde = q - &self.q_d;
        let m = self.inertia_model.inertia(q);
        let branch =
            if tsm_switching_function(&m, &q_tilde, qd, p.k2, p.a)? <= 0.0 { Branch::Terminal } else { Branch::Linear };
        let (qd_r, qdd_r) = match branch {
            Branch::Terminal => {
                let qd_r = -spow_vec(&q_tilde, p.a) * p.k2;
                let scale = q_tilde.map(|e| e.abs().max(p.singularity_floor).powf(p.a - 1.0));
                let qdd_r = -scale.component_mul(qd) * (p.a * p.k2);
                (qd_r, qdd_r)
            }
            Branch::Linear => (-&q_tilde * p.k2, -qd * p.k2),
        };
        let s = qd - &qd_r;
        let w = self.system.slotine_li_regressor(q, qd, &qd_r, &qdd_r);
        let s_norm = s.norm();
        let u_r = if s_norm > 0.0 { &s * (p.ks / s_norm) } else { DVector::zeros(s.len()) };
        let tau = &w * &self.theta_hat - &s * p.k1 - u_r;
        let theta_err = &self.kreis.phi2 * &self.theta_hat - &self.kreis.phi1;
        let rate = match branch {
            Branch::Terminal => {
                let nrm = theta_err.norm();
                let unit = if nrm > 0.0 { &theta_err / nrm } else { DVector::zeros(theta_err.len()) };
                -(w.transpose() * &s) * p.gamma_tau1 - (self.kreis.phi2.transpose() * unit) * (p.gamma_tau1 * p.k_tau1)
            }
            Branch::Linear => -(w.transpose() * &s) * p.gamma_tau2 - theta_err * (p.gamma_tau2 * p.k_tau2),
        };
        Ok((tau, rate, branch))
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn step(&mut self, q: &DVector<f64>, qd: &DVector<f64>, dt: f64) -> Result<ControlOutput> {
        let j = self.system.potential_terms();
        let (tau, rate, branch) = self.torque_and_rate(q, qd)?;
        let mixed = self.kreis.mix(j)?;
        let min_eig = self.kreis.min_eig_phi2()?;
        let pair = self.filter.step(q, qd, &tau, dt)?;
        self.kreis.step(&pair, dt)?;
        let before = self.theta_hat.clone();
        self.theta_hat += rate * dt;
        Ok(ControlOutput {
            tau,
            theta_hat_u: tail(&before, j),
            theta_hat: before,
            mixed: Some(mixed),
            pair,
            min_eig_phi2: Some(min_eig),
            ls_health: None,
            branch: Some(branch),
        })
    }
}

/// Slotine–Li adaptive controller with least-squares composite estimator (C4).
#[derive(Clone)]
pub struct SlotineLiController {
    system: SystemRef,
    q_d: DVector<f64>,
    pub params: C4Params,
    theta_hat: DVector<f64>,
    gain: DMatrix<f64>,
    filter: RegressionFilter,
}

impl SlotineLiController {
    pub fn new(
        system: SystemRef,
        q_d: DVector<f64>,
        params: C4Params,
        theta_hat0: DVector<f64>,
        filter: RegressionFilter,
    ) -> Result<Self> {
        params.validate()?;
        let l = system.param_count();
        if theta_hat0.len() != l || q_d.len() != system.dof() {
            return Err(Error::invalid("C4: dimension mismatch"));
        }
        let gain = DMatrix::identity(l, l) / params.p0;
        Ok(Self { system, q_d, params, theta_hat: theta_hat0, gain, filter })
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    /// `(tau, s, W)` with the linear virtual reference.
    pub fn torque(&self, q: &DVector<f64>, qd: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DMatrix<f64>) {
        let k2 = self.params.k2;
        let q_tilde = q - &self.q_d;
        let qd_r = -&q_tilde * k2;
        let qdd_r = -qd * k2;
        let s = qd + &q_tilde * k2;
        let w = self.system.slotine_li_regressor(q, qd, &qd_r, &qdd_r);
        let tau = &w * &self.theta_hat - &s * self.params.k1;
        (tau, s, w)
    }

    /// `-P [W^T s + Omega^T e_p]` with `e_p = Omega theta_hat - y`.
    pub fn adapt_rate(&self, s: &DVector<f64>, w: &DMatrix<f64>, pair: &RegressionPair) -> DVector<f64> {
        let e_p = &pair.omega * &self.theta_hat - &pair.y;
        -(&self.gain * (w.transpose() * s + pair.omega.transpose() * e_p))
    }

    pub fn step(&mut self, q: &DVector<f64>, qd: &DVector<f64>, dt: f64) -> Result<ControlOutput> {
        let j = self.system.potential_terms();
        let (tau, s, w) = self.torque(q, qd);
        let pair = self.filter.step(q, qd, &tau, dt)?;
        let rate = self.adapt_rate(&s, &w, &pair);
        let p = &self.params;
        let beta = p.beta0 * (1.0 - p.norm.eval(&self.gain)? / p.k0);
        let om = &pair.omega;
        let p_ot = &self.gain * om.transpose();
        let gain_rate = -(&p_ot * (om * &self.gain)) * p.alpha + &self.gain * beta;
        let health = mathx::min_eig_sym(&self.gain)?;
        self.gain = mathx::symmetrize(&(&self.gain + gain_rate * dt));
        if !(mathx::min_eig_sym(&self.gain)? > 0.0) {
            return Err(Error::degenerate("C4 gain P lost positive definiteness"));
        }
        let before = self.theta_hat.clone();
        self.theta_hat += rate * dt;
        Ok(ControlOutput {
            tau,
            theta_hat_u: tail(&before, j),
            theta_hat: before,
            mixed: None,
            pair,
            min_eig_phi2: None,
            ls_health: Some((health, f64::NAN)),
            branch: None,
        })
    }
}

fn tail(v: &DVector<f64>, k: usize) -> DVector<f64> {
    v.rows(v.len() - k, k).into_owned()
}

/// Any of the four controllers.
#[derive(Clone)]
pub enum Controller {
    Composite(Box<CompositeFtController>),
    Tsm(Box<TsmController>),
    SlotineLi(Box<SlotineLiController>),
}

impl Controller {
    pub fn step(&mut self, q: &DVector<f64>, qd: &DVector<f64>, dt: f64) -> Result<ControlOutput> {
        match self {
            Self::Composite(c) => c.step(q, qd, dt),
            Self::Tsm(c) => c.step(q, qd, dt),
            Self::SlotineLi(c) => c.step(q, qd, dt),
        }
    }
}
