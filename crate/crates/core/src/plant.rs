//! Euler–Lagrange plant models.
//!
//! A system is described by its *known* basis functions: inertia matrices
//! `M_k(q)` and potential terms `U_k(q)`, so that
//! `M(q) = sum_k M_k(q) theta_Mk` and `U(q) = sum_k U_k(q) theta_Uk`.
//! Everything else (Coriolis via Christoffel symbols, gravity, energy, the
//! Slotine–Li regressor) is derived from those bases generically.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mathx::{self, sign};

/// Generalized positions and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qd: DVector<f64>) -> Result<Self> {
        if q.len() != qd.len() {
            return Err(Error::invalid("JointState: q and qd differ in length"));
        }
        if q.iter().chain(qd.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("JointState: non-finite entry"));
        }
        Ok(Self { q, qd })
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self { q, qd: DVector::zeros(n) }
    }
}

/// Basis description of a fully actuated Euler–Lagrange system.
///
/// Implementors supply the parameter-free functions; parameters live in a
/// separate [`ThetaVector`].
pub trait ElSystem: Send + Sync {
    /// Degrees of freedom `n`.
    fn dof(&self) -> usize;
    /// Number of inertia basis terms.
    fn inertia_terms(&self) -> usize;
    /// Number of potential basis terms.
    fn potential_terms(&self) -> usize;

    /// `M_k(q)`, symmetric `n x n`.
    fn inertia_basis(&self, k: usize, q: &DVector<f64>) -> DMatrix<f64>;
    /// `dM_k / dq_i`.
    fn inertia_basis_partial(&self, k: usize, i: usize, q: &DVector<f64>) -> DMatrix<f64>;
    /// `[U_1(q) .. U_j(q)]`.
    fn potential_basis(&self, q: &DVector<f64>) -> DVector<f64>;
    /// Gravity regressor `Psi(q) = [grad U_1 .. grad U_j]`, `n x j`.
    fn psi(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// Exact bounds `(mu_m, mu_M)` on the spectrum of `M(q)` over all `q`,
    /// when the system can compute them.
    fn inertia_bounds(&self, _theta_m: &DVector<f64>) -> Option<(f64, f64)> {
        None
    }

    fn param_count(&self) -> usize {
        self.inertia_terms() + self.potential_terms()
    }

    fn inertia(&self, q: &DVector<f64>, theta_m: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        (0..self.inertia_terms()).fold(DMatrix::zeros(n, n), |acc, k| acc + self.inertia_basis(k, q) * theta_m[k])
    }

    /// Christoffel-consistent Coriolis matrix of the single basis term `M_k`.
    fn coriolis_basis(&self, k: usize, q: &DVector<f64>, qd: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        let partials: Vec<DMatrix<f64>> = (0..n).map(|i| self.inertia_basis_partial(k, i, q)).collect();
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for (l, dl) in partials.iter().enumerate() {
                    let christoffel = 0.5 * (dl[(i, j)] + partials[j][(i, l)] - partials[i][(j, l)]);
                    acc += christoffel * qd[l];
                }
                c[(i, j)] = acc;
            }
        }
        c
    }

    fn coriolis(&self, q: &DVector<f64>, qd: &DVector<f64>, theta_m: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        (0..self.inertia_terms()).fold(DMatrix::zeros(n, n), |acc, k| acc + self.coriolis_basis(k, q, qd) * theta_m[k])
    }

    /// `[1/2 qd^T M_k(q) qd]_k`.
    fn kinetic_basis(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.inertia_terms(), |k, _| 0.5 * qd.dot(&(self.inertia_basis(k, q) * qd)))
    }

    /// `grad_q { qd^T M_k(q) qd }`.
    fn quadratic_form_gradient(&self, k: usize, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dof(), |i, _| qd.dot(&(self.inertia_basis_partial(k, i, q) * qd)))
    }

    /// Energy regressor: `E_T = omega(q, qd)^T theta`.
    fn omega(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        let kin = self.kinetic_basis(q, qd);
        let pot = self.potential_basis(q);
        DVector::from_iterator(kin.len() + pot.len(), kin.iter().chain(pot.iter()).copied())
    }

    /// Slotine–Li regressor: `W theta = M(q) qdd_r + C(q, qd) qd_r + g(q)`.
    fn slotine_li_regressor(
        &self,
        q: &DVector<f64>,
        qd: &DVector<f64>,
        qd_r: &DVector<f64>,
        qdd_r: &DVector<f64>,
    ) -> DMatrix<f64> {
        let n = self.dof();
        let i_m = self.inertia_terms();
        let psi = self.psi(q);
        let mut w = DMatrix::zeros(n, self.param_count());
        for k in 0..i_m {
            let col = self.inertia_basis(k, q) * qdd_r + self.coriolis_basis(k, q, qd) * qd_r;
            w.set_column(k, &col);
        }
        for j in 0..self.potential_terms() {
            w.set_column(i_m + j, &psi.column(j));
        }
        w
    }
}

pub type SystemRef = Arc<dyn ElSystem>;

/// Planar two-link arm with revolute joints.
///
/// Bases: `M_1 = [[1,0],[0,0]]`, `M_2 = [[2c2,c2],[c2,0]]`,
/// `M_3 = [[0,1],[1,1]]`, `U_1 = -cos(q1+q2)`, `U_2 = -cos(q1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoLinkArm;

impl ElSystem for TwoLinkArm {
    fn dof(&self) -> usize {
        2
    }

    fn inertia_terms(&self) -> usize {
        3
    }

    fn potential_terms(&self) -> usize {
        2
    }

    fn inertia_basis(&self, k: usize, q: &DVector<f64>) -> DMatrix<f64> {
        match k {
            0 => DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            1 => {
                let c2 = q[1].cos();
                DMatrix::from_row_slice(2, 2, &[2.0 * c2, c2, c2, 0.0])
            }
            2 => DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]),
            _ => panic!("inertia basis index {k} out of range"),
        }
    }

    fn inertia_basis_partial(&self, k: usize, i: usize, q: &DVector<f64>) -> DMatrix<f64> {
        if k == 1 && i == 1 {
            let s2 = q[1].sin();
            DMatrix::from_row_slice(2, 2, &[-2.0 * s2, -s2, -s2, 0.0])
        } else {
            DMatrix::zeros(2, 2)
        }
    }

    fn potential_basis(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![-(q[0] + q[1]).cos(), -q[0].cos()])
    }

    fn psi(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let s12 = (q[0] + q[1]).sin();
        let s1 = q[0].sin();
        DMatrix::from_row_slice(2, 2, &[s12, s1, s12, 0.0])
    }

    fn inertia_bounds(&self, theta_m: &DVector<f64>) -> Option<(f64, f64)> {
        // M depends on q only through c2 and is affine in it, so the smallest
        // eigenvalue is concave and the largest convex in c2: both extremes
        // sit at c2 = +-1.
        let ends = [0.0, PI].map(|q2| {
            let m = self.inertia(&DVector::from_vec(vec![0.0, q2]), theta_m);
            mathx::sym_eigenvalues(&m).ok()
        });
        let [Some(a), Some(b)] = ends else { return None };
        Some((a[0].min(b[0]), a[1].max(b[1])))
    }
}

/// Link masses, lengths, centre-of-mass offsets and inertias of the two-link arm.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub lc1: f64,
    pub lc2: f64,
    pub i1: f64,
    pub i2: f64,
    pub g: f64,
}

impl PhysicalParams {
    /// Uniform rods: `lc = l/2`, `I = m l^2 / 12`.
    pub fn uniform_rods(m1: f64, m2: f64, l1: f64, l2: f64, g: f64) -> Self {
        Self { m1, m2, l1, l2, lc1: 0.5 * l1, lc2: 0.5 * l2, i1: m1 * l1 * l1 / 12.0, i2: m2 * l2 * l2 / 12.0, g }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("l1", self.l1),
            ("l2", self.l2),
            ("lc1", self.lc1),
            ("lc2", self.lc2),
            ("i1", self.i1),
            ("i2", self.i2),
            ("g", self.g),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("physical parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `[delta_1 .. delta_5]` split into inertia and potential parts.
    pub fn theta(&self) -> ThetaVector {
        let Self { m1, m2, l1, lc1, lc2, i1, i2, g, .. } = *self;
        let d1 = (l1 * l1 + lc2 * lc2) * m2 + lc1 * lc1 * m1 + i1 + i2;
        let d2 = l1 * lc2 * m2;
        let d3 = lc2 * lc2 * m2 + i2;
        let d4 = m2 * lc2 * g;
        let d5 = (m1 * lc1 + m2 * l1) * g;
        ThetaVector::new(DVector::from_vec(vec![d1, d2, d3]), DVector::from_vec(vec![d4, d5]))
    }
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::uniform_rods(2.0, 1.0, 0.3, 0.2, 9.81)
    }
}

/// Stacked parameters `theta = [theta_M; theta_U]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector {
    pub m: DVector<f64>,
    pub u: DVector<f64>,
}

impl ThetaVector {
    pub fn new(m: DVector<f64>, u: DVector<f64>) -> Self {
        Self { m, u }
    }

    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(self.m.len() + self.u.len(), self.m.iter().chain(self.u.iter()).copied())
    }

    pub fn split(theta: &DVector<f64>, inertia_terms: usize) -> Self {
        let m = theta.rows(0, inertia_terms).into_owned();
        let u = theta.rows(inertia_terms, theta.len() - inertia_terms).into_owned();
        Self { m, u }
    }
}

/// Known entrywise bounds on the potential parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBounds {
    pub theta_bar: DVector<f64>,
}

impl ThetaBounds {
    pub fn new(theta_bar: DVector<f64>) -> Result<Self> {
        if theta_bar.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::invalid("ThetaBounds: bounds must be positive"));
        }
        Ok(Self { theta_bar })
    }

    pub fn contains(&self, theta_u: &DVector<f64>) -> bool {
        theta_u.len() == self.theta_bar.len() && theta_u.iter().zip(self.theta_bar.iter()).all(|(t, b)| t.abs() <= *b)
    }
}

/// Coulomb friction `tau_f = c .* sign(qd)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionModel {
    pub coulomb: DVector<f64>,
}

impl FrictionModel {
    pub fn new(coulomb: DVector<f64>) -> Result<Self> {
        if coulomb.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::invalid("FrictionModel: coefficients must be nonnegative"));
        }
        Ok(Self { coulomb })
    }

    pub fn none(n: usize) -> Self {
        Self { coulomb: DVector::zeros(n) }
    }

    pub fn torque(&self, qd: &DVector<f64>) -> DVector<f64> {
        self.coulomb.zip_map(qd, |c, v| c * sign(v))
    }
}

impl Default for FrictionModel {
    fn default() -> Self {
        Self { coulomb: DVector::from_vec(vec![0.5, 0.4]) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wave {
    Sin,
    Cos,
}

impl Wave {
    fn eval(self, x: f64) -> f64 {
        match self {
            Wave::Sin => x.sin(),
            Wave::Cos => x.cos(),
        }
    }
}

/// Deterministic sinusoidal measurement noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub amplitude: f64,
    pub frequency: f64,
    pub position: Vec<Wave>,
    pub velocity: Vec<Wave>,
}

impl NoiseModel {
    /// `(n_q, n_qd)` at time `t`.
    pub fn sample(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let x = self.frequency * t;
        let nq = DVector::from_iterator(self.position.len(), self.position.iter().map(|w| self.amplitude * w.eval(x)));
        let nqd = DVector::from_iterator(self.velocity.len(), self.velocity.iter().map(|w| self.amplitude * w.eval(x)));
        (nq, nqd)
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            amplitude: 0.005,
            frequency: 100.0,
            position: vec![Wave::Sin, Wave::Cos],
            velocity: vec![Wave::Sin, Wave::Sin],
        }
    }
}

/// A system together with its true parameters.
#[derive(Clone)]
pub struct Plant {
    pub system: SystemRef,
    pub theta: ThetaVector,
}

impl std::fmt::Debug for Plant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Plant").field("dof", &self.system.dof()).field("theta", &self.theta).finish()
    }
}

impl Plant {
    pub fn new(system: SystemRef, theta: ThetaVector) -> Result<Self> {
        if theta.m.len() != system.inertia_terms() || theta.u.len() != system.potential_terms() {
            return Err(Error::invalid("Plant: parameter vector does not match system bases"));
        }
        Ok(Self { system, theta })
    }

    pub fn two_link(params: &PhysicalParams) -> Result<Self> {
        params.validate()?;
        Self::new(Arc::new(TwoLinkArm), params.theta())
    }

    pub fn dof(&self) -> usize {
        self.system.dof()
    }

    pub fn inertia(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.system.inertia(q, &self.theta.m)
    }

    pub fn coriolis(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DMatrix<f64> {
        self.system.coriolis(q, qd, &self.theta.m)
    }

    pub fn psi(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.system.psi(q)
    }

    pub fn gravity(&self, q: &DVector<f64>) -> DVector<f64> {
        self.system.psi(q) * &self.theta.u
    }

    pub fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        self.system.potential_basis(q).dot(&self.theta.u)
    }

    pub fn total_energy(&self, q: &DVector<f64>, qd: &DVector<f64>) -> f64 {
        0.5 * qd.dot(&(self.inertia(q) * qd)) + self.potential_energy(q)
    }

    pub fn inertia_bounds(&self) -> Option<(f64, f64)> {
        self.system.inertia_bounds(&self.theta.m)
    }

    /// `qdd = M^-1 (tau - tau_f - C qd - g)`.
    pub fn forward_dynamics(
        &self,
        q: &DVector<f64>,
        qd: &DVector<f64>,
        tau: &DVector<f64>,
        tau_f: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let m = self.inertia(q);
        let rhs = tau - tau_f - self.coriolis(q, qd) * qd - self.gravity(q);
        let chol = m.cholesky().ok_or_else(|| Error::degenerate("inertia matrix is not positive definite"))?;
        Ok(chol.solve(&rhs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn plant() -> Plant {
        Plant::two_link(&PhysicalParams::default()).unwrap()
    }

    /// Direct delta formulas for the default uniform-rod arm.
    fn deltas() -> [f64; 5] {
        let (m1, m2, l1, l2, g) = (2.0, 1.0, 0.3, 0.2, 9.81);
        let (lc1, lc2) = (l1 / 2.0, l2 / 2.0);
        let (i1, i2) = (m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0);
        [
            (l1 * l1 + lc2 * lc2) * m2 + lc1 * lc1 * m1 + i1 + i2,
            l1 * lc2 * m2,
            lc2 * lc2 * m2 + i2,
            m2 * lc2 * g,
            (m1 * lc1 + m2 * l1) * g,
        ]
    }

    #[test]
    fn inertia_at_reference_poses() {
        let p = plant();
        let m0 = p.inertia(&v(&[0.3, 0.0]));
        let expected = [0.223_333_333_333, 0.043_333_333_333, 0.043_333_333_333, 0.013_333_333_333];
        for (a, b) in m0.transpose().iter().zip(expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let d = deltas();
        let mpi = p.inertia(&v(&[0.0, PI]));
        assert!((mpi[(0, 0)] - (d[0] - 2.0 * d[1])).abs() < 1e-12);
        assert!((mpi[(0, 1)] - (d[2] - d[1])).abs() < 1e-12);
        assert!((mpi[(1, 1)] - d[2]).abs() < 1e-12);
        assert!((mpi[(0, 0)] - 0.103_333_333_333).abs() < 1e-9);
        assert!((mpi[(0, 1)] + 0.016_666_666_667).abs() < 1e-9);
    }

    #[test]
    fn inertia_matches_closed_form() {
        let p = plant();
        let d = deltas();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let q = v(&[rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]);
            let c2 = q[1].cos();
            let m = p.inertia(&q);
            let closed =
                DMatrix::from_row_slice(2, 2, &[d[0] + 2.0 * d[1] * c2, d[2] + d[1] * c2, d[2] + d[1] * c2, d[2]]);
            assert!((m - closed).amax() < 1e-14);
        }
    }

    #[test]
    fn coriolis_matches_closed_form() {
        let p = plant();
        let d2 = deltas()[1];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let q = v(&[rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]);
            let qd = v(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            let s2 = q[1].sin();
            let closed =
                DMatrix::from_row_slice(2, 2, &[-d2 * s2 * qd[1], -d2 * s2 * (qd[0] + qd[1]), d2 * s2 * qd[0], 0.0]);
            assert!((p.coriolis(&q, &qd) - closed).amax() < 1e-14);
        }
    }

    #[test]
    fn coriolis_zero_cases() {
        let p = plant();
        assert_eq!(p.coriolis(&v(&[1.0, 2.0]), &v(&[0.0, 0.0])).amax(), 0.0);
        assert_eq!(p.coriolis(&v(&[1.0, 0.0]), &v(&[1.0, -2.0])).amax(), 0.0);
    }

    #[test]
    fn skew_symmetry_against_finite_differences() {
        let p = plant();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-6;
        for _ in 0..1000 {
            let q = v(&[rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)]);
            let qd = v(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            let x = v(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            let mdot = (p.inertia(&(&q + &qd * h)) - p.inertia(&(&q - &qd * h))) / (2.0 * h);
            let n = mdot - p.coriolis(&q, &qd) * 2.0;
            let val = x.dot(&(n * &x));
            assert!(val.abs() <= 1e-5 * x.norm_squared() * qd.norm().max(1.0), "{val}");
        }
    }

    #[test]
    fn gravity_examples() {
        let p = plant();
        assert_eq!(p.gravity(&v(&[0.0, 0.0])).amax(), 0.0);
        let q = v(&[PI / 2.0, 0.0]);
        let psi = p.psi(&q);
        assert!((psi - DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0])).amax() < 1e-15);
        let g = p.gravity(&q);
        assert!((g[0] - 6.867).abs() < 1e-12 && (g[1] - 0.981).abs() < 1e-12);
    }

    #[test]
    fn gravity_is_gradient_of_potential() {
        let p = plant();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = 1e-6;
        for _ in 0..100 {
            let q = v(&[rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]);
            let g = p.gravity(&q);
            for i in 0..2 {
                let mut e = DVector::zeros(2);
                e[i] = h;
                let fd = (p.potential_energy(&(&q + &e)) - p.potential_energy(&(&q - &e))) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn energy_bases() {
        let p = plant();
        let sys = &p.system;
        assert_eq!(sys.potential_basis(&v(&[0.0, 0.0])), v(&[-1.0, -1.0]));
        assert_eq!(sys.kinetic_basis(&v(&[0.4, 1.0]), &v(&[0.0, 0.0])), v(&[0.0, 0.0, 0.0]));
        assert!((p.total_energy(&v(&[0.0, 0.0]), &v(&[0.0, 0.0])) + 6.867).abs() < 1e-12);
        let d = deltas();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let q = v(&[rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]);
            let qd = v(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            let e = p.total_energy(&q, &qd);
            assert!((e - sys.omega(&q, &qd).dot(&p.theta.stacked())).abs() < 1e-12);
            let u = p.total_energy(&q, &DVector::zeros(2));
            assert!((u - (-d[3] * (q[0] + q[1]).cos() - d[4] * q[0].cos())).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_form_gradient_matches_closed_form_and_fd() {
        let sys = TwoLinkArm;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-6;
        for _ in 0..100 {
            let q = v(&[rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]);
            let qd = v(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            let g2 = sys.quadratic_form_gradient(1, &q, &qd);
            let closed = -2.0 * q[1].sin() * qd[0] * (qd[0] + qd[1]);
            assert!(g2[0].abs() < 1e-15 && (g2[1] - closed).abs() < 1e-12);
            for k in 0..3 {
                let g = sys.quadratic_form_gradient(k, &q, &qd);
                for i in 0..2 {
                    let mut e = DVector::zeros(2);
                    e[i] = h;
                    let f = |qq: &DVector<f64>| qd.dot(&(sys.inertia_basis(k, qq) * &qd));
                    let fd = (f(&(&q + &e)) - f(&(&q - &e))) / (2.0 * h);
                    assert!((fd - g[i]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn forward_dynamics_examples() {
        let p = plant();
        let zero = DVector::zeros(2);
        let q = v(&[0.7, -1.1]);
        let qdd = p.forward_dynamics(&q, &zero, &p.gravity(&q), &zero).unwrap();
        assert!(qdd.amax() < 1e-12);
        let qdd = p.forward_dynamics(&zero, &zero, &zero, &zero).unwrap();
        assert_eq!(qdd.amax(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let q = v(&[rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]);
            let qd = v(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            let tau = v(&[rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]);
            let tf = v(&[rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]);
            let qdd = p.forward_dynamics(&q, &qd, &tau, &tf).unwrap();
            let resid = p.inertia(&q) * qdd + p.coriolis(&q, &qd) * &qd + p.gravity(&q) - &tau + &tf;
            assert!(resid.amax() < 1e-10);
        }
    }

    #[test]
    fn singular_inertia_is_reported() {
        let p = Plant::new(Arc::new(TwoLinkArm), ThetaVector::new(v(&[0.0, 0.0, 0.0]), v(&[1.0, 1.0]))).unwrap();
        let z = DVector::zeros(2);
        assert!(matches!(p.forward_dynamics(&z, &z, &z, &z), Err(Error::NumericalDegeneracy { .. })));
    }

    #[test]
    fn friction_and_noise_models() {
        let f = FrictionModel::default();
        assert_eq!(f.torque(&v(&[0.0, 0.0])), v(&[0.0, 0.0]));
        assert_eq!(f.torque(&v(&[-1.0, 2.0])), v(&[-0.5, 0.4]));
        let (nq, nqd) = NoiseModel::default().sample(0.0);
        assert_eq!(nq, v(&[0.0, 0.005]));
        assert_eq!(nqd, v(&[0.0, 0.0]));
        let noise = NoiseModel::default();
        for k in 0..1000 {
            let (a, b) = noise.sample(k as f64 * 0.0137);
            assert!(a.amax() <= 0.005 && b.amax() <= 0.005);
        }
        assert!(FrictionModel::new(v(&[-0.1, 0.0])).is_err());
    }

    #[test]
    fn inertia_bounds_enclose_random_samples() {
        let p = plant();
        let (lo, hi) = p.inertia_bounds().unwrap();
        assert!(lo > 0.0 && hi.is_finite());
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10_000 {
            let q = v(&[rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)]);
            let ev = mathx::sym_eigenvalues(&p.inertia(&q)).unwrap();
            assert!(ev[0] >= lo - 1e-12 && ev[1] <= hi + 1e-12);
        }
    }

    #[test]
    fn decomposition_is_exact() {
        let p = plant();
        let d = deltas();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let q = v(&[rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]);
            let g = p.gravity(&q);
            let closed = v(&[d[3] * (q[0] + q[1]).sin() + d[4] * q[0].sin(), d[3] * (q[0] + q[1]).sin()]);
            assert!((g - closed).amax() <= 1e-14);
            assert!(p.psi(&q).norm() <= 2.0);
        }
    }

    #[test]
    fn theta_bounds_and_params() {
        let th = PhysicalParams::default().theta();
        let b = ThetaBounds::new(v(&[1.0, 6.0])).unwrap();
        assert!(b.contains(&th.u));
        assert!(!ThetaBounds::new(v(&[0.5, 6.0])).unwrap().contains(&th.u));
        assert!(ThetaBounds::new(v(&[0.0, 1.0])).is_err());
        let bad = PhysicalParams { m1: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let split = ThetaVector::split(&th.stacked(), 3);
        assert_eq!(split, th);
    }
}
