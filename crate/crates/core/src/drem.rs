//! Dynamic regressor extension and mixing.
//!
//! Turns a regression `y = Omega theta` into `Y = Delta theta` with a scalar
//! factor `Delta`, either through least squares with forgetting followed by
//! mixing with `Phi = I - z f0 F`, or through Kreisselmeier filtering with
//! `Y = adj(Phi2) Phi1`, `Delta = det(Phi2)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mathx;
use crate::regression::RegressionPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DreKind {
    LeastSquares,
    Kreisselmeier,
}

impl FromStr for DreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "least_squares" => Ok(Self::LeastSquares),
            "kreisselmeier" => Ok(Self::Kreisselmeier),
            other => Err(Error::invalid(format!("unknown dre `{other}`"))),
        }
    }
}

impl fmt::Display for DreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LeastSquares => "least_squares",
            Self::Kreisselmeier => "kreisselmeier",
        })
    }
}

/// Norm used in the forgetting factor `beta = beta0 (1 - |F| / xi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixNorm {
    #[default]
    Spectral,
    Frobenius,
}

impl MatrixNorm {
    pub fn eval(self, a: &DMatrix<f64>) -> Result<f64> {
        match self {
            Self::Spectral => mathx::spectral_norm(a),
            Self::Frobenius => Ok(a.norm()),
        }
    }
}

impl FromStr for MatrixNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Self::Spectral),
            "frobenius" => Ok(Self::Frobenius),
            other => Err(Error::invalid(format!("unknown matrix norm `{other}`"))),
        }
    }
}

impl fmt::Display for MatrixNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Spectral => "spectral",
            Self::Frobenius => "frobenius",
        })
    }
}

/// `Y = Delta theta`; `y_u` holds the last `j` entries of `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedRegression {
    pub y: DVector<f64>,
    pub delta: f64,
    pub y_u: DVector<f64>,
}

impl MixedRegression {
    pub fn new(y: DVector<f64>, delta: f64, potential_terms: usize) -> Self {
        let start = y.len() - potential_terms;
        let y_u = y.rows(start, potential_terms).into_owned();
        Self { y, delta, y_u }
    }

    /// `|Y - Delta theta| / (1 + |Delta| |theta|)`.
    pub fn identity_error(&self, theta: &DVector<f64>) -> f64 {
        (&self.y - theta * self.delta).norm() / (1.0 + self.delta.abs() * theta.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsDreParams {
    pub alpha: f64,
    pub beta0: f64,
    pub f0: f64,
    pub xi: f64,
    pub rho0: DVector<f64>,
    pub norm: MatrixNorm,
}

impl LsDreParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.beta0 > 0.0) || !(self.f0 > 0.0) {
            return Err(Error::invalid("least-squares DRE: alpha, beta0 and f0 must be positive"));
        }
        if !(self.xi >= 1.0 / self.f0) {
            return Err(Error::invalid(format!("least-squares DRE: xi = {} must be at least 1/f0", self.xi)));
        }
        Ok(())
    }
}

/// Least-squares extension with forgetting factor.
#[derive(Debug, Clone)]
pub struct LsDreState {
    pub rho_hat: DVector<f64>,
    pub f: DMatrix<f64>,
    pub z: f64,
    params: LsDreParams,
}

impl LsDreState {
    pub fn new(params: LsDreParams) -> Result<Self> {
        params.validate()?;
        let l = params.rho0.len();
        Ok(Self { rho_hat: params.rho0.clone(), f: DMatrix::identity(l, l) / params.f0, z: 1.0, params })
    }

    pub fn params(&self) -> &LsDreParams {
        &self.params
    }

    /// Current forgetting factor.
    pub fn beta(&self) -> Result<f64> {
        Ok(self.params.beta0 * (1.0 - self.params.norm.eval(&self.f)? / self.params.xi))
    }

    /// One explicit step of the estimator, gain and scaling filters.
    ///
    /// The data and forgetting parts of the gain update are applied as two
    /// first-order factors, `F+ = (1 + dt beta)(I - dt alpha F Omega^T Omega) F`
    /// and `z+ = z / (1 + dt beta)`. This agrees with plain Euler up to
    /// `O(dt^2)` and keeps `rho_hat - theta` and `z F` on the same linear
    /// recursion, so the mixed regression stays exact between steps.
    pub fn step(&mut self, pair: &RegressionPair, dt: f64) -> Result<()> {
        let l = self.rho_hat.len();
        if pair.omega.ncols() != l || pair.omega.nrows() != pair.y.len() {
            return Err(Error::invalid("ls_step: regression pair dimensions do not match the estimator"));
        }
        let alpha = self.params.alpha;
        let beta = self.beta()?;
        let growth = 1.0 + dt * beta;
        if !(growth > 0.0) {
            return Err(Error::degenerate(format!("forgetting factor {beta:e} too negative for dt = {dt:e}")));
        }
        let omega = &pair.omega;
        let err = &pair.y - omega * &self.rho_hat;
        let f_ot = &self.f * omega.transpose();
        let rho_rate = &f_ot * err * alpha;
        let data = &self.f - (&f_ot * (omega * &self.f)) * (alpha * dt);
        self.rho_hat += rho_rate * dt;
        self.f = mathx::symmetrize(&(data * growth));
        self.z /= growth;
        let lo = mathx::min_eig_sym(&self.f)?;
        if !(lo > 0.0) {
            return Err(Error::degenerate(format!(
                "least-squares gain F lost positive definiteness (min eig {lo:e}); reduce dt or alpha"
            )));
        }
        Ok(())
    }

    /// `Phi = I - z f0 F`.
    pub fn mixing_matrix(&self) -> DMatrix<f64> {
        let l = self.rho_hat.len();
        DMatrix::identity(l, l) - &self.f * (self.z * self.params.f0)
    }

    /// Vector the mixing step multiplies: `rho_hat - z f0 F rho0`.
    pub fn mixing_vector(&self) -> DVector<f64> {
        &self.rho_hat - &self.f * &self.params.rho0 * (self.z * self.params.f0)
    }

    /// Mixing by Cramer's rule: `Y_j = det(Phi with column j replaced)`.
    pub fn mix(&self, potential_terms: usize) -> Result<MixedRegression> {
        let phi = self.mixing_matrix();
        let delta = mathx::det(&phi)?;
        let y = mathx::cramer_products(&phi, &self.mixing_vector())?;
        Ok(MixedRegression::new(y, delta, potential_terms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KreisParams {
    pub lambda2: f64,
    pub lambda3: f64,
}

impl KreisParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda2 > 0.0) || !(self.lambda3 > 0.0) {
            return Err(Error::invalid("Kreisselmeier DRE: lambda2 and lambda3 must be positive"));
        }
        Ok(())
    }
}

/// Kreisselmeier extension: `Phi1' = -l2 Phi1 + l3 Omega^T y`,
/// `Phi2' = -l2 Phi2 + l3 Omega^T Omega`.
#[derive(Debug, Clone)]
pub struct KreisState {
    pub phi1: DVector<f64>,
    pub phi2: DMatrix<f64>,
    params: KreisParams,
}

impl KreisState {
    pub fn new(params: KreisParams, l: usize) -> Result<Self> {
        params.validate()?;
        Ok(Self { phi1: DVector::zeros(l), phi2: DMatrix::zeros(l, l), params })
    }

    pub fn params(&self) -> KreisParams {
        self.params
    }

    pub fn step(&mut self, pair: &RegressionPair, dt: f64) -> Result<()> {
        let l = self.phi1.len();
        if pair.omega.ncols() != l || pair.omega.nrows() != pair.y.len() {
            return Err(Error::invalid("kreis_step: regression pair dimensions do not match the filter"));
        }
        let KreisParams { lambda2, lambda3 } = self.params;
        let ot = pair.omega.transpose();
        let r1 = &ot * &pair.y * lambda3 - &self.phi1 * lambda2;
        let r2 = &ot * &pair.omega * lambda3 - &self.phi2 * lambda2;
        self.phi1 += r1 * dt;
        self.phi2 = mathx::symmetrize(&(&self.phi2 + r2 * dt));
        Ok(())
    }

    pub fn mix(&self, potential_terms: usize) -> Result<MixedRegression> {
        let delta = mathx::det(&self.phi2)?;
        let y = mathx::cramer_products(&self.phi2, &self.phi1)?;
        Ok(MixedRegression::new(y, delta, potential_terms))
    }

    pub fn min_eig_phi2(&self) -> Result<f64> {
        mathx::min_eig_sym(&self.phi2)
    }
}

/// Either extension behind one interface.
#[derive(Debug, Clone)]
pub enum Dre {
    LeastSquares(LsDreState),
    Kreisselmeier(KreisState),
}

impl Dre {
    pub fn step(&mut self, pair: &RegressionPair, dt: f64) -> Result<()> {
        match self {
            Self::LeastSquares(s) => s.step(pair, dt),
            Self::Kreisselmeier(s) => s.step(pair, dt),
        }
    }

    pub fn mix(&self, potential_terms: usize) -> Result<MixedRegression> {
        match self {
            Self::LeastSquares(s) => s.mix(potential_terms),
            Self::Kreisselmeier(s) => s.mix(potential_terms),
        }
    }
}

/// Trapezoidal `int_{t1}^{t1+T} Omega^T Omega ds` over time-stamped samples.
///
/// The smallest eigenvalue of the result is the excitation level `mu` of the
/// window.
pub fn excitation_gramian<'a, I>(samples: I, t1: f64, t_ie: f64) -> Result<DMatrix<f64>>
where
    I: IntoIterator<Item = (f64, &'a DMatrix<f64>)>,
{
    if !(t_ie > 0.0) {
        return Err(Error::invalid("excitation_gramian: window length must be positive"));
    }
    let t2 = t1 + t_ie;
    let eps = 1e-9 * (1.0 + t2.abs());
    let mut first_t = None;
    let mut last_t = f64::NEG_INFINITY;
    let mut prev: Option<(f64, DMatrix<f64>)> = None;
    let mut acc: Option<DMatrix<f64>> = None;
    for (t, omega) in samples {
        first_t.get_or_insert(t);
        last_t = t;
        if t < t1 - eps || t > t2 + eps {
            continue;
        }
        let g = omega.transpose() * omega;
        if let Some((tp, gp)) = prev.take() {
            let inc = (&gp + &g) * (0.5 * (t - tp));
            acc = Some(match acc {
                Some(a) => a + inc,
                None => inc,
            });
        } else if acc.is_none() {
            acc = Some(DMatrix::zeros(g.nrows(), g.ncols()));
        }
        prev = Some((t, g));
    }
    let Some(first_t) = first_t else {
        return Err(Error::invalid("excitation_gramian: empty trace"));
    };
    if t1 < first_t - eps || t2 > last_t + eps {
        return Err(Error::invalid(format!(
            "excitation_gramian: window [{t1}, {t2}] outside trace [{first_t}, {last_t}]"
        )));
    }
    acc.ok_or_else(|| Error::invalid("excitation_gramian: no samples in window"))
}
