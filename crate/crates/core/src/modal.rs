//! Eigenstructure of the swing model and the oscillation-orbit geometry.
//!
//! `A` has the block form `[0, ω_s I; −½H⁻¹B_a, 0]`. Writing `K = ½H⁻¹B_a`,
//! every eigenpair of `A` is `λ = ±j√(ω_s μ)`, `q = [v; λ v / ω_s]` where
//! `K v = μ v`. `K` is similar to the symmetric `½H^{-½} B_a H^{-½}`, so the
//! decomposition is obtained from a symmetric eigensolver and then assembled
//! into the complex `M`, `Λ` used by the orbit formulas. Each eigenvector is
//! normalized to unit Euclidean norm with its first nonzero component real
//! and positive; conjugate pairs occupy adjacent columns `(2k, 2k+1)`,
//! ordered by ascending frequency.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ReducedModel, StateVector};

pub type C64 = Complex<f64>;

/// Eigenvalues closer than this (rad/s) are treated as repeated.
pub const DISTINCT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePair {
    pub index: usize,
    /// Imaginary part of the positive-frequency eigenvalue, rad/s.
    pub omega: f64,
    pub hz: f64,
    /// Per-machine participation, normalized so the largest is 1.
    pub participation: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ModalBasis {
    pub a: DMatrix<f64>,
    pub m: DMatrix<C64>,
    pub m_inv: DMatrix<C64>,
    pub lambda: DVector<C64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
    /// `D + Aᵀ E A`, the quadratic form of the switching function.
    pub d_ate_a: DMatrix<f64>,
    pub modes: Vec<ModePair>,
}

fn inf_norm_c(m: &DMatrix<C64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|z| z.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn real_part_checked(z: &DMatrix<C64>, what: &str) -> Result<DMatrix<f64>> {
    let re = z.map(|c| c.re);
    let im = z.map(|c| c.im).amax();
    if im > 1e-9 * re.amax().max(1.0) {
        return Err(Error::DegenerateSpectrum(format!(
            "{what} has imaginary residue {im:e}"
        )));
    }
    Ok(re)
}

/// Eigen-analysis of the model's state matrix.
pub fn analyze(model: &ReducedModel) -> Result<ModalBasis> {
    let n = model.n_machines();
    let omega_s = model.omega_s;
    let hsq: DVector<f64> = model.h.map(|h| 1.0 / h.sqrt());

    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = 0.25 * (model.ba[(i, j)] + model.ba[(j, i)]) * hsq[i] * hsq[j];
        }
    }
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut m = DMatrix::<C64>::zeros(2 * n, 2 * n);
    let mut lambda = DVector::<C64>::zeros(2 * n);
    let mut prev_omega: Option<f64> = None;
    for (k, &idx) in order.iter().enumerate() {
        let mu = eig.eigenvalues[idx];
        if !(mu > 0.0) {
            return Err(Error::DegenerateSpectrum(format!(
                "stiffness eigenvalue {mu:e} is not positive; eigenvalues are not purely imaginary"
            )));
        }
        let omega = (omega_s * mu).sqrt();
        if omega < DISTINCT_TOL {
            return Err(Error::DegenerateSpectrum(format!(
                "zero eigenvalue ({omega:e} rad/s)"
            )));
        }
        if let Some(p) = prev_omega {
            if omega - p < DISTINCT_TOL {
                return Err(Error::DegenerateSpectrum(format!(
                    "repeated eigenvalue near j{omega:.9} rad/s"
                )));
            }
        }
        prev_omega = Some(omega);

        let mut v: DVector<f64> = eig.eigenvectors.column(idx).component_mul(&hsq);
        let vmax = v.amax();
        if let Some(first) = v.iter().position(|x| x.abs() > 1e-12 * vmax) {
            if v[first] < 0.0 {
                v.neg_mut();
            }
        }
        let norm = v.norm() * (1.0 + (omega / omega_s).powi(2)).sqrt();
        let lam = C64::new(0.0, omega);
        for i in 0..n {
            let angle = C64::new(v[i] / norm, 0.0);
            let speed = angle * lam / omega_s;
            m[(i, 2 * k)] = angle;
            m[(n + i, 2 * k)] = speed;
            m[(i, 2 * k + 1)] = angle.conj();
            m[(n + i, 2 * k + 1)] = speed.conj();
        }
        lambda[2 * k] = lam;
        lambda[2 * k + 1] = lam.conj();
    }

    let a_c = model.a.map(|x| C64::new(x, 0.0));
    let resid = &a_c * &m - &m * DMatrix::from_diagonal(&lambda);
    let a_norm = inf_norm(&model.a);
    if inf_norm_c(&resid) >= 1e-9 * a_norm {
        return Err(Error::DegenerateSpectrum(format!(
            "eigen-residual {:e} exceeds tolerance",
            inf_norm_c(&resid)
        )));
    }

    let m_inv = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateSpectrum("eigenvector matrix is singular".into()))?;
    let m_inv_h = m_inv.adjoint();
    let d = real_part_checked(&(&m_inv_h * &m_inv), "D")?;
    let inv_l2 = lambda.map(|l| C64::new(1.0 / l.norm_sqr(), 0.0));
    let e = real_part_checked(&(&m_inv_h * DMatrix::from_diagonal(&inv_l2) * &m_inv), "E")?;

    let modes = (0..n)
        .map(|k| {
            let mut part: Vec<f64> = (0..n)
                .map(|i| {
                    let c = 2 * k;
                    (m[(i, c)] * m_inv[(c, i)]).norm() + (m[(n + i, c)] * m_inv[(c, n + i)]).norm()
                })
                .collect();
            let pmax = part.iter().cloned().fold(0.0, f64::max);
            if pmax > 0.0 {
                part.iter_mut().for_each(|p| *p /= pmax);
            }
            let omega = lambda[2 * k].im;
            ModePair {
                index: k,
                omega,
                hz: omega / (2.0 * std::f64::consts::PI),
                participation: part,
            }
        })
        .collect();

    let d_ate_a = &d + model.a.transpose() * &e * &model.a;
    Ok(ModalBasis {
        a: model.a.clone(),
        m,
        m_inv,
        lambda,
        d,
        e,
        d_ate_a,
        modes,
    })
}

fn to_complex(x: &DVector<f64>) -> DVector<C64> {
    x.map(|v| C64::new(v, 0.0))
}

pub(crate) fn quad(q: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    (y.transpose() * q * y)[0]
}

impl ModalBasis {
    pub fn n_states(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.modes.len()
    }

    /// Modal coordinates `z = M⁻¹ (x − center)`.
    pub fn modal_coords(&self, center: &StateVector, x: &StateVector) -> DVector<C64> {
        &self.m_inv * to_complex(&(x - center))
    }

    /// Maps modal coordinates back to a real state offset.
    pub fn from_modal(&self, z: &DVector<C64>) -> DVector<f64> {
        (&self.m * z).map(|c| c.re)
    }

    /// Squared modal amplitude per conjugate pair.
    pub fn pair_excitation(&self, center: &StateVector, x: &StateVector) -> Vec<f64> {
        let z = self.modal_coords(center, x);
        (0..self.n_pairs())
            .map(|k| z[2 * k].norm_sqr() + z[2 * k + 1].norm_sqr())
            .collect()
    }

    /// The state `center + Π (x − center)` where Π keeps only the listed pairs.
    pub fn project(&self, center: &StateVector, x: &StateVector, pairs: &[usize]) -> StateVector {
        let mut z = self.modal_coords(center, x);
        for k in 0..self.n_pairs() {
            if !pairs.contains(&k) {
                z[2 * k] = C64::new(0.0, 0.0);
                z[2 * k + 1] = C64::new(0.0, 0.0);
            }
        }
        center + self.from_modal(&z)
    }

    /// Free orbit about `center` passing through `x_start` at relative time 0.
    pub fn orbit(&self, center: &StateVector, x_start: &StateVector) -> Orbit<'_> {
        Orbit {
            basis: self,
            center: center.clone(),
            z0: self.modal_coords(center, x_start),
        }
    }

    /// Closed-form state after `dt` seconds of dynamics centered at `center`.
    pub fn propagate(
        &self,
        center: &StateVector,
        x_start: &StateVector,
        dt: f64,
    ) -> Result<StateVector> {
        let n = self.n_states();
        if center.len() != n {
            return Err(Error::dim("propagate center", n, center.len()));
        }
        if x_start.len() != n {
            return Err(Error::dim("propagate state", n, x_start.len()));
        }
        if !(dt >= 0.0) {
            return Err(Error::Input(format!(
                "propagate requires dt >= 0, got {dt}"
            )));
        }
        Ok(self.orbit(center, x_start).at(dt))
    }

    /// `(x − c)ᵀ D (x − c) + ẋᵀ E ẋ` with `ẋ = A (x − c)`.
    pub fn orbit_value(&self, center: &StateVector, x: &StateVector) -> f64 {
        let y = x - center;
        let xdot = &self.a * &y;
        quad(&self.d, &y) + quad(&self.e, &xdot)
    }
}

/// A free trajectory of the undamped model, evaluated in closed form.
#[derive(Debug, Clone)]
pub struct Orbit<'a> {
    basis: &'a ModalBasis,
    center: StateVector,
    z0: DVector<C64>,
}

impl Orbit<'_> {
    pub fn center(&self) -> &StateVector {
        &self.center
    }

    pub fn modal_at(&self, dt: f64) -> DVector<C64> {
        let mut z = self.z0.clone();
        for (zi, li) in z.iter_mut().zip(self.basis.lambda.iter()) {
            *zi *= (li * dt).exp();
        }
        z
    }

    pub fn at(&self, dt: f64) -> StateVector {
        &self.center + self.basis.from_modal(&self.modal_at(dt))
    }
}
