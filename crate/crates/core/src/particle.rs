//! Ellipsoid geometry, shape-induced susceptibility, and rigid-rotor
//! kinematics in z-y'-z'' Euler angles.
//!
//! Body axes are labelled `a`, `b`, `c` in order of increasing diameter, so
//! the susceptibility eigenvalues satisfy `chi_a <= chi_b <= chi_c`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::HBAR;
use crate::error::{Error, Result};
use crate::quad;

/// Orientations with `|sin beta|` below this are rejected as chart-singular.
pub const SINGULAR_SIN_BETA: f64 = 1e-6;

/// Diameters closer than this (relative) are treated as equal.
const DEGENERATE_REL: f64 = 1e-12;

/// Geometry and material of an ellipsoidal dielectric, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleSpec {
    /// Principal diameters `(l_a, l_b, l_c)` [m], non-decreasing.
    pub diameters: [f64; 3],
    /// Relative permittivity (> 1).
    pub permittivity: f64,
    /// Mass density [kg/m^3].
    pub density: f64,
}

impl ParticleSpec {
    /// Builds a validated spec; the diameters are sorted ascending.
    pub fn new(diameters: [f64; 3], permittivity: f64, density: f64) -> Result<Self> {
        let mut d = diameters;
        d.sort_by(f64::total_cmp);
        let spec = Self {
            diameters: d,
            permittivity,
            density,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.diameters.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "diameters must be positive and finite, got {:?}",
                self.diameters
            )));
        }
        if self.diameters[0] > self.diameters[1] || self.diameters[1] > self.diameters[2] {
            return Err(Error::InvalidInput(format!(
                "diameters must be ordered l_a <= l_b <= l_c, got {:?}",
                self.diameters
            )));
        }
        if !(self.permittivity > 1.0) {
            return Err(Error::InvalidInput(format!(
                "relative permittivity must exceed 1, got {}",
                self.permittivity
            )));
        }
        if !(self.density > 0.0) {
            return Err(Error::InvalidInput(format!(
                "density must be positive, got {}",
                self.density
            )));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        let [a, b, c] = self.diameters;
        std::f64::consts::PI * a * b * c / 6.0
    }
}

/// Derived mechanical and optical properties of a particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleProps {
    pub spec: ParticleSpec,
    pub volume: f64,
    pub mass: f64,
    /// Principal moments of inertia `(I_a, I_b, I_c)` [kg m^2].
    pub inertia: [f64; 3],
    pub depolarization: [f64; 3],
    /// Body-frame susceptibility eigenvalues `(chi_a, chi_b, chi_c)`.
    pub susceptibility: [f64; 3],
}

impl ParticleProps {
    pub fn new(spec: &ParticleSpec) -> Result<Self> {
        spec.validate()?;
        let volume = spec.volume();
        let mass = spec.density * volume;
        let [la, lb, lc] = spec.diameters;
        let inertia = [
            mass * (lb * lb + lc * lc) / 20.0,
            mass * (la * la + lc * lc) / 20.0,
            mass * (la * la + lb * lb) / 20.0,
        ];
        let depolarization = depolarization_factors(spec)?;
        let susceptibility = susceptibility_from(spec.permittivity, &depolarization);
        Ok(Self {
            spec: *spec,
            volume,
            mass,
            inertia,
            depolarization,
            susceptibility,
        })
    }

    /// Body-frame susceptibility tensor `diag(chi_a, chi_b, chi_c)`.
    pub fn chi_body(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.susceptibility))
    }
}

fn snap_degenerate(diameters: [f64; 3]) -> [f64; 3] {
    let mut d = diameters;
    for i in 0..3 {
        for j in (i + 1)..3 {
            if (d[i] - d[j]).abs() <= DEGENERATE_REL * d[i].max(d[j]) {
                d[j] = d[i];
            }
        }
    }
    d
}

/// Shape depolarization factors of an ellipsoid with the given diameters.
///
/// The integral over `s in [0, inf)` is mapped onto `t in [0, pi/2)` via
/// `s = l_max^2 tan^2 t` and evaluated by adaptive Gauss–Kronrod.
pub fn depolarization_factors(spec: &ParticleSpec) -> Result<[f64; 3]> {
    if spec.diameters.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "diameters must be positive, got {:?}",
            spec.diameters
        )));
    }
    let d = snap_degenerate(spec.diameters);
    let scale = d.iter().cloned().fold(0.0, f64::max);
    let u = [d[0] / scale, d[1] / scale, d[2] / scale];
    let sq = [u[0] * u[0], u[1] * u[1], u[2] * u[2]];
    let prefactor = u[0] * u[1] * u[2];
    let mut n = [0.0; 3];
    for l in 0..3 {
        if l > 0 && d[l] == d[l - 1] {
            n[l] = n[l - 1];
            continue;
        }
        let integrand = |t: f64| {
            let tn = t.tan();
            let s = tn * tn;
            let jac = tn * (1.0 + s);
            let root = ((s + sq[0]) * (s + sq[1]) * (s + sq[2])).sqrt();
            prefactor * jac / ((s + sq[l]) * root)
        };
        let (v, _) = quad::integrate(integrand, 0.0, std::f64::consts::FRAC_PI_2, 1e-12, 1e-15);
        n[l] = v;
    }
    Ok(n)
}

fn susceptibility_from(permittivity: f64, n: &[f64; 3]) -> [f64; 3] {
    let e = permittivity - 1.0;
    [
        e / (1.0 + e * n[0]),
        e / (1.0 + e * n[1]),
        e / (1.0 + e * n[2]),
    ]
}

/// Body-frame susceptibility eigenvalues `chi_l = (eps - 1) / (1 + (eps - 1) N_l)`.
pub fn susceptibility_body(spec: &ParticleSpec) -> Result<[f64; 3]> {
    Ok(susceptibility_from(
        spec.permittivity,
        &depolarization_factors(spec)?,
    ))
}

/// Euler angles in the z-y'-z'' convention [rad].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerAngles {
    pub const fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    fn check_regular(&self) -> Result<()> {
        let s = self.beta.sin().abs();
        if s < SINGULAR_SIN_BETA {
            Err(Error::SingularOrientation {
                sin_beta: s,
                threshold: SINGULAR_SIN_BETA,
            })
        } else {
            Ok(())
        }
    }

    /// Euler angles reproducing a given proper rotation matrix.
    ///
    /// On the chart singularity (`sin beta = 0`) the split between `alpha`
    /// and `gamma` is arbitrary and `gamma = 0` is returned.
    pub fn from_matrix(r: &Matrix3<f64>) -> Self {
        let beta = r[(2, 2)].clamp(-1.0, 1.0).acos();
        if beta.sin().abs() > 1e-12 {
            let alpha = r[(1, 2)].atan2(r[(0, 2)]);
            let gamma = r[(2, 1)].atan2(-r[(2, 0)]);
            Self::new(alpha, beta, gamma)
        } else {
            let alpha = r[(1, 0)].atan2(r[(0, 0)]);
            Self::new(alpha, beta, 0.0)
        }
    }
}

/// Canonical momenta conjugate to the Euler angles [kg m^2/s].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RotorMomenta {
    pub p_alpha: f64,
    pub p_beta: f64,
    pub p_gamma: f64,
}

impl RotorMomenta {
    pub const fn new(p_alpha: f64, p_beta: f64, p_gamma: f64) -> Self {
        Self {
            p_alpha,
            p_beta,
            p_gamma,
        }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.p_alpha, self.p_beta, self.p_gamma)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

fn rz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn ry(b: f64) -> Matrix3<f64> {
    let (s, c) = b.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn drz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

fn dry(b: f64) -> Matrix3<f64> {
    let (s, c) = b.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

/// Rotation matrix `R = R_z(alpha) R_y(beta) R_z(gamma)`; body axes are
/// `n_k = R e_k`.
pub fn rotation_matrix(angles: &EulerAngles) -> Matrix3<f64> {
    rz(angles.alpha) * ry(angles.beta) * rz(angles.gamma)
}

/// Partial derivatives of the rotation matrix with respect to
/// `(alpha, beta, gamma)`.
pub fn rotation_derivatives(angles: &EulerAngles) -> [Matrix3<f64>; 3] {
    let (a, b, g) = (angles.alpha, angles.beta, angles.gamma);
    [
        drz(a) * ry(b) * rz(g),
        rz(a) * dry(b) * rz(g),
        rz(a) * ry(b) * drz(g),
    ]
}

/// Lab-frame susceptibility `chi(Omega) = R chi_0 R^T`.
pub fn susceptibility_lab(props: &ParticleProps, angles: &EulerAngles) -> Matrix3<f64> {
    let r = rotation_matrix(angles);
    r * props.chi_body() * r.transpose()
}

/// Lab-frame susceptibility together with its first derivatives with
/// respect to the three Euler angles.
#[derive(Debug, Clone, Copy)]
pub struct ChiJet {
    pub chi: Matrix3<f64>,
    pub d: [Matrix3<f64>; 3],
}

impl ChiJet {
    /// `chi` for orientation `frame * R(angles)`; `frame` is the fixed chart
    /// rotation used when re-anchoring away from `sin beta = 0`.
    pub fn new(props: &ParticleProps, frame: &Matrix3<f64>, angles: &EulerAngles) -> Self {
        let r = frame * rotation_matrix(angles);
        let dr = rotation_derivatives(angles);
        let chi0 = props.chi_body();
        let rc = r * chi0;
        let chi = rc * r.transpose();
        let d = dr.map(|dri| {
            let left = frame * dri * chi0 * r.transpose();
            left + left.transpose()
        });
        Self { chi, d }
    }

    pub fn squared(&self) -> ChiJet {
        let chi2 = self.chi * self.chi;
        let d = self.d.map(|di| di * self.chi + self.chi * di);
        ChiJet { chi: chi2, d }
    }
}

/// Matrix `W(Omega)` mapping Euler rates to body-frame angular velocity.
pub fn body_rate_matrix(angles: &EulerAngles) -> Matrix3<f64> {
    let (sb, cb) = angles.beta.sin_cos();
    let (sg, cg) = angles.gamma.sin_cos();
    Matrix3::new(-sb * cg, sg, 0.0, sb * sg, cg, 0.0, cb, 0.0, 1.0)
}

/// `dW/dbeta` and `dW/dgamma` (`W` does not depend on `alpha`).
fn body_rate_matrix_derivatives(angles: &EulerAngles) -> (Matrix3<f64>, Matrix3<f64>) {
    let (sb, cb) = angles.beta.sin_cos();
    let (sg, cg) = angles.gamma.sin_cos();
    let db = Matrix3::new(-cb * cg, 0.0, 0.0, cb * sg, 0.0, 0.0, -sb, 0.0, 0.0);
    let dg = Matrix3::new(sb * sg, cg, 0.0, sb * cg, -sg, 0.0, 0.0, 0.0, 0.0);
    (db, dg)
}

/// Rotational metric `M(Omega) = W^T diag(I) W`, so that `p_Omega = M Omega_dot`.
pub fn rotational_metric(props: &ParticleProps, angles: &EulerAngles) -> Matrix3<f64> {
    let w = body_rate_matrix(angles);
    w.transpose() * Matrix3::from_diagonal(&Vector3::from(props.inertia)) * w
}

/// Canonical momenta from Euler-angle rates `(alpha_dot, beta_dot, gamma_dot)`.
pub fn momenta_from_rates(
    props: &ParticleProps,
    angles: &EulerAngles,
    rates: &[f64; 3],
) -> RotorMomenta {
    let (sb, cb) = angles.beta.sin_cos();
    let (sg, cg) = angles.gamma.sin_cos();
    let [ia, ib, ic] = props.inertia;
    let [ad, bd, gd] = *rates;
    let cot2 = if sb != 0.0 { cb * cb / (sb * sb) } else { 0.0 };
    let p_alpha = ad * sb * sb * (ia * cg * cg + ib * sg * sg + ic * cot2)
        + bd * (ib - ia) * sb * sg * cg
        + gd * ic * cb;
    let p_beta = ad * (ib - ia) * sb * sg * cg + bd * (ia * sg * sg + ib * cg * cg);
    let p_gamma = ic * (ad * cb + gd);
    RotorMomenta::new(p_alpha, p_beta, p_gamma)
}

/// Body-frame angular momentum `(J_1, J_2, J_3)` from canonical momenta.
pub fn body_angular_momentum(angles: &EulerAngles, p: &RotorMomenta) -> Result<Vector3<f64>> {
    angles.check_regular()?;
    let (sb, cb) = angles.beta.sin_cos();
    let (sg, cg) = angles.gamma.sin_cos();
    let u = (p.p_alpha - p.p_gamma * cb) / sb;
    Ok(Vector3::new(
        -(cg * u - sg * p.p_beta),
        sg * u + cg * p.p_beta,
        p.p_gamma,
    ))
}

/// Canonical momenta from body-frame angular momentum (`p = W^T J`).
pub fn momenta_from_body_angular_momentum(angles: &EulerAngles, j: &Vector3<f64>) -> RotorMomenta {
    RotorMomenta::from_vector(&(body_rate_matrix(angles).transpose() * j))
}

/// Euler-angle rates from canonical momenta.
pub fn rates_from_momenta(
    props: &ParticleProps,
    angles: &EulerAngles,
    p: &RotorMomenta,
) -> Result<[f64; 3]> {
    let j = body_angular_momentum(angles, p)?;
    let w = [
        j[0] / props.inertia[0],
        j[1] / props.inertia[1],
        j[2] / props.inertia[2],
    ];
    let (sb, cb) = angles.beta.sin_cos();
    let (sg, cg) = angles.gamma.sin_cos();
    let ad = (-w[0] * cg + w[1] * sg) / sb;
    let bd = w[0] * sg + w[1] * cg;
    let gd = w[2] - ad * cb;
    Ok([ad, bd, gd])
}

/// Free-particle Hamiltonian: rotational part in canonical Euler momenta
/// plus translational `p^2 / 2m`.
pub fn kinetic_energy(
    props: &ParticleProps,
    angles: &EulerAngles,
    p_rot: &RotorMomenta,
    p_trans: &Vector3<f64>,
) -> Result<f64> {
    let j = body_angular_momentum(angles, p_rot)?;
    let [ia, ib, ic] = props.inertia;
    Ok(j[0] * j[0] / (2.0 * ia)
        + j[1] * j[1] / (2.0 * ib)
        + j[2] * j[2] / (2.0 * ic)
        + p_trans.norm_squared() / (2.0 * props.mass))
}

/// Gradient of the rotational kinetic energy with respect to the Euler
/// angles at fixed canonical momenta.
pub fn kinetic_energy_angle_gradient(
    props: &ParticleProps,
    angles: &EulerAngles,
    p_rot: &RotorMomenta,
) -> Result<[f64; 3]> {
    let j = body_angular_momentum(angles, p_rot)?;
    let rates = Vector3::from(rates_from_momenta(props, angles, p_rot)?);
    let (db, dg) = body_rate_matrix_derivatives(angles);
    Ok([0.0, -(db * rates).dot(&j), -(dg * rates).dot(&j)])
}

/// Inverse rotational metric `d^2 H_0 / dp_Omega dp_Omega`.
pub fn inverse_rotational_metric(
    props: &ParticleProps,
    angles: &EulerAngles,
) -> Result<Matrix3<f64>> {
    angles.check_regular()?;
    rotational_metric(props, angles)
        .try_inverse()
        .ok_or(Error::SingularOrientation {
            sin_beta: angles.beta.sin().abs(),
            threshold: SINGULAR_SIN_BETA,
        })
}

/// Curvature correction to the quantized rotor Hamiltonian. Diagnostic only;
/// it never enters the classical or linearized dynamics.
pub fn quantum_potential(props: &ParticleProps, angles: &EulerAngles) -> Result<f64> {
    angles.check_regular()?;
    let [ia, ib, _] = props.inertia;
    let s2 = angles.beta.sin().powi(2);
    let h2 = HBAR * HBAR / 16.0;
    Ok(-h2 * (1.0 / ia + 1.0 / ib) * (1.0 / s2 + 1.0)
        + h2 * (1.0 / ia - 1.0 / ib) * (5.0 / s2 - 3.0) * (2.0 * angles.gamma).cos())
}
