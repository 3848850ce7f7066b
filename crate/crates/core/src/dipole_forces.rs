//! Induced dipole, conservative optical potential, forces and torques
//! including radiation pressure, and scattered power.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{EPSILON_0, HBAR};
use crate::optics::{CMatrix3, CVector3, Setup};
use crate::particle::{rotation_matrix, ChiJet, EulerAngles, ParticleProps};

/// Generalized coordinates of the rigid particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coord {
    X,
    Y,
    Z,
    Alpha,
    Beta,
    Gamma,
}

impl Coord {
    pub const ALL: [Coord; 6] = [
        Coord::X,
        Coord::Y,
        Coord::Z,
        Coord::Alpha,
        Coord::Beta,
        Coord::Gamma,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Coord {
        Self::ALL[i]
    }

    pub fn is_rotation(self) -> bool {
        self.index() >= 3
    }

    pub fn name(self) -> &'static str {
        ["x", "y", "z", "alpha", "beta", "gamma"][self.index()]
    }

    /// Effective mass `m` for translations and `I_a, I_b, I_c` for the angles.
    pub fn effective_mass(self, props: &ParticleProps) -> f64 {
        match self {
            Coord::X | Coord::Y | Coord::Z => props.mass,
            Coord::Alpha => props.inertia[0],
            Coord::Beta => props.inertia[1],
            Coord::Gamma => props.inertia[2],
        }
    }
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn cmat(m: &Matrix3<f64>) -> CMatrix3 {
    m.map(c)
}

fn cdot(a: &CVector3, b: &CVector3) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn ccross(a: &CVector3, b: &CVector3) -> CVector3 {
    Vector3::new(
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )
}

/// Induced dipole moment with the lowest-order radiative correction [C m].
pub fn induced_dipole(
    props: &ParticleProps,
    angles: &EulerAngles,
    e: &CVector3,
    k: f64,
) -> CVector3 {
    let r = rotation_matrix(angles);
    let chi0 = props.chi_body();
    let v = props.volume;
    let corr =
        chi0.map(|x| c(x) * Complex64::new(1.0, v * k.powi(3) * x / (6.0 * std::f64::consts::PI)));
    let rc = cmat(&r);
    (rc * corr * rc.transpose() * e) * c(EPSILON_0 * v)
}

/// Conservative optical potential `-(eps_0 V / 4) E* . chi E` [J].
pub fn optical_potential(props: &ParticleProps, angles: &EulerAngles, e: &CVector3) -> f64 {
    let chi = cmat(&crate::particle::susceptibility_lab(props, angles));
    -(EPSILON_0 * props.volume / 4.0) * cdot(&e.conjugate(), &(chi * e)).re
}

/// Force and torque on the particle, split into conservative and
/// radiation-pressure parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchResult {
    pub force_conservative: Vector3<f64>,
    pub force_radiation: Vector3<f64>,
    pub torque_conservative: Vector3<f64>,
    pub torque_radiation: Vector3<f64>,
}

impl WrenchResult {
    pub fn force(&self) -> Vector3<f64> {
        self.force_conservative + self.force_radiation
    }

    pub fn torque(&self) -> Vector3<f64> {
        self.torque_conservative + self.torque_radiation
    }
}

/// Force and torque for lab susceptibility `chi`, field `e` [V/m] and
/// Jacobian `jac[(i, k)] = d_k E_i`.
pub fn force_torque_chi(
    volume: f64,
    chi: &Matrix3<f64>,
    e: &CVector3,
    jac: &CMatrix3,
    k: f64,
) -> WrenchResult {
    let cons = EPSILON_0 * volume / 2.0;
    let rad = EPSILON_0 * k.powi(3) * volume * volume / (12.0 * std::f64::consts::PI);
    let chic = cmat(chi);
    let ec = e.conjugate();
    let chi_ec = chic * ec;
    let chi_e = chic * e;
    let chi2_ec = chic * chi_ec;
    let chi_jac = chic * jac;
    let mut fc = Vector3::zeros();
    let mut fr = Vector3::zeros();
    for kk in 0..3 {
        let col = jac.column(kk).into_owned();
        fc[kk] = cons * cdot(&(chic * ec), &col).re;
        fr[kk] = rad * cdot(&chi_ec, &chi_jac.column(kk).into_owned()).im;
    }
    let tc = ccross(&chi_ec, e).map(|z| cons * z.re);
    let tr = (ccross(&chi2_ec, e) - ccross(&chi_ec, &chi_e)).map(|z| rad * z.im);
    WrenchResult {
        force_conservative: fc,
        force_radiation: fr,
        torque_conservative: tc,
        torque_radiation: tr,
    }
}

/// Force and torque on a particle at orientation `angles`.
pub fn force_torque(
    props: &ParticleProps,
    angles: &EulerAngles,
    e: &CVector3,
    jac: &CMatrix3,
    k: f64,
) -> WrenchResult {
    let chi = crate::particle::susceptibility_lab(props, angles);
    force_torque_chi(props.volume, &chi, e, jac, k)
}

/// Time-averaged power scattered into free space [W].
pub fn scattered_power(
    props: &ParticleProps,
    angles: &EulerAngles,
    e: &CVector3,
    k: f64,
    omega: f64,
) -> f64 {
    let chi = cmat(&crate::particle::susceptibility_lab(props, angles));
    let ce = chi * e;
    let n2: f64 = ce.iter().map(|z| z.norm_sqr()).sum();
    EPSILON_0 * omega * k.powi(3) * props.volume.powi(2) * n2 / (12.0 * std::f64::consts::PI)
}

/// Generalized forces on the six coordinates [N, N m], in the order of
/// [`Coord::ALL`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedForces {
    /// `-d_q V_opt` at fixed cavity amplitudes.
    pub conservative: [f64; 6],
    /// Radiation-pressure force and torque projections.
    pub radiation: [f64; 6],
}

/// Normalized-field building blocks shared by force, cavity and friction
/// evaluations at one configuration.
#[derive(Debug, Clone, Copy)]
pub struct LocalOptics {
    pub modes: crate::optics::ModeJet,
    pub chi: ChiJet,
}

impl LocalOptics {
    pub fn new(
        setup: &Setup,
        r: &Vector3<f64>,
        frame: &Matrix3<f64>,
        angles: &EulerAngles,
    ) -> Self {
        Self {
            modes: setup.modes(r),
            chi: ChiJet::new(&setup.particle, frame, angles),
        }
    }
}

/// Optical potential `hbar U_0 u* chi u` with the normalized field `u`.
pub fn potential_at(setup: &Setup, local: &LocalOptics, b: &[Complex64; 2]) -> f64 {
    let f = setup.field_jet_from_modes(&local.modes, b);
    let chi = cmat(&local.chi.chi);
    HBAR * setup.u0 * cdot(&f.u.conjugate(), &(chi * f.u)).re
}

/// Generalized conservative and radiation forces at fixed `b`.
pub fn generalized_forces_at(
    setup: &Setup,
    local: &LocalOptics,
    b: &[Complex64; 2],
) -> GeneralizedForces {
    let f = setup.field_jet_from_modes(&local.modes, b);
    let chi = cmat(&local.chi.chi);
    let uc = f.u.conjugate();
    let chi_uc = chi * uc;
    let hu = HBAR * setup.u0;
    let hg = HBAR * setup.gamma_sc;
    let mut cons = [0.0; 6];
    let mut rad = [0.0; 6];
    for kk in 0..3 {
        let du = f.jac.column(kk).into_owned();
        cons[kk] = -2.0 * hu * cdot(&chi_uc, &du).re;
        rad[kk] = hg * cdot(&chi_uc, &(chi * du)).im;
    }
    for a in 0..3 {
        let dchi = cmat(&local.chi.d[a]);
        let dchi_u = dchi * f.u;
        cons[3 + a] = -hu * cdot(&uc, &dchi_u).re;
        rad[3 + a] = hg * cdot(&chi_uc, &dchi_u).im;
    }
    if !setup.options.radiation_pressure {
        rad = [0.0; 6];
    }
    GeneralizedForces {
        conservative: cons,
        radiation: rad,
    }
}

/// Radiation-pressure generalized force on coordinate `q`.
pub fn generalized_radiation_force(
    setup: &Setup,
    r: &Vector3<f64>,
    angles: &EulerAngles,
    b: &[Complex64; 2],
    q: Coord,
) -> f64 {
    let local = LocalOptics::new(setup, r, &Matrix3::identity(), angles);
    let s = setup.with_options(crate::optics::ModelOptions {
        radiation_pressure: true,
        ..setup.options
    });
    generalized_forces_at(&s, &local, b).radiation[q.index()]
}

/// Lab-frame rotation generators for the three Euler angles: `e_z`,
/// the nodal line `e_xi`, and the body axis `n_3` (all rotated by `frame`).
pub fn euler_generators(frame: &Matrix3<f64>, angles: &EulerAngles) -> [Vector3<f64>; 3] {
    let (sa, ca) = angles.alpha.sin_cos();
    let n3 = rotation_matrix(angles) * Vector3::z();
    [
        frame * Vector3::z(),
        frame * Vector3::new(-sa, ca, 0.0),
        frame * n3,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle::ParticleSpec;

    fn props() -> ParticleProps {
        ParticleProps::new(&ParticleSpec::new([40e-9, 60e-9, 140e-9], 2.1, 2200.0).unwrap())
            .unwrap()
    }

    fn field() -> CVector3 {
        Vector3::new(
            Complex64::new(1.0, 0.3),
            Complex64::new(-0.2, 0.8),
            Complex64::new(0.5, -0.4),
        ) * c(1e6)
    }

    #[test]
    fn zero_field() {
        let p = props();
        let a = EulerAngles::new(0.1, 1.0, 0.3);
        let z = CVector3::zeros();
        assert_eq!(optical_potential(&p, &a, &z), 0.0);
        assert_eq!(induced_dipole(&p, &a, &z, 4e6).norm(), 0.0);
        assert_eq!(scattered_power(&p, &a, &z, 4e6, 1e15), 0.0);
    }

    #[test]
    fn sphere_dipole_is_parallel() {
        let s = ParticleProps::new(&ParticleSpec::new([70e-9; 3], 2.1, 2200.0).unwrap()).unwrap();
        let e = field();
        let k = 2.0 * std::f64::consts::PI / 1550e-9;
        let p = induced_dipole(&s, &EulerAngles::new(0.3, 1.1, 2.0), &e, k);
        let chi = s.susceptibility[0];
        let x = s.volume * k.powi(3) * chi / (6.0 * std::f64::consts::PI);
        let alpha = Complex64::new(1.0, x) * c(EPSILON_0 * s.volume * chi);
        assert!((p - e * alpha).norm() < 1e-12 * p.norm());
    }

    #[test]
    fn scattered_power_quadratic() {
        let p = props();
        let a = EulerAngles::new(0.1, 1.0, 0.3);
        let e = field();
        let p1 = scattered_power(&p, &a, &e, 4e6, 1e15);
        let p2 = scattered_power(&p, &a, &(e * c(2.0)), 4e6, 1e15);
        assert!((p2 / p1 - 4.0).abs() < 1e-13);
    }

    #[test]
    fn linear_polarization_torque_along_e_vanishes() {
        let p = props();
        let a = EulerAngles::new(0.4, 0.9, 1.7);
        let ev = Vector3::new(0.3, -0.5, 0.81).normalize();
        let e = ev.map(|x| Complex64::new(0.0, 2e6 * x));
        let w = force_torque(&p, &a, &e, &CMatrix3::zeros(), 4e6);
        assert!(w.torque().dot(&ev).abs() < 1e-12 * w.torque().norm().max(1e-300));
    }

    #[test]
    fn coord_masses() {
        let p = props();
        assert_eq!(Coord::X.effective_mass(&p), p.mass);
        assert_eq!(Coord::Beta.effective_mass(&p), p.inertia[1]);
        assert_eq!(Coord::from_index(4), Coord::Beta);
    }
}
