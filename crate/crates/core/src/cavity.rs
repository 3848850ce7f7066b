//! Effective cavity operators, stationary and quasi-static fields, friction
//! force, phase-space contraction rate, and the red-detuning criterion.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use num_complex::Complex64;

use crate::constants::HBAR;
use crate::dipole_forces::LocalOptics;
use crate::error::Result;
use crate::optics::{CVector3, Setup};
use crate::particle::{inverse_rotational_metric, EulerAngles, ParticleProps};

pub type CMatrix2 = Matrix2<Complex64>;
pub type CVector2 = Vector2<Complex64>;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

const I: Complex64 = Complex64::new(0.0, 1.0);

fn cdot(a: &CVector3, b: &CVector3) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `A = i Delta_eff - kappa_eff` and pump vector `eta` at one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityOperators {
    pub delta_eff: Matrix2<f64>,
    pub kappa_eff: Matrix2<f64>,
    pub a: CMatrix2,
    pub eta: CVector2,
}

/// Cavity operators together with their derivatives along the six
/// generalized coordinates.
#[derive(Debug, Clone, Copy)]
pub struct CavityJet {
    pub ops: CavityOperators,
    pub da: [CMatrix2; 6],
    pub deta: [CVector2; 6],
}

fn project(basis: &crate::optics::PolarizationBasis, m: &Matrix3<f64>) -> Matrix2<f64> {
    let e = [basis.e1, basis.e2];
    Matrix2::from_fn(|i, j| e[i].dot(&(m * e[j])))
}

fn project_t(basis: &crate::optics::PolarizationBasis, m: &Matrix3<f64>, v: &CVector3) -> CVector2 {
    let mv = m.map(c) * v;
    let e = [basis.e1.map(c), basis.e2.map(c)];
    Vector2::new(cdot(&e[0], &mv), cdot(&e[1], &mv))
}

impl CavityJet {
    pub fn new(setup: &Setup, local: &LocalOptics) -> Self {
        let basis = &setup.basis;
        let m = &local.modes;
        let chi = &local.chi;
        let chi2 = chi.squared();
        let u0 = setup.u0;
        let g2 = setup.gamma_sc_eff() / 2.0;
        let kappa = setup.cavity.linewidth;
        let delta = setup.cavity.detuning;
        let eps = setup.drive;

        let pm = project(basis, &chi.chi);
        let pm2 = project(basis, &chi2.chi);
        let fc2 = m.fc * m.fc;
        let delta_eff = Matrix2::identity() * delta - pm * (u0 * fc2);
        let kappa_eff = Matrix2::identity() * kappa + pm2 * (g2 * fc2);
        let a = delta_eff.map(|x| I * x) - kappa_eff.map(c);

        // e_j . (i U0 chi + g2 chi^2) e_t
        let t = project_t(basis, &chi.chi, &basis.e_t) * (I * u0)
            + project_t(basis, &chi2.chi, &basis.e_t) * c(g2);
        let fcft = m.ft * m.fc;
        let eta = -t * (fcft * eps);

        let mut da = [CMatrix2::zeros(); 6];
        let mut deta = [CVector2::zeros(); 6];
        for k in 0..3 {
            let dfc2 = 2.0 * m.fc * m.dfc[k];
            let dd = -pm * (u0 * dfc2);
            let dk = pm2 * (g2 * dfc2);
            da[k] = dd.map(|x| I * x) - dk.map(c);
            let dfcft = m.dft[k] * m.fc + m.ft * m.dfc[k];
            deta[k] = -t * (dfcft * eps);
        }
        for q in 0..3 {
            let dpm = project(basis, &chi.d[q]);
            let dpm2 = project(basis, &chi2.d[q]);
            let dd = -dpm * (u0 * fc2);
            let dk = dpm2 * (g2 * fc2);
            da[3 + q] = dd.map(|x| I * x) - dk.map(c);
            let dt = project_t(basis, &chi.d[q], &basis.e_t) * (I * u0)
                + project_t(basis, &chi2.d[q], &basis.e_t) * c(g2);
            deta[3 + q] = -dt * (fcft * eps);
        }
        Self {
            ops: CavityOperators {
                delta_eff,
                kappa_eff,
                a,
                eta,
            },
            da,
            deta,
        }
    }

    /// Stationary field `b_s = -A^{-1} eta`.
    pub fn stationary(&self) -> CVector2 {
        -inverse2(&self.ops.a) * self.ops.eta
    }

    /// Stationary field and its derivatives `d_q b_s = -A^{-1}(d_q A b_s + d_q eta)`.
    pub fn stationary_jet(&self) -> (CVector2, [CVector2; 6]) {
        let ainv = inverse2(&self.ops.a);
        let bs = -ainv * self.ops.eta;
        let dbs = std::array::from_fn(|q| -ainv * (self.da[q] * bs + self.deta[q]));
        (bs, dbs)
    }
}

/// 2x2 complex inverse by cofactors.
pub fn inverse2(a: &CMatrix2) -> CMatrix2 {
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    Matrix2::new(a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)]) / det
}

pub fn to_array(b: &CVector2) -> [Complex64; 2] {
    [b[0], b[1]]
}

pub fn from_array(b: &[Complex64; 2]) -> CVector2 {
    Vector2::new(b[0], b[1])
}

fn local(setup: &Setup, r: &Vector3<f64>, angles: &EulerAngles) -> LocalOptics {
    LocalOptics::new(setup, r, &Matrix3::identity(), angles)
}

/// Effective detuning and damping matrices, `A`, and the pump vector.
pub fn cavity_operators(setup: &Setup, r: &Vector3<f64>, angles: &EulerAngles) -> CavityOperators {
    CavityJet::new(setup, &local(setup, r, angles)).ops
}

/// Stationary cavity amplitudes at a fixed configuration.
pub fn stationary_field(setup: &Setup, r: &Vector3<f64>, angles: &EulerAngles) -> [Complex64; 2] {
    to_array(&CavityJet::new(setup, &local(setup, r, angles)).stationary())
}

/// Cavity field slaved to slow particle motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiStaticField {
    pub stationary: [Complex64; 2],
    /// Velocity-linear correction `A^{-1} sum_q qdot d_q b_s`.
    pub correction: [Complex64; 2],
}

impl QuasiStaticField {
    pub fn total(&self) -> [Complex64; 2] {
        [
            self.stationary[0] + self.correction[0],
            self.stationary[1] + self.correction[1],
        ]
    }
}

/// Quasi-static field for generalized velocities `qdot` (order of
/// [`crate::dipole_forces::Coord::ALL`]).
pub fn quasi_static_from_jet(jet: &CavityJet, qdot: &[f64; 6]) -> QuasiStaticField {
    let (bs, dbs) = jet.stationary_jet();
    let mut s = CVector2::zeros();
    for q in 0..6 {
        s += dbs[q] * c(qdot[q]);
    }
    let corr = inverse2(&jet.ops.a) * s;
    QuasiStaticField {
        stationary: to_array(&bs),
        correction: to_array(&corr),
    }
}

pub fn quasi_static_field(
    setup: &Setup,
    r: &Vector3<f64>,
    frame: &Matrix3<f64>,
    angles: &EulerAngles,
    qdot: &[f64; 6],
) -> QuasiStaticField {
    let jet = CavityJet::new(setup, &LocalOptics::new(setup, r, frame, angles));
    quasi_static_from_jet(&jet, qdot)
}

/// Velocity-linear generalized force from the field deviation
/// `delta_b = b - b_s`, evaluated at the stationary field.
///
/// The first part is the dispersive response, the second collects the
/// free-space scattering corrections; their sum is the friction force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionForce {
    pub dispersive: [f64; 6],
    pub scattering: [f64; 6],
}

impl FrictionForce {
    pub fn total(&self) -> [f64; 6] {
        std::array::from_fn(|q| self.dispersive[q] + self.scattering[q])
    }
}

pub fn friction_from_jet(
    setup: &Setup,
    local: &LocalOptics,
    jet: &CavityJet,
    delta_b: &[Complex64; 2],
) -> FrictionForce {
    let (bs, dbs) = jet.stationary_jet();
    let db = from_array(delta_b);
    let dbc = db.conjugate();
    let mut disp = [0.0; 6];
    for q in 0..6 {
        disp[q] = -2.0 * HBAR * (dbc.dot(&(jet.ops.a * dbs[q]))).im;
    }
    let mut scat = [0.0; 6];
    let g_a = setup.gamma_sc_eff();
    let g_r = if setup.options.radiation_pressure {
        setup.gamma_sc
    } else {
        0.0
    };
    if g_a != 0.0 || g_r != 0.0 {
        let f = setup.field_jet_from_modes(&local.modes, &to_array(&bs));
        let chi = local.chi.chi.map(c);
        let chi_u = chi * f.u;
        let ej = [setup.basis.e1.map(c), setup.basis.e2.map(c)];
        let fc = local.modes.fc;
        for q in 0..6 {
            // d(chi u) and d(f_c chi e_j) at fixed b
            let (d_chi_u, d_fc_chi_e): (CVector3, [CVector3; 2]) = if q < 3 {
                let du = f.jac.column(q).into_owned();
                let dfc = local.modes.dfc[q];
                (chi * du, [chi * ej[0] * c(dfc), chi * ej[1] * c(dfc)])
            } else {
                let dchi = local.chi.d[q - 3].map(c);
                (dchi * f.u, [dchi * ej[0] * c(fc), dchi * ej[1] * c(fc)])
            };
            let mut acc = 0.0;
            for j in 0..2 {
                let fc_chi_e = chi * ej[j] * c(fc);
                let a1 = cdot(&fc_chi_e, &d_chi_u);
                let a2 = cdot(&d_fc_chi_e[j], &chi_u);
                acc += g_a * (dbc[j] * (a1 + a2)).im + g_r * (dbc[j] * (a1 - a2)).im;
            }
            scat[q] = HBAR * acc;
        }
    }
    FrictionForce {
        dispersive: disp,
        scattering: scat,
    }
}

/// Friction force for generalized velocities `qdot` at a configuration.
pub fn friction_force(
    setup: &Setup,
    r: &Vector3<f64>,
    frame: &Matrix3<f64>,
    angles: &EulerAngles,
    qdot: &[f64; 6],
) -> FrictionForce {
    let local = LocalOptics::new(setup, r, frame, angles);
    let jet = CavityJet::new(setup, &local);
    let qs = quasi_static_from_jet(&jet, qdot);
    friction_from_jet(setup, &local, &jet, &qs.correction)
}

/// Momentum Hessian of the free Hamiltonian: `1/m` on translations and the
/// inverse rotational metric on the angles.
pub fn momentum_hessian(props: &ParticleProps, angles: &EulerAngles) -> Result<[[f64; 6]; 6]> {
    let minv = inverse_rotational_metric(props, angles)?;
    let mut h = [[0.0; 6]; 6];
    for i in 0..3 {
        h[i][i] = 1.0 / props.mass;
        for j in 0..3 {
            h[3 + i][3 + j] = minv[(i, j)];
        }
    }
    Ok(h)
}

pub fn contraction_rate_from_jet(jet: &CavityJet, hess: &[[f64; 6]; 6]) -> f64 {
    let (_, dbs) = jet.stationary_jet();
    let b = inverse2(&jet.ops.a).adjoint() * jet.ops.a;
    let mut acc = Complex64::new(0.0, 0.0);
    for q in 0..6 {
        for qp in 0..6 {
            if hess[q][qp] != 0.0 {
                acc += dbs[q].conjugate().dot(&(b * dbs[qp])) * hess[q][qp];
            }
        }
    }
    2.0 * HBAR * acc.im
}

/// Total phase-space contraction rate of the quasi-static dynamics [1/s].
/// Independent of the momenta.
pub fn contraction_rate(
    setup: &Setup,
    r: &Vector3<f64>,
    frame: &Matrix3<f64>,
    angles: &EulerAngles,
) -> Result<f64> {
    let hess = momentum_hessian(&setup.particle, angles)?;
    let jet = CavityJet::new(setup, &LocalOptics::new(setup, r, frame, angles));
    Ok(contraction_rate_from_jet(&jet, &hess))
}

/// Closed-form eigenvalues `(lambda_+, lambda_-)` of the effective detuning
/// matrix, `lambda_+ >= lambda_-`.
pub fn detuning_eigenvalues(setup: &Setup, r: &Vector3<f64>, angles: &EulerAngles) -> (f64, f64) {
    let l = local(setup, r, angles);
    let pm = project(&setup.basis, &l.chi.chi);
    let fc2 = l.modes.fc * l.modes.fc;
    let mean = 0.5 * (pm[(0, 0)] + pm[(1, 1)]);
    let root = (0.25 * (pm[(0, 0)] - pm[(1, 1)]).powi(2) + pm[(0, 1)].powi(2)).sqrt();
    let delta = setup.cavity.detuning;
    let u0 = setup.u0;
    let a = delta - u0 * fc2 * (mean + root);
    let b = delta - u0 * fc2 * (mean - root);
    (a.max(b), a.min(b))
}

/// Sufficient red-detuning condition `Delta < U_0 (chi_c + chi_b)` for
/// positive contraction everywhere.
pub fn stability_predicate(setup: &Setup, props: &ParticleProps) -> bool {
    setup.cavity.detuning < setup.u0 * (props.susceptibility[2] + props.susceptibility[1])
}
