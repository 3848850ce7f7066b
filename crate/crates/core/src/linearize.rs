//! Deep-trapping analysis: tweezer minimum and equilibrium, harmonic
//! frequencies and couplings (closed form and finite-difference oracle),
//! recoil and gas heating, normal modes, cooling rates and occupations.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cavity::CavityJet;
use crate::constants::{HBAR, HELIUM_MASS, K_B};
use crate::dipole_forces::{generalized_forces_at, Coord, LocalOptics};
use crate::error::{Error, Result};
use crate::optics::{ModelOptions, Setup, TweezerConfig};
use crate::particle::{susceptibility_lab, EulerAngles};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Coordinates coupled to cavity mode 1.
pub const S1: [Coord; 4] = [Coord::X, Coord::Y, Coord::Z, Coord::Alpha];
/// Coordinates coupled to cavity mode 2.
pub const S2: [Coord; 2] = [Coord::Beta, Coord::Gamma];

/// Cavity mode index (0 for mode 1, 1 for mode 2) a coordinate couples to.
pub fn block_of(q: Coord) -> usize {
    match q {
        Coord::Beta | Coord::Gamma => 1,
        _ => 0,
    }
}

fn block_coords(j: usize) -> &'static [Coord] {
    if j == 0 {
        &S1
    } else {
        &S2
    }
}

fn split(q: &[f64; 6]) -> (Vector3<f64>, EulerAngles) {
    (
        Vector3::new(q[0], q[1], q[2]),
        EulerAngles::new(q[3], q[4], q[5]),
    )
}

fn local_at(setup: &Setup, q: &[f64; 6]) -> LocalOptics {
    let (r, a) = split(q);
    LocalOptics::new(setup, &r, &Matrix3::identity(), &a)
}

/// Tweezer-only minimum and whether it is degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TweezerMinimum {
    pub q: [f64; 6],
    /// `psi = 0` or `psi = pi/4`: one libration is not confined by the tweezer.
    pub degenerate: bool,
}

/// Minimum of the bare tweezer potential: `R = 0`, `Omega = (-zeta, pi/2, 0)`.
pub fn tweezer_minimum(tw: &TweezerConfig) -> TweezerMinimum {
    let psi = tw.ellipticity;
    let degenerate = psi.abs() < 1e-12 || (psi - std::f64::consts::FRAC_PI_4).abs() < 1e-12;
    TweezerMinimum {
        q: [
            0.0,
            0.0,
            0.0,
            -tw.rotation,
            std::f64::consts::FRAC_PI_2,
            0.0,
        ],
        degenerate,
    }
}

/// Natural length scales used for step sizes and residual norms:
/// `1/k` for translations and one radian for the angles.
fn coordinate_scales(setup: &Setup) -> [f64; 6] {
    let l = 1.0 / setup.k;
    [l, l, l, 1.0, 1.0, 1.0]
}

/// Mechanical equilibrium with self-consistent stationary cavity field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub q_eq: [f64; 6],
    pub b_eq: [Complex64; 2],
    /// `q_eq - q_tw`.
    pub deviation: [f64; 6],
    pub iterations: usize,
    /// Largest scaled force component at convergence.
    pub residual: f64,
}

/// Generalized force at `q` with `b = b_s(q)`; optionally including
/// radiation pressure.
pub fn equilibrium_force(
    setup: &Setup,
    q: &[f64; 6],
    radiation: bool,
) -> ([f64; 6], [Complex64; 2]) {
    weighted_force(setup, q, if radiation { 1.0 } else { 0.0 })
}

fn weighted_force(setup: &Setup, q: &[f64; 6], weight: f64) -> ([f64; 6], [Complex64; 2]) {
    let local = local_at(setup, q);
    let bs = CavityJet::new(setup, &local).stationary();
    let b = [bs[0], bs[1]];
    let f = generalized_forces_at(setup, &local, &b);
    let mut out = f.conservative;
    if weight != 0.0 {
        for (o, r) in out.iter_mut().zip(f.radiation.iter()) {
            *o += weight * r;
        }
    }
    (out, b)
}

fn force_jacobian(setup: &Setup, q: &[f64; 6], weight: f64, scales: &[f64; 6]) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(6, 6);
    for j in 0..6 {
        let h = 1e-4 * scales[j];
        let mut qp = *q;
        let mut qm = *q;
        qp[j] += h;
        qm[j] -= h;
        let fp = weighted_force(setup, &qp, weight).0;
        let fm = weighted_force(setup, &qm, weight).0;
        for i in 0..6 {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

struct NewtonResult {
    q: [f64; 6],
    b: [Complex64; 2],
    iterations: usize,
    residual: f64,
}

/// Damped Newton iteration for the zero of the weighted force. Steps are
/// capped at `MAX_STEP` in scaled units so the iterate stays on the branch
/// it started from.
fn newton(
    setup: &Setup,
    start: [f64; 6],
    weight: f64,
    scales: &[f64; 6],
    fscale: &[f64],
) -> Result<NewtonResult> {
    const MAX_ITER: usize = 50;
    const MAX_STEP: f64 = 0.05;
    let measure = |f: &[f64; 6]| (0..6).map(|i| f[i].abs() / fscale[i]).fold(0.0, f64::max);
    let mut q = start;
    let mut prev = f64::INFINITY;
    for it in 0..=MAX_ITER {
        let (f, b) = weighted_force(setup, &q, weight);
        let res = measure(&f);
        // Below 1e-10 a Newton step that no longer halves the residual has
        // hit the roundoff floor of the force evaluation.
        if res <= 1e-12 || (res < 1e-10 && res > 0.5 * prev) {
            return Ok(NewtonResult {
                q,
                b,
                iterations: it,
                residual: res,
            });
        }
        if it == MAX_ITER || !res.is_finite() {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: res,
            });
        }
        let jac = force_jacobian(setup, &q, weight, scales);
        // Scaled SVD solve: flat directions get no step.
        let d = DMatrix::from_fn(6, 6, |i, j| jac[(i, j)] * scales[j] * scales[i]);
        let r = nalgebra::DVector::from_iterator(6, (0..6).map(|i| -f[i] * scales[i]));
        let svd = d.svd(true, true);
        let tol = 1e-9 * svd.singular_values.max();
        let y = svd.solve(&r, tol).map_err(|_| Error::NoConvergence {
            iterations: it,
            residual: res,
        })?;
        let damp = (MAX_STEP / y.amax()).min(1.0);
        for i in 0..6 {
            q[i] += damp * y[i] * scales[i];
        }
        prev = if damp < 1.0 { f64::INFINITY } else { res };
    }
    unreachable!()
}

/// Equilibrium of the generalized force starting at the tweezer minimum.
/// Convergence: every force component below `1e-12` of the force produced
/// by a unit-scale displacement, or stagnation below `1e-10`. Radiation
/// pressure is switched on by continuation in its strength, so the result
/// is the branch connected to the conservative equilibrium; if that branch
/// ends before full strength the solve fails with `NoConvergence`.
pub fn solve_equilibrium(setup: &Setup, radiation: bool) -> Result<Equilibrium> {
    const MIN_STEP: f64 = 1.0 / 256.0;
    const MAX_JUMP: f64 = 0.1;
    let q_tw = tweezer_minimum(&setup.tweezer).q;
    let scales = coordinate_scales(setup);
    let jac0 = force_jacobian(setup, &q_tw, if radiation { 1.0 } else { 0.0 }, &scales);
    // Rows are compared as energies (force times length scale) so a
    // coordinate without stiffness does not get a vanishing scale.
    let row: Vec<f64> = (0..6)
        .map(|i| {
            (0..6)
                .map(|j| (jac0[(i, j)] * scales[j]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let emax = (0..6).map(|i| row[i] * scales[i]).fold(0.0, f64::max);
    let fscale: Vec<f64> = (0..6)
        .map(|i| row[i].max(1e-6 * emax / scales[i]).max(1e-300))
        .collect();

    let mut sol = newton(setup, q_tw, 0.0, &scales, &fscale)?;
    let mut iterations = sol.iterations;
    if radiation {
        let mut weight: f64 = 0.0;
        let mut step: f64 = 0.25;
        while weight < 1.0 {
            let w = (weight + step).min(1.0);
            let jump = |n: &NewtonResult| {
                (0..6)
                    .map(|i| ((n.q[i] - sol.q[i]) / scales[i]).abs())
                    .fold(0.0, f64::max)
            };
            match newton(setup, sol.q, w, &scales, &fscale) {
                Ok(n) if jump(&n) <= MAX_JUMP => {
                    iterations += n.iterations;
                    sol = n;
                    weight = w;
                    step = (2.0 * step).min(0.25);
                }
                Ok(n) => {
                    iterations += n.iterations;
                    step *= 0.5;
                }
                Err(Error::NoConvergence { iterations: k, .. }) => {
                    iterations += k;
                    step *= 0.5;
                }
                Err(e) => return Err(e),
            }
            if step < MIN_STEP {
                let residual = weighted_force(setup, &sol.q, 1.0)
                    .0
                    .iter()
                    .zip(&fscale)
                    .map(|(f, s)| f.abs() / s)
                    .fold(0.0, f64::max);
                return Err(Error::NoConvergence {
                    iterations,
                    residual,
                });
            }
        }
    }
    let deviation = std::array::from_fn(|i| sol.q[i] - q_tw[i]);
    Ok(Equilibrium {
        q_eq: sol.q,
        b_eq: sol.b,
        deviation,
        iterations,
        residual: sol.residual,
    })
}

/// Diagonal stiffness `-d_q F_q / m_q` [rad^2/s^2] of the total generalized
/// force (radiation pressure included) at a radiation-pressure equilibrium.
pub fn radiation_stiffness(setup: &Setup, eq: &Equilibrium) -> [f64; 6] {
    let scales = coordinate_scales(setup);
    let jac = force_jacobian(setup, &eq.q_eq, 1.0, &scales);
    std::array::from_fn(|i| -jac[(i, i)] / Coord::ALL[i].effective_mass(&setup.particle))
}

/// Second derivatives of the optical potential at one point:
/// `hessian[q][q'] = d_q d_q' V` and the Wirtinger mixed derivatives
/// `mixed[j][q] = d_{b_j} d_q V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialDerivatives {
    pub hessian: [[f64; 6]; 6],
    pub mixed: [[Complex64; 6]; 2],
}

/// Closed-form harmonic data at the tweezer minimum, in the dimensionless
/// shapes `v_q`, `G_qq'`, `G_jq`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm {
    pub v: [f64; 6],
    pub big_g_mech: [[f64; 6]; 6],
    pub big_g_opt: [[Complex64; 6]; 2],
    pub b0: Complex64,
    pub detuning: [f64; 2],
}

impl ClosedForm {
    /// Potential derivatives implied by the closed forms:
    /// `d_q^2 V = -2 hbar U0 m_q v_q`, `d_q d_q' V = -2 hbar U0 G_qq'`,
    /// `d_{b_j} d_q V = -hbar U0 G_jq`.
    pub fn derivatives(&self, setup: &Setup) -> PotentialDerivatives {
        let hu = HBAR * setup.u0;
        let mut hessian = [[0.0; 6]; 6];
        for q in Coord::ALL {
            let i = q.index();
            for j in 0..6 {
                hessian[i][j] = if i == j {
                    -2.0 * hu * q.effective_mass(&setup.particle) * self.v[i]
                } else {
                    -2.0 * hu * self.big_g_mech[i][j]
                };
            }
        }
        let mixed = self.big_g_opt.map(|row| row.map(|g| -g * hu));
        PotentialDerivatives { hessian, mixed }
    }
}

/// Closed-form frequencies, couplings, detunings and `b0` for a Gaussian
/// tweezer and a plane standing-wave cavity mode.
pub fn closed_form(setup: &Setup) -> ClosedForm {
    let p = &setup.particle;
    let [chi_a, chi_b, chi_c] = p.susceptibility;
    let [i_a, i_b, i_c] = p.inertia;
    let m = p.mass;
    let eps = setup.drive;
    let u0 = setup.u0;
    let kappa = setup.cavity.linewidth;
    let delta = setup.cavity.detuning;
    let k = setup.k;
    let zr = setup.rayleigh_range;
    let (wx, wy) = (setup.tweezer.waist_x, setup.tweezer.waist_y);
    let psi = setup.tweezer.ellipticity;
    let zeta = setup.tweezer.rotation;
    let (st, ct) = setup.cavity.angle.sin_cos();
    let (phi_s, phi_c) = if setup.options.cavity_enabled {
        setup.cavity.phase.sin_cos()
    } else {
        (0.0, 0.0)
    };
    let (s, cc) = (setup.cavity.angle - zeta).sin_cos();
    let (sp, cp) = psi.sin_cos();
    let sin2 = (2.0 * (setup.cavity.angle - zeta)).sin();
    let cos2 = (2.0 * (setup.cavity.angle - zeta)).cos();

    let sigma = chi_c * cc * cc + chi_b * s * s;
    let tau = chi_c * cp * cp + chi_b * sp * sp;
    let d1 = delta - u0 * sigma * phi_c * phi_c;
    let d2 = delta - u0 * chi_a * phi_c * phi_c;
    let w = Complex64::new(chi_c * cc * cp, -chi_b * s * sp);
    let b0 = -I * u0 * eps * phi_c * w / Complex64::new(kappa, -d1);
    let bc = b0.conj();
    let b2 = b0.norm_sqr();
    let kp = 1.0 - 1.0 / (k * zr);
    let re_bw = (bc * w).re;
    let im_bw = (bc * w).im;
    // b0* (sin cos(psi) - i cos sin(psi))
    let bq = bc * Complex64::new(s * cp, -cc * sp);

    let mut v = [0.0; 6];
    v[0] = (2.0 * eps * eps * tau
        + eps * phi_c * (k * k * wx * wx * st * st + 2.0) * re_bw
        + b2 * k * k * wx * wx * (2.0 * setup.cavity.phase).cos() * st * st * sigma)
        / (m * wx * wx);
    v[1] = (2.0 * eps * eps * tau
        + eps * phi_c * (k * k * wy * wy * ct * ct + 2.0) * re_bw
        + b2 * k * k * wy * wy * (2.0 * setup.cavity.phase).cos() * ct * ct * sigma)
        / (m * wy * wy);
    v[2] = (eps * eps * tau + eps * phi_c * (1.0 + (zr * k - 1.0).powi(2)) * re_bw) / (m * zr * zr);
    v[3] = (chi_c - chi_b) / i_a
        * (eps * eps * (2.0 * psi).cos()
            + 2.0 * eps * phi_c * (bc * Complex64::new(cc * cp, s * sp)).re
            + b2 * phi_c * phi_c * cos2);
    v[4] = (chi_c - chi_a) / i_b
        * (eps * eps * cp * cp
            + 2.0 * eps * phi_c * cc * cp * b0.re
            + b2 * phi_c * phi_c * cc * cc);
    v[5] = (chi_b - chi_a) / i_c
        * (eps * eps * sp * sp - 2.0 * eps * phi_c * s * sp * b0.im + b2 * phi_c * phi_c * s * s);

    let mut g = [[0.0; 6]; 6];
    let mut set = |a: Coord, b: Coord, val: f64| {
        g[a.index()][b.index()] = val;
        g[b.index()][a.index()] = val;
    };
    let cos2phi = (2.0 * setup.cavity.phase).cos();
    let cos2phi = if setup.options.cavity_enabled {
        cos2phi
    } else {
        0.0
    };
    set(
        Coord::X,
        Coord::Y,
        0.5 * k
            * k
            * (2.0 * setup.cavity.angle).sin()
            * (eps * phi_c * re_bw + b2 * cos2phi * sigma),
    );
    let gz = -k * k * eps * kp * phi_s * im_bw;
    set(Coord::X, Coord::Z, gz * st);
    set(Coord::Y, Coord::Z, gz * ct);
    let ga = -k * (chi_c - chi_b) * phi_s * (eps * bq.re + b2 * phi_c * sin2);
    set(Coord::X, Coord::Alpha, ga * st);
    set(Coord::Y, Coord::Alpha, ga * ct);
    set(
        Coord::Z,
        Coord::Alpha,
        -k * eps * (chi_c - chi_b) * kp * phi_c * bq.im,
    );
    set(
        Coord::Beta,
        Coord::Gamma,
        0.5 * (chi_b - chi_a) * phi_c * (2.0 * eps * bq.re + b2 * phi_c * sin2),
    );

    let mut go = [[Complex64::new(0.0, 0.0); 6]; 2];
    let g1r = (w.conj() * eps + bc * (2.0 * phi_c * sigma)) * (k * phi_s);
    go[0][0] = g1r * st;
    go[0][1] = g1r * ct;
    go[0][2] = I * w.conj() * (k * eps * kp * phi_c);
    go[0][3] =
        (Complex64::new(s * cp, cc * sp) * eps + bc * (phi_c * sin2)) * ((chi_c - chi_b) * phi_c);
    go[1][4] = (c(eps * cp) + bc * (cc * phi_c)) * ((chi_c - chi_a) * phi_c);
    go[1][5] = (I * (eps * sp) + bc * (s * phi_c)) * ((chi_b - chi_a) * phi_c);

    ClosedForm {
        v,
        big_g_mech: g,
        big_g_opt: go,
        b0,
        detuning: [d1, d2],
    }
}

fn potential_gradient(setup: &Setup, local: &LocalOptics, b: &[Complex64; 2]) -> [f64; 6] {
    generalized_forces_at(setup, local, b)
        .conservative
        .map(|f| -f)
}

/// Finite-difference second derivatives of the optical potential at
/// `(q, b)` with `b` held fixed. Central differences of the analytic
/// gradient with one Richardson step; `b`-derivatives by central
/// differences, which are exact because the gradient is quadratic in `b`.
pub fn fd_derivatives(setup: &Setup, q: &[f64; 6], b: &[Complex64; 2]) -> PotentialDerivatives {
    let scales = coordinate_scales(setup);
    let grad = |qq: &[f64; 6]| potential_gradient(setup, &local_at(setup, qq), b);
    let central = |j: usize, h: f64| -> [f64; 6] {
        let mut qp = *q;
        let mut qm = *q;
        qp[j] += h;
        qm[j] -= h;
        let gp = grad(&qp);
        let gm = grad(&qm);
        std::array::from_fn(|i| (gp[i] - gm[i]) / (2.0 * h))
    };
    let mut raw = [[0.0; 6]; 6];
    for j in 0..6 {
        let h = 1e-3 * scales[j];
        let d1 = central(j, h);
        let d2 = central(j, h / 2.0);
        for i in 0..6 {
            raw[i][j] = (4.0 * d2[i] - d1[i]) / 3.0;
        }
    }
    let hessian = std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * (raw[i][j] + raw[j][i])));

    let local = local_at(setup, q);
    let scale = setup.drive.max(b[0].norm()).max(b[1].norm()).max(1.0);
    let mut mixed = [[Complex64::new(0.0, 0.0); 6]; 2];
    for j in 0..2 {
        let shifted = |dz: Complex64| {
            let mut bb = *b;
            bb[j] += dz;
            potential_gradient(setup, &local, &bb)
        };
        let (rp, rm) = (shifted(c(scale)), shifted(c(-scale)));
        let (ip, im) = (shifted(I * scale), shifted(-I * scale));
        for qi in 0..6 {
            let d_re = (rp[qi] - rm[qi]) / (2.0 * scale);
            let d_im = (ip[qi] - im[qi]) / (2.0 * scale);
            mixed[j][qi] = Complex64::new(0.5 * d_re, -0.5 * d_im);
        }
    }
    PotentialDerivatives { hessian, mixed }
}

/// Linearized deep-trapping system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedSystem {
    pub q_tw: [f64; 6],
    pub q_eq: [f64; 6],
    pub b_tw: [Complex64; 2],
    pub b0: Complex64,
    pub b_eq: [Complex64; 2],
    /// `omega_q^2` [rad^2/s^2]; may be negative.
    pub omega_sq: [f64; 6],
    /// `omega_q` [rad/s] for confined coordinates, 0 otherwise.
    pub omega: [f64; 6],
    pub mass: [f64; 6],
    /// Zero-point amplitudes [m, rad]; 0 for unconfined coordinates.
    pub q_zp: [f64; 6],
    pub stable: [bool; 6],
    /// Mechanical couplings `g_qq'` [rad/s], symmetric.
    pub g_mech: [[f64; 6]; 6],
    /// Optomechanical couplings `g_jq` [rad/s].
    pub g_opt: [[Complex64; 6]; 2],
    /// Effective detunings `Delta_1, Delta_2` [rad/s].
    pub detuning: [f64; 2],
    /// Cavity amplitude decay rate [rad/s].
    pub kappa: f64,
    /// Potential Hessian `d_q d_q' V` [SI].
    pub hessian: [[f64; 6]; 6],
    /// `d_{b_j} d_q V` [SI].
    pub mixed: [[Complex64; 6]; 2],
    /// Tweezer minimum is degenerate (psi = 0 or pi/4).
    pub degenerate: bool,
}

impl LinearizedSystem {
    /// Builds frequencies and couplings from potential derivatives.
    pub fn from_derivatives(
        setup: &Setup,
        d: &PotentialDerivatives,
        b0: Complex64,
        detuning: [f64; 2],
        equilibrium: Option<&Equilibrium>,
    ) -> Self {
        let tm = tweezer_minimum(&setup.tweezer);
        let mass = Coord::ALL.map(|q| q.effective_mass(&setup.particle));
        let omega_sq: [f64; 6] = std::array::from_fn(|i| d.hessian[i][i] / mass[i]);
        let stable = omega_sq.map(|w2| w2 > 0.0 && w2.is_finite());
        let omega: [f64; 6] =
            std::array::from_fn(|i| if stable[i] { omega_sq[i].sqrt() } else { 0.0 });
        let q_zp: [f64; 6] = std::array::from_fn(|i| {
            if stable[i] {
                (HBAR / (2.0 * mass[i] * omega[i])).sqrt()
            } else {
                0.0
            }
        });
        let g_mech = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                if i == j {
                    0.0
                } else {
                    -q_zp[i] * q_zp[j] * d.hessian[i][j] / HBAR
                }
            })
        });
        let g_opt =
            std::array::from_fn(|j| std::array::from_fn(|q| -d.mixed[j][q] * (q_zp[q] / HBAR)));
        let b_tw = [b0, Complex64::new(0.0, 0.0)];
        let (q_eq, b_eq) = match equilibrium {
            Some(e) => (e.q_eq, e.b_eq),
            None => (tm.q, b_tw),
        };
        Self {
            q_tw: tm.q,
            q_eq,
            b_tw,
            b0,
            b_eq,
            omega_sq,
            omega,
            mass,
            q_zp,
            stable,
            g_mech,
            g_opt,
            detuning,
            kappa: setup.cavity.linewidth,
            hessian: d.hessian,
            mixed: d.mixed,
            degenerate: tm.degenerate,
        }
    }

    pub fn all_stable(&self) -> bool {
        self.stable.iter().all(|&s| s)
    }
}

/// Harmonic parameters from the closed forms, evaluated at the tweezer
/// minimum. The equilibrium, if supplied, is only recorded.
pub fn harmonic_parameters(setup: &Setup, equilibrium: Option<&Equilibrium>) -> LinearizedSystem {
    let cf = closed_form(setup);
    LinearizedSystem::from_derivatives(
        setup,
        &cf.derivatives(setup),
        cf.b0,
        cf.detuning,
        equilibrium,
    )
}

/// Oracle model for the closed forms: no cavity envelope and no free-space
/// scattering in the cavity operators.
pub fn oracle_setup(setup: &Setup) -> Setup {
    setup.with_options(ModelOptions {
        cavity_envelope: false,
        scattering_loss: false,
        ..setup.options
    })
}

/// `b_tw = b_s(q_tw)` for the given setup.
pub fn tweezer_field(setup: &Setup) -> [Complex64; 2] {
    let q = tweezer_minimum(&setup.tweezer).q;
    let bs = CavityJet::new(setup, &local_at(setup, &q)).stationary();
    [bs[0], bs[1]]
}

/// Harmonic parameters from the generic second-derivative definitions at
/// `(q_tw, b_tw)` by finite differences on `setup` as given.
pub fn fd_parameters(setup: &Setup) -> LinearizedSystem {
    let q = tweezer_minimum(&setup.tweezer).q;
    let b = tweezer_field(setup);
    let d = fd_derivatives(setup, &q, &b);
    let ops = crate::cavity::cavity_operators(setup, &Vector3::zeros(), &split(&q).1);
    let detuning = [ops.delta_eff[(0, 0)], ops.delta_eff[(1, 1)]];
    let mut lin = LinearizedSystem::from_derivatives(setup, &d, b[0], detuning, None);
    lin.b_tw = b;
    lin
}

/// Solves the equilibrium (conservative forces) and returns the closed-form
/// linearization together with it.
pub fn linearize(setup: &Setup) -> Result<LinearizedSystem> {
    let eq = solve_equilibrium(setup, false)?;
    Ok(harmonic_parameters(setup, Some(&eq)))
}

/// Heating rates per coordinate. Rates for unconfined coordinates are
/// infinite; `xi_omega = xi_q omega_q` stays finite and is what the
/// normal-mode transform uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatingRates {
    pub recoil: [f64; 6],
    pub gas: [f64; 6],
    pub total: [f64; 6],
    /// `xi_q omega_q` [rad/s^2].
    pub xi_omega: [f64; 6],
    /// Gas damping rate (identical for all coordinates) [1/s].
    pub gas_damping: f64,
}

fn rate_from(xw: f64, omega: f64) -> f64 {
    if omega > 0.0 {
        xw / omega
    } else if xw == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Recoil heating `xi_q omega_q` [rad/s^2] for all six coordinates.
pub fn recoil_rates_omega(setup: &Setup) -> [f64; 6] {
    let p = &setup.particle;
    let q_tw = tweezer_minimum(&setup.tweezer).q;
    let chi = susceptibility_lab(p, &split(&q_tw).1).map(c);
    let ce = chi * setup.basis.e_t;
    let n2: f64 = ce.iter().map(|z| z.norm_sqr()).sum();
    let gamma = setup.gamma_sc;
    let eps2 = setup.drive * setup.drive;
    let k = setup.k;
    let u = 5.0 * (1.0 - 1.0 / (k * setup.rayleigh_range)).powi(2);
    let mut out = [0.0; 6];
    for i in 0..3 {
        let extra = if i == 2 { u } else { 0.0 };
        let bracket = (2.0 + extra) * n2 - ce[i].norm_sqr();
        // q_zp^2 omega = hbar / 2m
        out[i] = gamma * eps2 * k * k / 5.0 * bracket * HBAR / (2.0 * p.mass);
    }
    let [chi_a, chi_b, chi_c] = p.susceptibility;
    let dchi = [
        (chi_b - chi_c).abs(),
        (chi_c - chi_a).abs(),
        (chi_a - chi_b).abs(),
    ];
    let (sp, cp) = setup.tweezer.ellipticity.sin_cos();
    let factor = [1.0, 1.0 - sp * sp, 1.0 - cp * cp];
    for a in 0..3 {
        out[3 + a] = gamma * eps2 * dchi[a].powi(2) * factor[a] * HBAR / (2.0 * p.inertia[a]);
    }
    out
}

/// Recoil heating rates `xi_q^rec` [1/s].
pub fn recoil_rates(setup: &Setup, lin: &LinearizedSystem) -> [f64; 6] {
    let xw = recoil_rates_omega(setup);
    std::array::from_fn(|i| rate_from(xw[i], lin.omega[i]))
}

/// Background gas parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasConfig {
    /// Pressure [Pa].
    pub pressure: f64,
    /// Temperature [K].
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Mass of the gas atoms [kg].
    #[serde(default = "default_atom_mass")]
    pub atom_mass: f64,
}

fn default_temperature() -> f64 {
    300.0
}

fn default_atom_mass() -> f64 {
    HELIUM_MASS
}

impl Default for GasConfig {
    fn default() -> Self {
        Self {
            pressure: 1e-6,
            temperature: default_temperature(),
            atom_mass: default_atom_mass(),
        }
    }
}

impl GasConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pressure >= 0.0 && self.pressure.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "gas pressure out of range: {}",
                self.pressure
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "gas temperature out of range: {}",
                self.temperature
            )));
        }
        if !(self.atom_mass > 0.0) {
            return Err(Error::InvalidInput(format!(
                "gas atom mass out of range: {}",
                self.atom_mass
            )));
        }
        Ok(())
    }
}

/// Gas damping rate `5 p l_b^2 / 6m sqrt(2 pi mu / k_B T)` [1/s].
pub fn gas_damping(gas: &GasConfig, props: &crate::particle::ParticleProps) -> f64 {
    let lb = props.spec.diameters[1];
    5.0 * gas.pressure * lb * lb / (6.0 * props.mass)
        * (2.0 * std::f64::consts::PI * gas.atom_mass / (K_B * gas.temperature)).sqrt()
}

/// Gas heating rates `xi_q^gas = k_B gamma T / hbar omega_q` [1/s] and the
/// damping rate.
pub fn gas_rates(
    gas: &GasConfig,
    props: &crate::particle::ParticleProps,
    lin: &LinearizedSystem,
) -> ([f64; 6], f64) {
    let g = gas_damping(gas, props);
    let xw = K_B * g * gas.temperature / HBAR;
    (std::array::from_fn(|i| rate_from(xw, lin.omega[i])), g)
}

/// Recoil plus gas heating.
pub fn heating_rates(setup: &Setup, gas: &GasConfig, lin: &LinearizedSystem) -> HeatingRates {
    let rec_w = recoil_rates_omega(setup);
    let g = gas_damping(gas, &setup.particle);
    let gas_w = K_B * g * gas.temperature / HBAR;
    let xi_omega = rec_w.map(|r| r + gas_w);
    let recoil = std::array::from_fn(|i| rate_from(rec_w[i], lin.omega[i]));
    let gas_r = std::array::from_fn(|i| rate_from(gas_w, lin.omega[i]));
    let total = std::array::from_fn(|i| rate_from(xi_omega[i], lin.omega[i]));
    HeatingRates {
        recoil,
        gas: gas_r,
        total,
        xi_omega,
        gas_damping: g,
    }
}

/// Weak-coupling cooling quantities of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occupation {
    /// Cooling rate `gamma^-` [1/s].
    pub gamma_minus: f64,
    /// Heating rate `gamma^+` [1/s].
    pub gamma_plus: f64,
    /// Net optomechanical damping `gamma^- - gamma^+` [1/s].
    pub gamma: f64,
    /// Shifted frequency [rad/s].
    pub omega_shifted: f64,
    /// Steady-state occupation; infinite when not cooled.
    pub n: f64,
    pub status: CoolingStatus,
    /// `gamma^-` or `gamma^+` exceeds `kappa / 10`.
    pub strong_coupling: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoolingStatus {
    Cooled,
    /// `gamma^- <= gamma^+` with nonzero coupling.
    HeatingDominated,
    /// No optomechanical damping at all.
    Uncooled,
    /// The mode itself is not confined.
    Unconfined,
}

impl CoolingStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CoolingStatus::Cooled => "cooled",
            CoolingStatus::HeatingDominated => "heating-dominated",
            CoolingStatus::Uncooled => "uncooled",
            CoolingStatus::Unconfined => "unconfined",
        }
    }
}

/// Cavity susceptibility `1 / (kappa - i (Delta + omega))`.
pub fn cavity_susceptibility(kappa: f64, delta: f64, omega: f64) -> Complex64 {
    Complex64::new(1.0, 0.0) / Complex64::new(kappa, -(delta + omega))
}

/// Weak-coupling rates, frequency shift and occupation of a single mode.
pub fn occupation(g: Complex64, omega: f64, xi: f64, delta: f64, kappa: f64) -> Occupation {
    let g2 = g.norm_sqr();
    let gm = 2.0 * g2 * kappa / (kappa * kappa + (delta + omega).powi(2));
    let gp = 2.0 * g2 * kappa / (kappa * kappa + (delta - omega).powi(2));
    let shift = g2
        * (cavity_susceptibility(kappa, delta, omega)
            + cavity_susceptibility(kappa, delta, -omega))
        .im;
    let gamma = gm - gp;
    let (n, status) = if g2 == 0.0 || gamma == 0.0 && gm == 0.0 {
        (
            if xi > 0.0 { f64::INFINITY } else { f64::NAN },
            CoolingStatus::Uncooled,
        )
    } else if gm <= gp {
        (f64::INFINITY, CoolingStatus::HeatingDominated)
    } else {
        ((gp + xi) / gamma, CoolingStatus::Cooled)
    };
    Occupation {
        gamma_minus: gm,
        gamma_plus: gp,
        gamma,
        omega_shifted: omega + shift,
        n,
        status,
        strong_coupling: gm.max(gp) > 0.1 * kappa,
    }
}

/// One normal mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalMode {
    /// Bare coordinate with the largest weight.
    pub label: Coord,
    /// Cavity mode index the mode couples to (0 or 1).
    pub cavity_mode: usize,
    pub omega_sq: f64,
    /// Frequency [rad/s]; 0 if unconfined.
    pub omega: f64,
    pub stable: bool,
    pub g: Complex64,
    pub xi: f64,
    /// Orthogonal eigenvector weights over the block coordinates.
    pub weights: Vec<f64>,
    pub cooling: Occupation,
}

/// Normal modes of both blocks; `modes` is ordered like [`Coord::ALL`] by
/// label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalModeSystem {
    pub modes: Vec<NormalMode>,
    /// Bare frequencies (for the canonical transform).
    pub bare_omega: [f64; 6],
    pub detuning: [f64; 2],
    pub kappa: f64,
}

impl NormalModeSystem {
    pub fn mode(&self, label: Coord) -> &NormalMode {
        self.modes
            .iter()
            .find(|m| m.label == label)
            .expect("every label is assigned")
    }

    /// Errors with the name of the first block containing an unconfined mode.
    pub fn require_stable(&self) -> Result<()> {
        for (j, name) in [(0, "S1' {x', y', z', alpha'}"), (1, "S2' {beta', gamma'}")] {
            let bad: Vec<&str> = self
                .modes
                .iter()
                .filter(|m| m.cavity_mode == j && !m.stable)
                .map(|m| m.label.name())
                .collect();
            if !bad.is_empty() {
                return Err(Error::Unstable {
                    block: name.to_string(),
                    detail: format!(
                        "non-positive-definite quadratic form (unconfined: {})",
                        bad.join(", ")
                    ),
                });
            }
        }
        Ok(())
    }

    /// Canonical transform `X_q = sum_Q A_qQ X_Q`, `P_q = sum_Q B_qQ P_Q`
    /// for one block in zero-point units, if the block is fully confined.
    pub fn transform(&self, j: usize) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let coords = block_coords(j);
        let modes: Vec<&NormalMode> = self.modes.iter().filter(|m| m.cavity_mode == j).collect();
        if modes.iter().any(|m| !m.stable)
            || coords.iter().any(|q| self.bare_omega[q.index()] <= 0.0)
        {
            return None;
        }
        let n = coords.len();
        let a = DMatrix::from_fn(n, n, |r, col| {
            let wq = self.bare_omega[coords[r].index()];
            modes[col].weights[r] * (wq / modes[col].omega).sqrt()
        });
        let b = DMatrix::from_fn(n, n, |r, col| {
            let wq = self.bare_omega[coords[r].index()];
            modes[col].weights[r] * (modes[col].omega / wq).sqrt()
        });
        Some((a, b))
    }

    /// `max |S^T J S - J|` over the confined blocks.
    pub fn symplectic_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for j in 0..2 {
            if let Some((a, b)) = self.transform(j) {
                let n = a.nrows();
                // S = diag(A, B); S^T J S - J has off-diagonal blocks A^T B - 1.
                let d = a.transpose() * b - DMatrix::<f64>::identity(n, n);
                err = err.max(d.amax());
            }
        }
        err
    }
}

/// Block-wise diagonalization of the mechanical quadratic form, followed by
/// the transformation of couplings and heating rates and the weak-coupling
/// cooling analysis.
pub fn normal_modes(lin: &LinearizedSystem, heat: &HeatingRates) -> NormalModeSystem {
    let mut modes = Vec::with_capacity(6);
    for j in 0..2 {
        let coords = block_coords(j);
        let n = coords.len();
        let dm = DMatrix::from_fn(n, n, |r, col| {
            let (a, b) = (coords[r].index(), coords[col].index());
            lin.hessian[a][b] / (lin.mass[a] * lin.mass[b]).sqrt()
        });
        let eig = SymmetricEigen::new(dm);
        // label assignment by largest weight, greedy
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for qi in 0..n {
            for mi in 0..n {
                pairs.push((eig.eigenvectors[(qi, mi)].abs(), qi, mi));
            }
        }
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut label_of = vec![usize::MAX; n];
        let mut used = vec![false; n];
        for (_, qi, mi) in pairs {
            if label_of[mi] == usize::MAX && !used[qi] {
                label_of[mi] = qi;
                used[qi] = true;
            }
        }
        for mi in 0..n {
            let qi = label_of[mi];
            let mut weights: Vec<f64> = (0..n).map(|r| eig.eigenvectors[(r, mi)]).collect();
            if weights[qi] < 0.0 {
                weights.iter_mut().for_each(|w| *w = -*w);
            }
            let w2 = eig.eigenvalues[mi];
            let stable = w2 > 0.0 && lin.hessian[coords[qi].index()][coords[qi].index()] != 0.0;
            let omega = if stable { w2.sqrt() } else { 0.0 };
            let (g, xi) = if stable {
                let mut g = Complex64::new(0.0, 0.0);
                let mut xw = 0.0;
                for (r, q) in coords.iter().enumerate() {
                    let qq = q.index();
                    g -= lin.mixed[j][qq]
                        * (weights[r] / (2.0 * HBAR * lin.mass[qq] * omega).sqrt());
                    xw += weights[r] * weights[r] * heat.xi_omega[qq];
                }
                (g, xw / omega)
            } else {
                (Complex64::new(0.0, 0.0), f64::INFINITY)
            };
            let cooling = if stable {
                occupation(g, omega, xi, lin.detuning[j], lin.kappa)
            } else {
                Occupation {
                    gamma_minus: 0.0,
                    gamma_plus: 0.0,
                    gamma: 0.0,
                    omega_shifted: 0.0,
                    n: f64::INFINITY,
                    status: CoolingStatus::Unconfined,
                    strong_coupling: false,
                }
            };
            modes.push(NormalMode {
                label: coords[qi],
                cavity_mode: j,
                omega_sq: w2,
                omega,
                stable,
                g,
                xi,
                weights,
                cooling,
            });
        }
    }
    modes.sort_by_key(|m| m.label);
    NormalModeSystem {
        modes,
        bare_omega: lin.omega,
        detuning: lin.detuning,
        kappa: lin.kappa,
    }
}

/// Rule for choosing the bare detuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetuningPolicy {
    /// Use the configured detuning.
    #[default]
    Fixed,
    /// Negative mean of the confined librational frequencies.
    MeanLibrational,
    /// Negative mean of all confined frequencies.
    MeanAll,
}

/// Applies a detuning policy. The average runs over the coordinates confined
/// by the tweezer alone; the detuning is iterated to a fixed point (change below
/// `1e-9` relative, at most 20 rounds), falling back to bisection when the
/// iteration does not contract. Returns the updated setup and the number of rounds.
pub fn apply_detuning_policy(setup: &Setup, policy: DetuningPolicy) -> Result<(Setup, usize)> {
    let coords: &[Coord] = match policy {
        DetuningPolicy::Fixed => return Ok((*setup, 0)),
        DetuningPolicy::MeanLibrational => &[Coord::Alpha, Coord::Beta, Coord::Gamma],
        DetuningPolicy::MeanAll => &Coord::ALL,
    };
    let bare = setup.with_options(ModelOptions {
        cavity_enabled: false,
        ..setup.options
    });
    let bare_lin = harmonic_parameters(&bare, None);
    let used: Vec<Coord> = coords
        .iter()
        .copied()
        .filter(|q| bare_lin.stable[q.index()])
        .collect();
    if used.is_empty() {
        return Err(Error::Unstable {
            block: "detuning policy".into(),
            detail: "no confined mode to average".into(),
        });
    }
    // Modes destabilized by the cavity field count with zero frequency,
    // which keeps the map continuous in the detuning.
    let target = |delta: f64| -> f64 {
        let mut s = *setup;
        s.cavity.detuning = delta;
        let lin = harmonic_parameters(&s, None);
        -used
            .iter()
            .map(|q| lin.omega_sq[q.index()].max(0.0).sqrt())
            .sum::<f64>()
            / used.len() as f64
    };
    let done = |delta: f64, rounds: usize| {
        let mut s = *setup;
        s.cavity.detuning = delta;
        Ok((s, rounds))
    };
    let mut delta =
        -used.iter().map(|q| bare_lin.omega[q.index()]).sum::<f64>() / used.len() as f64;
    for it in 1..=20 {
        let next = target(delta);
        let change = (next - delta).abs();
        delta = next;
        if change <= 1e-9 * delta.abs() {
            return done(delta, it);
        }
    }
    // Bisection on target(d) - d, which is negative at d = 0.
    let f = |d: f64| target(d) - d;
    let (mut hi, mut lo) = (0.0, 2.0 * delta.min(-1.0));
    let mut rounds = 20;
    while f(lo) <= 0.0 {
        lo *= 2.0;
        rounds += 1;
        if rounds > 100 {
            return Err(Error::NoConvergence {
                iterations: rounds,
                residual: f(lo).abs(),
            });
        }
    }
    while hi - lo > 1e-10 * lo.abs() {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        rounds += 1;
    }
    done(0.5 * (lo + hi), rounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{BeamProfile, CavityConfig};
    use crate::particle::{ParticleProps, ParticleSpec};

    fn setup_with(diam: [f64; 3], psi: f64, phi: f64, theta: f64, zeta: f64, delta: f64) -> Setup {
        let props = ParticleProps::new(&ParticleSpec::new(diam, 2.1, 2200.0).unwrap()).unwrap();
        let tw = TweezerConfig {
            power: 0.1,
            waist_x: 1.6e-6,
            waist_y: 1.3e-6,
            wavelength: 1550e-9,
            ellipticity: psi,
            rotation: zeta,
            profile: BeamProfile::Gaussian,
        };
        let cav = CavityConfig {
            length: 3e-3,
            waist: 40e-6,
            phase: phi,
            linewidth: 2.0 * std::f64::consts::PI * 2e6,
            angle: theta,
            detuning: delta,
        };
        Setup::new(props, tw, cav, ModelOptions::default()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn tweezer_minimum_location() {
        let s = setup_with([40e-9, 60e-9, 140e-9], 0.5, 0.0, 1.0, 0.3, -1e6);
        let tm = tweezer_minimum(&s.tweezer);
        assert_eq!(
            tm.q,
            [0.0, 0.0, 0.0, -0.3, std::f64::consts::FRAC_PI_2, 0.0]
        );
        assert!(!tm.degenerate);
        let mut tw = s.tweezer;
        tw.ellipticity = 0.0;
        assert!(tweezer_minimum(&tw).degenerate);
    }

    #[test]
    fn closed_form_matches_fd_single_case() {
        let s = oracle_setup(&setup_with(
            [40e-9, 60e-9, 140e-9],
            0.5,
            0.7,
            1.1,
            0.2,
            -2.0 * std::f64::consts::PI * 3e5,
        ));
        let cf = harmonic_parameters(&s, None);
        let fd = fd_parameters(&s);
        assert!((cf.b0 - fd.b_tw[0]).norm() < 1e-12 * cf.b0.norm());
        for i in 0..6 {
            assert!(
                rel(cf.omega_sq[i], fd.omega_sq[i]) < 1e-6,
                "omega_sq[{i}]: {} vs {}",
                cf.omega_sq[i],
                fd.omega_sq[i]
            );
        }
        for i in 0..6 {
            for j in 0..6 {
                let (a, b) = (cf.hessian[i][j], fd.hessian[i][j]);
                if i != j {
                    assert!(
                        (a - b).abs()
                            <= 1e-6 * a.abs().max(b.abs())
                                + 1e-9
                                    * (cf.hessian[i][i].abs() * cf.hessian[j][j].abs()).sqrt()
                                    * 1e-3,
                        "H[{i}][{j}]: {a} vs {b}"
                    );
                }
            }
        }
        for jj in 0..2 {
            for q in 0..6 {
                let (a, b) = (cf.mixed[jj][q], fd.mixed[jj][q]);
                assert!(
                    (a - b).norm() <= 1e-6 * a.norm().max(b.norm()) + 1e-30,
                    "mixed[{jj}][{q}]: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn node_equilibrium_is_tweezer_minimum() {
        let s = setup_with(
            [40e-9, 60e-9, 140e-9],
            0.5,
            std::f64::consts::FRAC_PI_2,
            1.1,
            0.0,
            -1e6,
        );
        let eq = solve_equilibrium(&s, false).unwrap();
        assert_eq!(eq.q_eq, tweezer_minimum(&s.tweezer).q);
        assert_eq!(eq.iterations, 0);
    }

    #[test]
    fn equilibrium_with_cavity_converges() {
        let s = setup_with(
            [40e-9, 60e-9, 140e-9],
            0.5,
            0.6,
            1.1,
            0.0,
            -2.0 * std::f64::consts::PI * 2e5,
        );
        let eq = solve_equilibrium(&s, true).unwrap();
        assert!(eq.residual <= 1e-12);
        let (f, _) = equilibrium_force(&s, &eq.q_eq, true);
        assert!(f.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn occupation_reference_case() {
        let o = occupation(c(0.1), 10.0, 0.0, -10.0, 1.0);
        assert!((o.gamma_minus - 0.02).abs() < 1e-15);
        assert!((o.gamma_plus - 0.02 / 401.0).abs() < 1e-17);
        assert!((o.n - 1.0 / 400.0).abs() < 1e-14);
        assert_eq!(o.status, CoolingStatus::Cooled);
        let blue = occupation(c(0.1), 10.0, 0.0, 10.0, 1.0);
        assert_eq!(blue.status, CoolingStatus::HeatingDominated);
        let none = occupation(c(0.0), 10.0, 1.0, -10.0, 1.0);
        assert_eq!(none.status, CoolingStatus::Uncooled);
        assert!(none.n.is_infinite());
    }

    #[test]
    fn sphere_has_no_rotational_recoil() {
        let s = setup_with([70e-9; 3], 0.4, 0.0, 1.0, 0.0, -1e6);
        let r = recoil_rates_omega(&s);
        assert_eq!(&r[3..], &[0.0, 0.0, 0.0]);
        assert!(r[0] > 0.0 && r[2] > r[0]);
    }

    #[test]
    fn uncoupled_normal_modes_are_identity() {
        let s = setup_with(
            [40e-9, 60e-9, 140e-9],
            0.5,
            std::f64::consts::FRAC_PI_2,
            1.1,
            0.0,
            -1e6,
        );
        let mut lin = harmonic_parameters(&s, None);
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    lin.hessian[i][j] = 0.0;
                }
            }
        }
        let heat = heating_rates(&s, &GasConfig::default(), &lin);
        let nm = normal_modes(&lin, &heat);
        for q in Coord::ALL {
            let m = nm.mode(q);
            assert!(rel(m.omega, lin.omega[q.index()]) < 1e-14);
            assert!(rel(m.xi, heat.total[q.index()]) < 1e-12);
        }
        assert!(nm.symplectic_error() < 1e-12);
    }
}
