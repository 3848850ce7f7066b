//! Classical time evolution of the particle and cavity amplitudes, either
//! fully coupled or with the cavity slaved quasi-statically to the motion.
//!
//! Orientations are stored as `frame * R(alpha, beta, gamma)`. The fixed
//! `frame` is replaced whenever `|sin beta|` gets small, so the Euler chart
//! never reaches its singularity.

use std::cell::Cell;
use std::io::Write;

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;

use crate::cavity::{
    contraction_rate_from_jet, friction_from_jet, momentum_hessian, quasi_static_from_jet,
    to_array, CavityJet,
};
use crate::constants::HBAR;
use crate::dipole_forces::{generalized_forces_at, potential_at, LocalOptics};
use crate::error::{Error, Result};
use crate::ode::{self, Tolerances};
use crate::optics::Setup;
use crate::particle::{
    body_angular_momentum, kinetic_energy, kinetic_energy_angle_gradient,
    momenta_from_body_angular_momentum, rates_from_momenta, rotation_matrix, EulerAngles,
    RotorMomenta,
};

/// Chart changes are triggered below this `|sin beta|`.
pub const REANCHOR_SIN_BETA: f64 = 1e-3;

/// Complete classical state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullState {
    pub t: f64,
    pub r: Vector3<f64>,
    pub angles: EulerAngles,
    pub p: Vector3<f64>,
    pub p_rot: RotorMomenta,
    pub b: [Complex64; 2],
    /// Fixed chart rotation; the orientation is `frame * R(angles)`.
    pub frame: Matrix3<f64>,
}

impl FullState {
    pub fn new(
        r: Vector3<f64>,
        angles: EulerAngles,
        p: Vector3<f64>,
        p_rot: RotorMomenta,
        b: [Complex64; 2],
    ) -> Self {
        Self {
            t: 0.0,
            r,
            angles,
            p,
            p_rot,
            b,
            frame: Matrix3::identity(),
        }
    }

    pub fn orientation(&self) -> Matrix3<f64> {
        self.frame * rotation_matrix(&self.angles)
    }

    fn mechanical(&self) -> [f64; 12] {
        let a = self.angles;
        [
            self.r[0],
            self.r[1],
            self.r[2],
            a.alpha,
            a.beta,
            a.gamma,
            self.p[0],
            self.p[1],
            self.p[2],
            self.p_rot.p_alpha,
            self.p_rot.p_beta,
            self.p_rot.p_gamma,
        ]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.mechanical().to_vec();
        v.extend_from_slice(&[self.b[0].re, self.b[0].im, self.b[1].re, self.b[1].im]);
        v
    }

    fn from_slice(t: f64, y: &[f64], frame: Matrix3<f64>) -> Self {
        let b = if y.len() >= 16 {
            [Complex64::new(y[12], y[13]), Complex64::new(y[14], y[15])]
        } else {
            [Complex64::new(0.0, 0.0); 2]
        };
        Self {
            t,
            r: Vector3::new(y[0], y[1], y[2]),
            angles: EulerAngles::new(y[3], y[4], y[5]),
            p: Vector3::new(y[6], y[7], y[8]),
            p_rot: RotorMomenta::new(y[9], y[10], y[11]),
            b,
            frame,
        }
    }

    /// Lab-frame rotational angular momentum.
    pub fn angular_momentum(&self) -> Result<Vector3<f64>> {
        Ok(self.orientation() * body_angular_momentum(&self.angles, &self.p_rot)?)
    }

    /// Generalized velocities: `p/m` and Euler-angle rates.
    pub fn velocities(&self, setup: &Setup) -> Result<[f64; 6]> {
        let rates = rates_from_momenta(&setup.particle, &self.angles, &self.p_rot)?;
        let m = setup.particle.mass;
        Ok([
            self.p[0] / m,
            self.p[1] / m,
            self.p[2] / m,
            rates[0],
            rates[1],
            rates[2],
        ])
    }

    /// Same physical state expressed in the chart centred on `beta = pi/2`.
    pub fn reanchored(&self) -> Result<Self> {
        let j_body = body_angular_momentum(&self.angles, &self.p_rot)?;
        let anchor = EulerAngles::new(0.0, std::f64::consts::FRAC_PI_2, 0.0);
        let frame = self.orientation() * rotation_matrix(&anchor).transpose();
        Ok(Self {
            angles: anchor,
            p_rot: momenta_from_body_angular_momentum(&anchor, &j_body),
            frame,
            ..*self
        })
    }
}

/// Total energy `H_0 + V_opt - hbar Delta |b|^2` of the closed system.
pub fn hamiltonian(setup: &Setup, s: &FullState) -> Result<f64> {
    let local = LocalOptics::new(setup, &s.r, &s.frame, &s.angles);
    let cav = if setup.options.cavity_enabled {
        -HBAR * setup.cavity.detuning * (s.b[0].norm_sqr() + s.b[1].norm_sqr())
    } else {
        0.0
    };
    Ok(kinetic_energy(&setup.particle, &s.angles, &s.p_rot, &s.p)?
        + potential_at(setup, &local, &s.b)
        + cav)
}

/// Energy with the cavity at its stationary value.
pub fn effective_energy(setup: &Setup, s: &FullState) -> Result<f64> {
    let local = LocalOptics::new(setup, &s.r, &s.frame, &s.angles);
    let bs = if setup.options.cavity_enabled {
        to_array(&CavityJet::new(setup, &local).stationary())
    } else {
        [Complex64::new(0.0, 0.0); 2]
    };
    hamiltonian(setup, &FullState { b: bs, ..*s })
}

fn mechanical_rhs(
    setup: &Setup,
    s: &FullState,
    b: &[Complex64; 2],
    local: &LocalOptics,
    extra: Option<&[f64; 6]>,
    dy: &mut [f64],
) -> Result<()> {
    let rates = rates_from_momenta(&setup.particle, &s.angles, &s.p_rot)?;
    let m = setup.particle.mass;
    for i in 0..3 {
        dy[i] = s.p[i] / m;
        dy[3 + i] = rates[i];
    }
    let dh = kinetic_energy_angle_gradient(&setup.particle, &s.angles, &s.p_rot)?;
    let gf = generalized_forces_at(setup, local, b);
    for q in 0..6 {
        let mut f = gf.conservative[q] + gf.radiation[q];
        if q >= 3 {
            f -= dh[q - 3];
        }
        if let Some(e) = extra {
            f += e[q];
        }
        dy[6 + q] = f;
    }
    Ok(())
}

/// Time derivative of the full 16-component state vector (mechanics, then
/// `Re b_1, Im b_1, Re b_2, Im b_2`).
pub fn derivatives_full(setup: &Setup, state: &FullState) -> Result<Vec<f64>> {
    let mut dy = vec![0.0; 16];
    full_rhs(setup, state, &mut dy)?;
    Ok(dy)
}

fn full_rhs(setup: &Setup, s: &FullState, dy: &mut [f64]) -> Result<()> {
    let local = LocalOptics::new(setup, &s.r, &s.frame, &s.angles);
    mechanical_rhs(setup, s, &s.b, &local, None, dy)?;
    if setup.options.cavity_enabled {
        let ops = CavityJet::new(setup, &local).ops;
        for j in 0..2 {
            let bd = ops.a[(j, 0)] * s.b[0] + ops.a[(j, 1)] * s.b[1] + ops.eta[j];
            dy[12 + 2 * j] = bd.re;
            dy[13 + 2 * j] = bd.im;
        }
    } else {
        dy[12..16].iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(())
}

/// Quasi-static mechanical right-hand side: forces from the stationary field,
/// radiation pressure at `b_s`, and the velocity-linear friction force.
fn quasistatic_rhs(setup: &Setup, s: &FullState, dy: &mut [f64]) -> Result<()> {
    let local = LocalOptics::new(setup, &s.r, &s.frame, &s.angles);
    if !setup.options.cavity_enabled {
        return mechanical_rhs(setup, s, &[Complex64::new(0.0, 0.0); 2], &local, None, dy);
    }
    let jet = CavityJet::new(setup, &local);
    let qdot = s.velocities(setup)?;
    let qs = quasi_static_from_jet(&jet, &qdot);
    let fric = friction_from_jet(setup, &local, &jet, &qs.correction).total();
    mechanical_rhs(setup, s, &qs.stationary, &local, Some(&fric), dy)
}

/// Which equations of motion to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Full,
    QuasiStatic,
}

/// Sampled trajectory with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub model: Model,
    pub states: Vec<FullState>,
    /// Closed-system energy (full) or energy at the stationary field
    /// (quasi-static) [J].
    pub energy: Vec<f64>,
    pub populations: Vec<[f64; 2]>,
    pub angular_momentum: Vec<Vector3<f64>>,
    /// `ln |det Phi|` of the tangent flow, when requested.
    pub log_det_tangent: Option<Vec<f64>>,
    /// Times at which the Euler chart was re-anchored.
    pub reanchor_times: Vec<f64>,
    pub stats: ode::Stats,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    /// Writes the record as CSV with a schema comment line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# levicool trajectory v1")?;
        let mut header = vec![
            "t_s",
            "x_m",
            "y_m",
            "z_m",
            "alpha_rad",
            "beta_rad",
            "gamma_rad",
            "px_kg_m_s",
            "py_kg_m_s",
            "pz_kg_m_s",
            "palpha_kg_m2_s",
            "pbeta_kg_m2_s",
            "pgamma_kg_m2_s",
            "re_b1",
            "im_b1",
            "re_b2",
            "im_b2",
            "energy_J",
            "n_b1",
            "n_b2",
            "Jx_kg_m2_s",
            "Jy_kg_m2_s",
            "Jz_kg_m2_s",
        ];
        if self.log_det_tangent.is_some() {
            header.push("log_det_tangent");
        }
        writeln!(w, "{}", header.join(","))?;
        for (i, s) in self.states.iter().enumerate() {
            let mut cols: Vec<String> = std::iter::once(s.t)
                .chain(s.to_vec())
                .map(|v| format!("{v:.12e}"))
                .collect();
            cols.push(format!("{:.12e}", self.energy[i]));
            cols.push(format!("{:.12e}", self.populations[i][0]));
            cols.push(format!("{:.12e}", self.populations[i][1]));
            for k in 0..3 {
                cols.push(format!("{:.12e}", self.angular_momentum[i][k]));
            }
            if let Some(ld) = &self.log_det_tangent {
                cols.push(format!("{:.12e}", ld[i]));
            }
            writeln!(w, "{}", cols.join(","))?;
        }
        Ok(())
    }
}

/// Characteristic magnitudes used to scale absolute tolerances.
pub fn state_scales(setup: &Setup) -> Vec<f64> {
    let len = 1.0 / setup.k;
    let energy = (HBAR * setup.u0.abs() * setup.drive * setup.drive).max(1e-30);
    let pm = (setup.particle.mass * energy).sqrt();
    let pr = (setup.particle.inertia[2] * energy).sqrt();
    let bmax = 1.0;
    vec![
        len, len, len, 1.0, 1.0, 1.0, pm, pm, pm, pr, pr, pr, bmax, bmax, bmax, bmax,
    ]
}

fn validate_state(s: &FullState) -> Result<()> {
    if s.to_vec().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "state has non-finite components".into(),
        ));
    }
    Ok(())
}

fn sample_grid(t0: f64, t_end: f64, samples: usize) -> Result<Vec<f64>> {
    if !(t_end >= t0) {
        return Err(Error::InvalidInput(format!(
            "end time {t_end} precedes start time {t0}"
        )));
    }
    if t_end == t0 || samples == 0 {
        return Ok(vec![]);
    }
    let n = samples.max(1);
    Ok((1..=n)
        .map(|i| t0 + (t_end - t0) * i as f64 / n as f64)
        .collect())
}

fn finish(
    setup: &Setup,
    model: Model,
    mut states: Vec<FullState>,
    log_det: Option<Vec<f64>>,
    reanchor: Vec<f64>,
    stats: ode::Stats,
) -> Result<TrajectoryRecord> {
    let mut energy = Vec::with_capacity(states.len());
    let mut pops = Vec::with_capacity(states.len());
    let mut jl = Vec::with_capacity(states.len());
    for s in states.iter_mut() {
        let (e, b) = match model {
            Model::Full => (hamiltonian(setup, s)?, s.b),
            Model::QuasiStatic => {
                let local = LocalOptics::new(setup, &s.r, &s.frame, &s.angles);
                let b = if setup.options.cavity_enabled {
                    to_array(&CavityJet::new(setup, &local).stationary())
                } else {
                    [Complex64::new(0.0, 0.0); 2]
                };
                (hamiltonian(setup, &FullState { b, ..*s })?, b)
            }
        };
        s.b = b;
        energy.push(e);
        pops.push([b[0].norm_sqr(), b[1].norm_sqr()]);
        jl.push(s.angular_momentum()?);
    }
    Ok(TrajectoryRecord {
        model,
        states,
        energy,
        populations: pops,
        angular_momentum: jl,
        log_det_tangent: log_det,
        reanchor_times: reanchor,
        stats,
    })
}

fn run(
    setup: &Setup,
    model: Model,
    state0: &FullState,
    t_end: f64,
    samples: usize,
    tol: Tolerances,
    tangent: bool,
) -> Result<TrajectoryRecord> {
    validate_state(state0)?;
    let grid = sample_grid(state0.t, t_end, samples)?;
    let dim = match model {
        Model::Full => 16,
        Model::QuasiStatic => 12,
    };
    let base_scales: Vec<f64> = state_scales(setup)[..dim].to_vec();
    let mut y0 = state0.to_vec()[..dim].to_vec();
    let mut scales = base_scales.clone();
    if tangent {
        for i in 0..dim {
            for j in 0..dim {
                y0.push(if i == j { 1.0 } else { 0.0 });
                scales.push(1.0);
            }
        }
    }
    let frame = Cell::new(state0.frame);
    let reanchors = std::cell::RefCell::new(Vec::new());
    let rhs_base = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let s = FullState::from_slice(t, y, frame.get());
        match model {
            Model::Full => full_rhs(setup, &s, dy),
            Model::QuasiStatic => quasistatic_rhs(setup, &s, dy),
        }
    };
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        rhs_base(t, &y[..dim], &mut dy[..dim])?;
        if tangent {
            let jac = numerical_jacobian(&rhs_base, t, &y[..dim], &base_scales)?;
            let phi = DMatrix::from_row_slice(dim, dim, &y[dim..]);
            let dphi = jac * phi;
            for i in 0..dim {
                for j in 0..dim {
                    dy[dim + i * dim + j] = dphi[(i, j)];
                }
            }
        }
        Ok(())
    };
    let sample_frames = std::cell::RefCell::new(Vec::with_capacity(grid.len()));
    let post = |t: f64, y: &mut [f64]| -> Result<bool> {
        let mut changed = false;
        if y[4].sin().abs() < REANCHOR_SIN_BETA {
            if tangent {
                return Err(Error::SingularOrientation {
                    sin_beta: y[4].sin().abs(),
                    threshold: REANCHOR_SIN_BETA,
                });
            }
            let s = FullState::from_slice(t, y, frame.get());
            let n = s.reanchored()?;
            frame.set(n.frame);
            y[..dim].copy_from_slice(&n.to_vec()[..dim]);
            reanchors.borrow_mut().push(t);
            changed = true;
        }
        let mut sf = sample_frames.borrow_mut();
        if sf.len() < grid.len() && t == grid[sf.len()] {
            sf.push(frame.get());
        }
        Ok(changed)
    };
    let (ys, stats) = ode::integrate(rhs, state0.t, &y0, &grid, tol, &scales, post)?;
    let frames = sample_frames.into_inner();
    let mut states = vec![*state0];
    let mut log_det = if tangent { Some(vec![0.0]) } else { None };
    for ((t, y), f) in grid.iter().zip(ys.iter()).zip(frames.iter()) {
        let s = FullState::from_slice(*t, &y[..dim], *f);
        if let Some(ld) = log_det.as_mut() {
            let phi = DMatrix::from_row_slice(dim, dim, &y[dim..]);
            ld.push(phi.lu().determinant().abs().ln());
        }
        states.push(s);
    }
    let anchors = reanchors.into_inner();
    finish(setup, model, states, log_det, anchors, stats)
}

fn numerical_jacobian<F>(f: &F, t: f64, y: &[f64], scales: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut yp = y.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for j in 0..n {
        let h = 1e-5 * (y[j].abs() + scales[j]);
        yp[j] = y[j] + h;
        f(t, &yp, &mut fp)?;
        yp[j] = y[j] - h;
        f(t, &yp, &mut fm)?;
        yp[j] = y[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Integrates the coupled particle and cavity equations.
pub fn integrate_full(
    setup: &Setup,
    state0: &FullState,
    t_end: f64,
    samples: usize,
    tol: Tolerances,
) -> Result<TrajectoryRecord> {
    run(setup, Model::Full, state0, t_end, samples, tol, false)
}

/// Integrates the mechanics with the quasi-static cavity field. With
/// `tangent` set, the 12x12 tangent flow is integrated alongside.
pub fn integrate_quasistatic(
    setup: &Setup,
    state0: &FullState,
    t_end: f64,
    samples: usize,
    tol: Tolerances,
    tangent: bool,
) -> Result<TrajectoryRecord> {
    run(
        setup,
        Model::QuasiStatic,
        state0,
        t_end,
        samples,
        tol,
        tangent,
    )
}

/// Phase-space volume rate between consecutive samples,
/// `d/dt ln det Phi`, returned at interval midpoints.
pub fn phase_volume_rate(traj: &TrajectoryRecord) -> Result<Vec<(f64, f64)>> {
    let ld = traj.log_det_tangent.as_ref().ok_or_else(|| {
        Error::Unavailable("trajectory was integrated without the tangent flow".into())
    })?;
    let t = traj.times();
    Ok((1..t.len())
        .map(|i| {
            (
                0.5 * (t[i] + t[i - 1]),
                (ld[i] - ld[i - 1]) / (t[i] - t[i - 1]),
            )
        })
        .collect())
}

/// Instantaneous divergence of the quasi-static flow, from a numerical
/// Jacobian of the right-hand side.
pub fn flow_divergence(setup: &Setup, s: &FullState) -> Result<f64> {
    let frame = s.frame;
    let f = |t: f64, y: &[f64], dy: &mut [f64]| {
        quasistatic_rhs(setup, &FullState::from_slice(t, y, frame), dy)
    };
    let y = s.to_vec()[..12].to_vec();
    let jac = numerical_jacobian(&f, s.t, &y, &state_scales(setup)[..12])?;
    Ok(jac.trace())
}

/// Contraction rate at the configuration of a state.
pub fn contraction_rate_at(setup: &Setup, s: &FullState) -> Result<f64> {
    let local = LocalOptics::new(setup, &s.r, &s.frame, &s.angles);
    let jet = CavityJet::new(setup, &local);
    Ok(contraction_rate_from_jet(
        &jet,
        &momentum_hessian(&setup.particle, &s.angles)?,
    ))
}
