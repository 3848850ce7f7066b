//! Cavity output spectra: weak-coupling harmonic spectra, cubic
//! corrections from the rotor kinetic coupling, and a time-domain
//! Langevin simulator used as an independent estimate.
//!
//! Fourier convention: `b[omega] = (2 pi)^{-1/2} int e^{i omega t} b(t) dt`,
//! so a mode oscillating as `e^{-i w t}` shows up at `omega = +w`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::constants::HBAR;
use crate::dipole_forces::Coord;
use crate::error::{Error, Result};
use crate::linearize::{cavity_susceptibility, LinearizedSystem, NormalMode, NormalModeSystem};
use crate::particle::ParticleProps;

/// Mechanical susceptibility `1 / (gamma/2 + i (w~ - omega))`.
pub fn mechanical_susceptibility(gamma: f64, omega_shifted: f64, omega: f64) -> Complex64 {
    Complex64::new(1.0, 0.0) / Complex64::new(0.5 * gamma, omega_shifted - omega)
}

/// Lorentzian of a two-mode combination line, `1 / ((g1+g2)^2/4 + (omega - s1 w1 - s2 w2)^2)`.
fn cauchy(m1: &NormalMode, s1: f64, m2: &NormalMode, s2: f64, omega: f64) -> f64 {
    let width = m1.cooling.gamma + m2.cooling.gamma;
    let c = omega - s1 * m1.cooling.omega_shifted - s2 * m2.cooling.omega_shifted;
    1.0 / (0.25 * width * width + c * c)
}

/// Symmetric frequency grid of `n` points spanning `+-1.5 max(w~_Q, |Delta_j|)`.
pub fn default_grid(nm: &NormalModeSystem, n: usize) -> Vec<f64> {
    let mut w: f64 = nm.detuning.iter().fold(0.0, |a, d| a.max(d.abs()));
    for m in &nm.modes {
        if m.stable {
            w = w.max(m.cooling.omega_shifted.abs());
        }
    }
    let half = 1.5 * w;
    linspace(-half, half, n)
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn coupled_modes(nm: &NormalModeSystem, j: usize) -> Result<Vec<&NormalMode>> {
    nm.require_stable()?;
    let mut out = Vec::new();
    for m in nm.modes.iter().filter(|m| m.cavity_mode == j) {
        if m.g.norm_sqr() == 0.0 {
            continue;
        }
        if m.cooling.gamma <= 0.0 {
            return Err(Error::Unstable {
                block: format!("mode {}", m.label.name()),
                detail: format!(
                    "net damping {:.3e} 1/s is not positive; no stationary spectrum",
                    m.cooling.gamma
                ),
            });
        }
        out.push(m);
    }
    Ok(out)
}

/// Harmonic output spectra of both cavity modes, split into the
/// cavity-noise (`shot`) and mechanical-heating (`heating`) parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicPsd {
    pub shot: [Vec<f64>; 2],
    pub heating: [Vec<f64>; 2],
}

impl HarmonicPsd {
    pub fn total(&self, j: usize) -> Vec<f64> {
        self.shot[j]
            .iter()
            .zip(&self.heating[j])
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Weak-coupling spectra `S0_{b_j^dag b_j}[omega]` [s] on `grid`.
pub fn harmonic_psd(nm: &NormalModeSystem, grid: &[f64]) -> Result<HarmonicPsd> {
    let mut shot: [Vec<f64>; 2] = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
    let mut heating = shot.clone();
    for j in 0..2 {
        let modes = coupled_modes(nm, j)?;
        let delta = nm.detuning[j];
        for (i, &w) in grid.iter().enumerate() {
            let cp = cavity_susceptibility(nm.kappa, delta, w).norm_sqr();
            let cm = cavity_susceptibility(nm.kappa, delta, -w).norm_sqr();
            let mut coherent = Complex64::new(0.0, 0.0);
            let mut incoherent = 0.0;
            for m in &modes {
                let d = mechanical_susceptibility(m.cooling.gamma, m.cooling.omega_shifted, w)
                    - mechanical_susceptibility(m.cooling.gamma, m.cooling.omega_shifted, -w)
                        .conj();
                coherent += m.g.conj() * m.g.conj() * d;
                if m.xi.is_finite() {
                    incoherent += m.g.norm_sqr() * m.xi * d.norm_sqr();
                }
            }
            shot[j][i] = cp * 2.0 * nm.kappa * cm * coherent.norm_sqr() / (2.0 * PI);
            heating[j][i] = cp * incoherent / (2.0 * PI);
        }
    }
    Ok(HarmonicPsd { shot, heating })
}

/// Cubic coupling constants `c_+-` [rad/s] of the libration modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicCoefficients {
    pub c_plus: f64,
    pub c_minus: f64,
}

/// `c_+- = w_alpha alpha_zp beta_zp gamma_zp [I_c w_gamma +- (I_a - I_b) w_beta] / hbar`.
pub fn cubic_coefficients(
    lin: &LinearizedSystem,
    props: &ParticleProps,
) -> Result<CubicCoefficients> {
    let libs = [Coord::Alpha, Coord::Beta, Coord::Gamma];
    let bad: Vec<&str> = libs
        .iter()
        .filter(|q| !lin.stable[q.index()])
        .map(|q| q.name())
        .collect();
    if !bad.is_empty() {
        return Err(Error::Unavailable(format!(
            "cubic coefficients need confined librations (unconfined: {})",
            bad.join(", ")
        )));
    }
    let [ia, ib, ic] = props.inertia;
    let (wa, wb, wg) = (lin.omega[3], lin.omega[4], lin.omega[5]);
    let pre = wa * lin.q_zp[3] * lin.q_zp[4] * lin.q_zp[5] / HBAR;
    Ok(CubicCoefficients {
        c_plus: pre * (ic * wg + (ia - ib) * wb),
        c_minus: pre * (ic * wg - (ia - ib) * wb),
    })
}

/// Leading cubic corrections `S^{alpha'}` (cavity mode 1), `S^{beta'}` and
/// `S^{gamma'}` (cavity mode 2) [s] on `grid`.
pub fn cubic_psd_corrections(
    nm: &NormalModeSystem,
    c: &CubicCoefficients,
    grid: &[f64],
) -> Result<[Vec<f64>; 3]> {
    coupled_modes(nm, 0)?;
    coupled_modes(nm, 1)?;
    let (ma, mb, mg) = (
        nm.mode(Coord::Alpha),
        nm.mode(Coord::Beta),
        nm.mode(Coord::Gamma),
    );
    for m in [ma, mb, mg] {
        if m.cooling.gamma <= 0.0 || !m.xi.is_finite() {
            return Err(Error::Unavailable(format!(
                "cubic corrections need damped libration modes with finite heating ({} has gamma = {:.3e})",
                m.label.name(),
                m.cooling.gamma
            )));
        }
    }
    let (cp, cm) = (c.c_plus, c.c_minus);
    let chi = |m: &NormalMode, w: f64| {
        mechanical_susceptibility(m.cooling.gamma, m.cooling.omega_shifted, w)
    };
    let inv = |a: &NormalMode, b: &NormalMode| 1.0 / a.cooling.gamma + 1.0 / b.cooling.gamma;
    let pre_a = ma.g.norm_sqr() * mb.xi * mg.xi * inv(mb, mg) / (2.0 * PI);
    let pre_b = mb.g.norm_sqr() * ma.xi * mg.xi * inv(ma, mg) / (2.0 * PI);
    let pre_g = mg.g.norm_sqr() * ma.xi * mb.xi * inv(ma, mb) / (2.0 * PI);
    let mut out: [Vec<f64>; 3] = [
        vec![0.0; grid.len()],
        vec![0.0; grid.len()],
        vec![0.0; grid.len()],
    ];
    for (i, &w) in grid.iter().enumerate() {
        let c1 = cavity_susceptibility(nm.kappa, nm.detuning[0], w).norm_sqr();
        let c2 = cavity_susceptibility(nm.kappa, nm.detuning[1], w).norm_sqr();
        // alpha' is driven through its position quadrature
        let xa = (chi(ma, w) + chi(ma, -w).conj()).norm_sqr();
        let lines_a = cp * cp * (cauchy(mb, 1.0, mg, 1.0, w) + cauchy(mb, -1.0, mg, -1.0, w))
            + cm * cm * (cauchy(mb, -1.0, mg, 1.0, w) + cauchy(mb, 1.0, mg, -1.0, w));
        out[0][i] = pre_a * c1 * xa * lines_a;

        let (b_p, b_m) = (chi(mb, w), chi(mb, -w).conj());
        out[1][i] = pre_b
            * c2
            * ((cm * b_p - cp * b_m).norm_sqr()
                * (cauchy(ma, 1.0, mg, 1.0, w) + cauchy(ma, -1.0, mg, 1.0, w))
                + (cp * b_p - cm * b_m).norm_sqr()
                    * (cauchy(ma, -1.0, mg, -1.0, w) + cauchy(ma, 1.0, mg, -1.0, w)));

        let (g_p, g_m) = (chi(mg, w), chi(mg, -w).conj());
        out[2][i] = pre_g
            * c2
            * ((cm * g_p + cp * g_m).norm_sqr()
                * (cauchy(ma, 1.0, mb, 1.0, w) + cauchy(ma, -1.0, mb, 1.0, w))
                + (cp * g_p + cm * g_m).norm_sqr()
                    * (cauchy(ma, -1.0, mb, -1.0, w) + cauchy(ma, 1.0, mb, -1.0, w)));
    }
    Ok(out)
}

/// Trapezoidal integral of `psd` over `lo <= omega <= hi`.
pub fn band_power(omega: &[f64], psd: &[f64], lo: f64, hi: f64) -> f64 {
    let mut acc = 0.0;
    for i in 1..omega.len() {
        let (a, b) = (omega[i - 1], omega[i]);
        if a >= lo && b <= hi {
            acc += 0.5 * (psd[i - 1] + psd[i]) * (b - a);
        }
    }
    acc
}

/// Welch estimate of `S[omega] = (1/2 pi) int e^{i omega tau} <x*(0) x(tau)> d tau`
/// from samples spaced `dt`, Hann window, 50 % overlap. Returns
/// ascending frequencies and the PSD.
pub fn welch_psd(x: &[Complex64], dt: f64, segment: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if segment < 8 || x.len() < segment {
        return Err(Error::InvalidInput(format!(
            "Welch segment {segment} needs at least 8 points and no more than the {} samples",
            x.len()
        )));
    }
    let window: Vec<f64> = (0..segment)
        .map(|n| (PI * n as f64 / segment as f64).sin().powi(2))
        .collect();
    let norm: f64 = window.iter().map(|w| w * w).sum();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(segment);
    let mut acc = vec![0.0; segment];
    let mut count = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); segment];
    let step = segment / 2;
    let mut start = 0;
    while start + segment <= x.len() {
        for n in 0..segment {
            buf[n] = x[start + n] * window[n];
        }
        fft.process(&mut buf);
        for (a, v) in acc.iter_mut().zip(&buf) {
            *a += v.norm_sqr();
        }
        count += 1;
        start += step;
    }
    // forward FFT bin k carries e^{-2 pi i k n / N}, i.e. omega = -2 pi k / (N dt)
    let scale = dt / (2.0 * PI * norm * count as f64);
    let mut pairs: Vec<(f64, f64)> = (0..segment)
        .map(|k| {
            let kk = if k <= segment / 2 {
                k as f64
            } else {
                k as f64 - segment as f64
            };
            (-2.0 * PI * kk / (segment as f64 * dt), acc[k] * scale)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Time-domain Langevin run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinConfig {
    /// Total simulated time after burn-in [s].
    pub duration: f64,
    /// Discarded initial time [s].
    #[serde(default)]
    pub burn_in: f64,
    /// Step [s]; defaults to `0.05 / max(omega_Q, |Delta_j|)`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub cavity_noise: bool,
    #[serde(default = "yes")]
    pub mechanical_noise: bool,
    /// Include the cubic libration coupling.
    #[serde(default)]
    pub cubic: Option<CubicCoefficients>,
    /// Initial mode amplitudes in the order of `NormalModeSystem::modes`.
    #[serde(default)]
    pub initial: Option<[Complex64; 6]>,
    /// Keep every n-th step.
    #[serde(default = "one")]
    pub record_every: usize,
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

impl LangevinConfig {
    pub fn new(duration: f64, seed: u64) -> Self {
        Self {
            duration,
            burn_in: 0.0,
            dt: None,
            seed,
            cavity_noise: true,
            mechanical_noise: true,
            cubic: None,
            initial: None,
            record_every: 1,
        }
    }
}

/// Recorded trajectory; `modes[m]` follows `NormalModeSystem::modes[m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LangevinResult {
    pub dt: f64,
    /// Spacing of recorded samples [s].
    pub sample_dt: f64,
    pub cavity: [Vec<Complex64>; 2],
    pub modes: Vec<Vec<Complex64>>,
    /// Time average of `|a_Q|^2` over every step after burn-in.
    pub mean_sq: [f64; 6],
}

const DIM: usize = 16;

fn mode_slot(m: usize) -> usize {
    4 + 2 * m
}

/// Integrates the linear Langevin equations of both cavity modes and all
/// six normal modes (no rotating-wave approximation), with optional cubic
/// libration terms. Noise is classical and symmetrized: each cavity
/// quadrature gets `kappa/2`, each mode momentum quadrature `xi_Q`.
pub fn langevin_simulate(nm: &NormalModeSystem, cfg: &LangevinConfig) -> Result<LangevinResult> {
    nm.require_stable()?;
    if nm.modes.len() != 6 {
        return Err(Error::InvalidInput("expected six normal modes".into()));
    }
    if !(cfg.duration > 0.0) || cfg.burn_in < 0.0 || cfg.record_every == 0 {
        return Err(Error::InvalidInput(
            "duration must be positive, burn-in non-negative, record_every >= 1".into(),
        ));
    }
    let fastest = nm
        .modes
        .iter()
        .map(|m| (m.omega, m.label.name().to_string()))
        .chain(
            nm.detuning
                .iter()
                .enumerate()
                .map(|(j, d)| (d.abs(), format!("cavity mode {}", j + 1))),
        )
        .fold((0.0, String::new()), |a, b| if b.0 > a.0 { b } else { a });
    let dt = cfg.dt.unwrap_or(0.05 / fastest.0.max(1e-300));
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!(
            "time step {dt} is not positive"
        )));
    }
    if dt * fastest.0 > 0.5 {
        return Err(Error::StiffMode {
            mode: fastest.1,
            detail: format!(
                "dt * omega = {:.3} exceeds 0.5; reduce the step",
                dt * fastest.0
            ),
        });
    }
    let xi: Vec<f64> = nm.modes.iter().map(|m| m.xi).collect();
    if cfg.mechanical_noise {
        if let Some(m) = nm.modes.iter().find(|m| !m.xi.is_finite() || m.xi < 0.0) {
            return Err(Error::InvalidInput(format!(
                "mode {} has no finite heating rate",
                m.label.name()
            )));
        }
    }

    let mut mlin = DMatrix::<f64>::zeros(DIM, DIM);
    for j in 0..2 {
        let (x, y) = (2 * j, 2 * j + 1);
        let d = nm.detuning[j];
        mlin[(x, x)] = -nm.kappa;
        mlin[(x, y)] = -d;
        mlin[(y, x)] = d;
        mlin[(y, y)] = -nm.kappa;
    }
    for (mi, m) in nm.modes.iter().enumerate() {
        let (ar, ai) = (mode_slot(mi), mode_slot(mi) + 1);
        mlin[(ar, ai)] = m.omega;
        mlin[(ai, ar)] = -m.omega;
        let (x, y) = (2 * m.cavity_mode, 2 * m.cavity_mode + 1);
        mlin[(x, ar)] += 2.0 * m.g.im;
        mlin[(y, ar)] += 2.0 * m.g.re;
        mlin[(ai, x)] += 2.0 * m.g.re;
        mlin[(ai, y)] -= 2.0 * m.g.im;
    }
    let mut diffusion = DMatrix::<f64>::zeros(DIM, DIM);
    if cfg.cavity_noise {
        for i in 0..4 {
            diffusion[(i, i)] = 0.5 * nm.kappa;
        }
    }
    if cfg.mechanical_noise {
        for (mi, &x) in xi.iter().enumerate() {
            diffusion[(mode_slot(mi) + 1, mode_slot(mi) + 1)] = x;
        }
    }
    let (prop, noise) = discretize(&mlin, &diffusion, dt);

    let slots = cubic_slots(nm);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut y = DVector::<f64>::zeros(DIM);
    if let Some(init) = cfg.initial {
        for (mi, a) in init.iter().enumerate() {
            y[mode_slot(mi)] = a.re;
            y[mode_slot(mi) + 1] = a.im;
        }
    }
    let burn = (cfg.burn_in / dt).round() as usize;
    let steps = (cfg.duration / dt).round().max(1.0) as usize;
    let keep = steps / cfg.record_every + 1;
    let mut cavity = [Vec::with_capacity(keep), Vec::with_capacity(keep)];
    let mut modes: Vec<Vec<Complex64>> = (0..6).map(|_| Vec::with_capacity(keep)).collect();
    let mut sum_sq = [0.0; 6];
    let mut z = DVector::<f64>::zeros(DIM);
    let mut w = DVector::<f64>::zeros(DIM);
    let mut f0 = DVector::<f64>::zeros(DIM);
    let mut f1 = DVector::<f64>::zeros(DIM);
    for step in 0..burn + steps {
        if step >= burn && (step - burn) % cfg.record_every == 0 {
            for j in 0..2 {
                cavity[j].push(Complex64::new(y[2 * j], y[2 * j + 1]));
            }
            for (mi, rec) in modes.iter_mut().enumerate() {
                rec.push(Complex64::new(y[mode_slot(mi)], y[mode_slot(mi) + 1]));
            }
        }
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        noise.mul_to(&z, &mut w);
        let next = match (&cfg.cubic, &slots) {
            (Some(c), Some(s)) => {
                cubic_force(&y, c, s, &mut f0);
                let pred = &prop * (&y + &f0 * dt) + &w;
                cubic_force(&pred, c, s, &mut f1);
                &prop * (&y + &f0 * (0.5 * dt)) + &f1 * (0.5 * dt) + &w
            }
            _ => &prop * &y + &w,
        };
        y = next;
        if !y.iter().all(|v| v.is_finite()) {
            let worst = (0..6)
                .max_by(|&a, &b| {
                    let na = y[mode_slot(a)].abs() + y[mode_slot(a) + 1].abs();
                    let nb = y[mode_slot(b)].abs() + y[mode_slot(b) + 1].abs();
                    na.partial_cmp(&nb).unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(0);
            return Err(Error::StiffMode {
                mode: nm.modes[worst].label.name().to_string(),
                detail: format!(
                    "trajectory diverged at t = {:.3e} s with dt = {dt:.3e} s",
                    step as f64 * dt
                ),
            });
        }
        if step >= burn {
            for (mi, s) in sum_sq.iter_mut().enumerate() {
                *s += y[mode_slot(mi)].powi(2) + y[mode_slot(mi) + 1].powi(2);
            }
        }
    }
    Ok(LangevinResult {
        dt,
        sample_dt: dt * cfg.record_every as f64,
        cavity,
        modes,
        mean_sq: sum_sq.map(|s| s / steps as f64),
    })
}

/// Exact one-step propagator and the Cholesky-like factor of the
/// discretized noise covariance (Van Loan).
fn discretize(m: &DMatrix<f64>, q: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut c = DMatrix::<f64>::zeros(2 * n, 2 * n);
    c.view_mut((0, 0), (n, n)).copy_from(&(-m * dt));
    c.view_mut((0, n), (n, n)).copy_from(&(q * dt));
    c.view_mut((n, n), (n, n)).copy_from(&(m.transpose() * dt));
    let e = c.exp();
    let f22 = e.view((n, n), (n, n)).clone_owned();
    let f12 = e.view((0, n), (n, n)).clone_owned();
    let prop = f22.transpose();
    let cov = &prop * f12;
    let cov = 0.5 * (&cov + cov.transpose());
    let eig = SymmetricEigen::new(cov);
    let mut root = eig.eigenvectors.clone();
    for (k, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        root.column_mut(k).scale_mut(s);
    }
    (prop, root)
}

/// State slots of the alpha', beta', gamma' modes.
fn cubic_slots(nm: &NormalModeSystem) -> Option<[usize; 3]> {
    let find = |q: Coord| nm.modes.iter().position(|m| m.label == q).map(mode_slot);
    Some([find(Coord::Alpha)?, find(Coord::Beta)?, find(Coord::Gamma)?])
}

/// Cubic drift from `H_cor`, written for the classical amplitudes.
fn cubic_force(y: &DVector<f64>, c: &CubicCoefficients, s: &[usize; 3], out: &mut DVector<f64>) {
    out.fill(0.0);
    let a = Complex64::new(y[s[0]], y[s[0] + 1]);
    let b = Complex64::new(y[s[1]], y[s[1] + 1]);
    let g = Complex64::new(y[s[2]], y[s[2] + 1]);
    let i = Complex64::new(0.0, 1.0);
    let (cp, cm) = (c.c_plus, c.c_minus);
    let da = Complex64::new(2.0 * (cp * (b * g).im - cm * (b * g.conj()).im), 0.0);
    let db = i * (cm * (a * g - a.conj() * g) + cp * (a.conj() * g.conj() - a * g.conj()));
    let dg = i * (cm * (a.conj() * b - a * b) + cp * (a.conj() * b.conj() - a * b.conj()));
    for (slot, d) in s.iter().zip([da, db, dg]) {
        out[*slot] = d.re;
        out[slot + 1] = d.im;
    }
}

/// Spectra bundle written by the command-line tool.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraTable {
    pub omega: Vec<f64>,
    pub s0: [Vec<f64>; 2],
    pub corrections: Option<[Vec<f64>; 3]>,
}

/// Evaluates harmonic spectra and, when the librations allow it, the cubic
/// corrections.
pub fn spectra_table(
    nm: &NormalModeSystem,
    lin: &LinearizedSystem,
    props: &ParticleProps,
    grid: Vec<f64>,
) -> Result<SpectraTable> {
    let h = harmonic_psd(nm, &grid)?;
    let corrections = match cubic_coefficients(lin, props) {
        Ok(c) => Some(cubic_psd_corrections(nm, &c, &grid)?),
        Err(Error::Unavailable(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(SpectraTable {
        s0: [h.total(0), h.total(1)],
        omega: grid,
        corrections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearize::{occupation, CoolingStatus, Occupation};

    fn mode(
        label: Coord,
        j: usize,
        omega: f64,
        g: f64,
        xi: f64,
        delta: f64,
        kappa: f64,
    ) -> NormalMode {
        let g = Complex64::new(g, 0.0);
        NormalMode {
            label,
            cavity_mode: j,
            omega_sq: omega * omega,
            omega,
            stable: true,
            g,
            xi,
            weights: vec![],
            cooling: occupation(g, omega, xi, delta, kappa),
        }
    }

    pub(crate) fn toy_system(g: f64, xi: f64) -> NormalModeSystem {
        let (kappa, d1, d2) = (2.0, -10.0, -7.0);
        let freqs = [8.7, 9.3, 12.1, 10.0, 6.0, 4.0];
        let modes = Coord::ALL
            .iter()
            .enumerate()
            .map(|(i, &q)| {
                let j = if i < 4 { 0 } else { 1 };
                mode(q, j, freqs[i], g, xi, if j == 0 { d1 } else { d2 }, kappa)
            })
            .collect();
        NormalModeSystem {
            modes,
            bare_omega: freqs,
            detuning: [d1, d2],
            kappa,
        }
    }

    #[test]
    fn welch_recovers_white_noise_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dt = 0.01;
        let sigma2: f64 = 2.0;
        let x: Vec<Complex64> = (0..1 << 16)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(a, b) * (sigma2 / (2.0 * dt)).sqrt()
            })
            .collect();
        let (_, s) = welch_psd(&x, dt, 256).unwrap();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean / (sigma2 / (2.0 * PI)) - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn welch_sign_convention() {
        let dt = 0.01;
        let w0 = 7.0;
        let x: Vec<Complex64> = (0..4096)
            .map(|n| Complex64::from_polar(1.0, -w0 * n as f64 * dt))
            .collect();
        let (om, s) = welch_psd(&x, dt, 1024).unwrap();
        let k = (0..s.len()).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        assert!((om[k] - w0).abs() < 2.0 * PI / (1024.0 * dt), "{}", om[k]);
    }

    #[test]
    fn propagator_matches_decay() {
        let m = DMatrix::from_row_slice(2, 2, &[-0.5, 3.0, -3.0, -0.5]);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let (p, root) = discretize(&m, &q, 0.1);
        let expect = (-0.05f64).exp() * (0.3f64).cos();
        assert!((p[(0, 0)] - expect).abs() < 1e-12);
        // isotropic diffusion with damping 0.5: variance (1 - e^{-dt}) per quadrature
        let cov = &root * root.transpose();
        assert!((cov[(0, 0)] - (1.0 - (-0.1f64).exp())).abs() < 1e-12);
        assert!(cov[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn harmonic_peaks_at_shifted_frequencies() {
        let nm = toy_system(0.05, 1e-3);
        let grid = linspace(-20.0, 20.0, 40001);
        let h = harmonic_psd(&nm, &grid).unwrap();
        let s = h.total(1);
        let m = nm.mode(Coord::Beta);
        let lo = grid
            .iter()
            .position(|&w| w > m.cooling.omega_shifted - 1.0)
            .unwrap();
        let hi = grid
            .iter()
            .position(|&w| w > m.cooling.omega_shifted + 1.0)
            .unwrap();
        let k = (lo..hi).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        assert!((grid[k] - m.cooling.omega_shifted).abs() <= grid[1] - grid[0]);
    }

    #[test]
    fn unstable_system_is_rejected() {
        let mut nm = toy_system(0.05, 1e-3);
        nm.modes[4].stable = false;
        nm.modes[4].cooling = Occupation {
            status: CoolingStatus::Unconfined,
            ..nm.modes[4].cooling
        };
        let err = harmonic_psd(&nm, &[0.0]).unwrap_err();
        assert!(err.to_string().contains("S2'"), "{err}");
    }

    #[test]
    fn stiff_step_names_mode() {
        let nm = toy_system(0.05, 1e-3);
        let cfg = LangevinConfig {
            dt: Some(0.2),
            ..LangevinConfig::new(1.0, 1)
        };
        match langevin_simulate(&nm, &cfg) {
            Err(Error::StiffMode { mode, .. }) => assert_eq!(mode, "z"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cubic_force_conserves_h_cor() {
        // H_cor is conserved by its own flow; check dH/dt = 0 along the drift.
        let c = CubicCoefficients {
            c_plus: 0.7,
            c_minus: -0.3,
        };
        let s = [4, 6, 8];
        let mut y = DVector::<f64>::zeros(DIM);
        for (k, v) in [0.3, -0.2, 0.5, 0.1, -0.4, 0.25].iter().enumerate() {
            y[4 + k] = *v;
        }
        let h = |y: &DVector<f64>| {
            let a = Complex64::new(y[4], y[5]);
            let b = Complex64::new(y[6], y[7]);
            let g = Complex64::new(y[8], y[9]);
            let p = c.c_plus * (a * b * g - a.conj() * b * g)
                + c.c_minus * (a * b.conj() * g - a * b * g.conj());
            -2.0 * p.re
        };
        let mut f = DVector::<f64>::zeros(DIM);
        cubic_force(&y, &c, &s, &mut f);
        let eps = 1e-6;
        let dh = (h(&(&y + &f * eps)) - h(&(&y - &f * eps))) / (2.0 * eps);
        assert!(dh.abs() < 1e-9, "{dh}");
        assert!(f.norm() > 0.1);
    }
}
