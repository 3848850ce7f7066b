//! Tweezer and cavity mode functions, polarization geometry, and the total
//! field acting on the particle. Time dependence `e^{-i omega t}` throughout.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{EPSILON_0, HBAR, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::particle::ParticleProps;

pub type CVector3 = Vector3<Complex64>;
pub type CMatrix3 = Matrix3<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Spatial profile of the tweezer beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamProfile {
    /// Paraxial elliptic Gaussian beam with Gouy phase.
    #[default]
    Gaussian,
    /// Plane wave `e^{ikz}`; used for symmetry checks.
    PlaneWave,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TweezerConfig {
    /// Power [W].
    pub power: f64,
    /// Intensity waists along x and y [m].
    pub waist_x: f64,
    pub waist_y: f64,
    /// Vacuum wavelength [m].
    pub wavelength: f64,
    /// Ellipticity psi in [0, pi/4].
    pub ellipticity: f64,
    /// Polarization rotation zeta relative to the intensity axes [rad].
    pub rotation: f64,
    #[serde(default)]
    pub profile: BeamProfile,
}

impl TweezerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad =
            |what: &str, v: f64| Err(Error::InvalidInput(format!("{what} out of range: {v}")));
        if !(self.power >= 0.0) || !self.power.is_finite() {
            return bad("tweezer power", self.power);
        }
        if !(self.waist_x > 0.0) {
            return bad("tweezer waist_x", self.waist_x);
        }
        if !(self.waist_y > 0.0) {
            return bad("tweezer waist_y", self.waist_y);
        }
        if !(self.wavelength > 0.0) {
            return bad("wavelength", self.wavelength);
        }
        if !(0.0..=std::f64::consts::FRAC_PI_4 + 1e-12).contains(&self.ellipticity) {
            return bad("ellipticity (expected [0, pi/4])", self.ellipticity);
        }
        if !self.rotation.is_finite() {
            return bad("polarization rotation", self.rotation);
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    pub fn angular_frequency(&self) -> f64 {
        SPEED_OF_LIGHT * self.wavenumber()
    }

    pub fn rayleigh_range(&self) -> f64 {
        self.wavenumber() * self.waist_x * self.waist_y / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityConfig {
    /// Cavity length [m].
    pub length: f64,
    /// Mode waist [m].
    pub waist: f64,
    /// Standing-wave phase phi at the particle [rad].
    pub phase: f64,
    /// Amplitude loss rate kappa [rad/s].
    pub linewidth: f64,
    /// Angle theta between cavity polarization e_1 and the x axis [rad].
    pub angle: f64,
    /// Detuning Delta = omega - omega_c [rad/s].
    pub detuning: f64,
}

impl CavityConfig {
    pub fn validate(&self) -> Result<()> {
        let bad =
            |what: &str, v: f64| Err(Error::InvalidInput(format!("{what} out of range: {v}")));
        if !(self.length > 0.0) {
            return bad("cavity length", self.length);
        }
        if !(self.waist > 0.0) {
            return bad("cavity waist", self.waist);
        }
        if !(self.linewidth >= 0.0) {
            return bad("cavity linewidth", self.linewidth);
        }
        for (name, v) in [
            ("cavity phase", self.phase),
            ("cavity angle", self.angle),
            ("detuning", self.detuning),
        ] {
            if !v.is_finite() {
                return bad(name, v);
            }
        }
        Ok(())
    }

    pub fn mode_volume(&self) -> f64 {
        std::f64::consts::PI * self.length * self.waist * self.waist / 4.0
    }
}

/// Tweezer and cavity polarization vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationBasis {
    pub e_t: CVector3,
    pub e_t1: Vector3<f64>,
    pub e_t2: Vector3<f64>,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    /// Cavity axis `e_2 x e_1`.
    pub axis: Vector3<f64>,
}

impl PolarizationBasis {
    pub fn new(ellipticity: f64, rotation: f64, cavity_angle: f64) -> Self {
        let (sz, cz) = rotation.sin_cos();
        let (st, ct) = cavity_angle.sin_cos();
        let (sp, cp) = ellipticity.sin_cos();
        let e_t1 = Vector3::new(cz, -sz, 0.0);
        let e_t2 = Vector3::new(sz, cz, 0.0);
        let e_t =
            e_t1.map(|v| Complex64::new(v * cp, 0.0)) + e_t2.map(|v| Complex64::new(0.0, v * sp));
        let e1 = Vector3::new(ct, -st, 0.0);
        let e2 = Vector3::z();
        Self {
            e_t,
            e_t1,
            e_t2,
            e1,
            e2,
            axis: e2.cross(&e1),
        }
    }

    pub fn cavity(&self, j: usize) -> Vector3<f64> {
        if j == 0 {
            self.e1
        } else {
            self.e2
        }
    }
}

/// Switches for terms that are usually kept but must be removable in tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOptions {
    /// Radiation-pressure forces and torques on the particle.
    pub radiation_pressure: bool,
    /// Free-space scattering (`gamma_sc`) terms in the cavity operators and
    /// in the friction force.
    pub scattering_loss: bool,
    /// Transverse Gaussian envelope of the cavity modes.
    pub cavity_envelope: bool,
    /// Whether the cavity field is present at all.
    pub cavity_enabled: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            radiation_pressure: true,
            scattering_loss: true,
            cavity_envelope: true,
            cavity_enabled: true,
        }
    }
}

impl ModelOptions {
    /// Closed Hamiltonian system: no radiation pressure and no scattering.
    pub fn conservative() -> Self {
        Self {
            radiation_pressure: false,
            scattering_loss: false,
            ..Self::default()
        }
    }
}

/// Tweezer mode function value and analytic gradient.
pub fn tweezer_mode_jet(tw: &TweezerConfig, r: &Vector3<f64>) -> (Complex64, CVector3) {
    let k = tw.wavenumber();
    let (x, y, z) = (r[0], r[1], r[2]);
    match tw.profile {
        BeamProfile::PlaneWave => {
            let f = Complex64::new(0.0, k * z).exp();
            (
                f,
                Vector3::new(
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, 0.0),
                    I * k * f,
                ),
            )
        }
        BeamProfile::Gaussian => {
            let zr = tw.rayleigh_range();
            let (wx2, wy2) = (tw.waist_x * tw.waist_x, tw.waist_y * tw.waist_y);
            let zr2 = zr * zr;
            let d = z * z + zr2;
            let rho2 = x * x + y * y;
            let q = x * x / wx2 + y * y / wy2;
            let re = -0.5 * (d / zr2).ln() - zr2 * q / d;
            let im = k * z - (z / zr).atan() + 0.5 * k * z * rho2 / d;
            let f = Complex64::new(re, im).exp();
            let gx = Complex64::new(-2.0 * zr2 * x / (wx2 * d), k * z * x / d);
            let gy = Complex64::new(-2.0 * zr2 * y / (wy2 * d), k * z * y / d);
            let gz = Complex64::new(
                -z / d + 2.0 * z * zr2 * q / (d * d),
                k - zr / d + 0.5 * k * rho2 * (d - 2.0 * z * z) / (d * d),
            );
            (f, Vector3::new(gx * f, gy * f, gz * f))
        }
    }
}

/// Tweezer mode function `f_t(r)`.
pub fn tweezer_mode(tw: &TweezerConfig, r: &Vector3<f64>) -> Complex64 {
    tweezer_mode_jet(tw, r).0
}

/// Cavity standing-wave mode function value and gradient. `k` is the
/// wavenumber of the cavity light.
pub fn cavity_mode_jet(
    cav: &CavityConfig,
    basis: &PolarizationBasis,
    k: f64,
    r: &Vector3<f64>,
    envelope: bool,
) -> (f64, Vector3<f64>) {
    let arg = k * basis.axis.dot(r) + cav.phase;
    let (s, c) = arg.sin_cos();
    if !envelope {
        return (c, -k * s * basis.axis);
    }
    let u1 = basis.e1.dot(r);
    let u2 = basis.e2.dot(r);
    let w2 = cav.waist * cav.waist;
    let g = (-(u1 * u1 + u2 * u2) / w2).exp();
    let f = c * g;
    let grad = -k * s * g * basis.axis - (2.0 * f / w2) * (u1 * basis.e1 + u2 * basis.e2);
    (f, grad)
}

/// Cavity mode function `f_c(r)`.
pub fn cavity_mode(cav: &CavityConfig, basis: &PolarizationBasis, k: f64, r: &Vector3<f64>) -> f64 {
    cavity_mode_jet(cav, basis, k, r, true).0
}

/// Dimensionless tweezer drive amplitude `epsilon`.
pub fn drive_amplitude(tw: &TweezerConfig, cav: &CavityConfig) -> f64 {
    let k = tw.wavenumber();
    let w = tw.angular_frequency();
    (2.0 * tw.power * k * cav.mode_volume()
        / (std::f64::consts::PI * HBAR * w * w * tw.waist_x * tw.waist_y))
        .sqrt()
}

/// Mode-function values and gradients at one position.
#[derive(Debug, Clone, Copy)]
pub struct ModeJet {
    pub ft: Complex64,
    pub dft: CVector3,
    pub fc: f64,
    pub dfc: Vector3<f64>,
}

/// Normalized field `u = E / E_0` and its Jacobian `jac[(i, k)] = d_k u_i`.
#[derive(Debug, Clone, Copy)]
pub struct FieldJet {
    pub u: CVector3,
    pub jac: CMatrix3,
}

/// Complete optical configuration with particle and derived constants.
#[derive(Debug, Clone, Copy)]
pub struct Setup {
    pub particle: ParticleProps,
    pub tweezer: TweezerConfig,
    pub cavity: CavityConfig,
    pub options: ModelOptions,
    pub basis: PolarizationBasis,
    pub k: f64,
    pub omega: f64,
    pub rayleigh_range: f64,
    pub mode_volume: f64,
    /// Single-photon field amplitude `E_0 = sqrt(2 hbar omega / eps_0 V_c)` [V/m].
    pub field_scale: f64,
    /// Tweezer drive amplitude `epsilon`.
    pub drive: f64,
    /// Coupling frequency `U_0 = -omega V / 2 V_c` [rad/s].
    pub u0: f64,
    /// Free-space scattering rate `gamma_sc` [1/s].
    pub gamma_sc: f64,
}

impl Setup {
    pub fn new(
        particle: ParticleProps,
        tweezer: TweezerConfig,
        cavity: CavityConfig,
        options: ModelOptions,
    ) -> Result<Self> {
        tweezer.validate()?;
        cavity.validate()?;
        let k = tweezer.wavenumber();
        let omega = tweezer.angular_frequency();
        let vc = cavity.mode_volume();
        let v = particle.volume;
        Ok(Self {
            particle,
            tweezer,
            cavity,
            options,
            basis: PolarizationBasis::new(tweezer.ellipticity, tweezer.rotation, cavity.angle),
            k,
            omega,
            rayleigh_range: tweezer.rayleigh_range(),
            mode_volume: vc,
            field_scale: (2.0 * HBAR * omega / (EPSILON_0 * vc)).sqrt(),
            drive: drive_amplitude(&tweezer, &cavity),
            u0: -omega * v / (2.0 * vc),
            gamma_sc: omega * k.powi(3) * v * v / (6.0 * std::f64::consts::PI * vc),
        })
    }

    pub fn with_options(&self, options: ModelOptions) -> Self {
        Self { options, ..*self }
    }

    /// Effective free-space scattering rate, zero when scattering is disabled.
    pub fn gamma_sc_eff(&self) -> f64 {
        if self.options.scattering_loss {
            self.gamma_sc
        } else {
            0.0
        }
    }

    pub fn modes(&self, r: &Vector3<f64>) -> ModeJet {
        let (ft, dft) = tweezer_mode_jet(&self.tweezer, r);
        let (fc, dfc) = if self.options.cavity_enabled {
            cavity_mode_jet(
                &self.cavity,
                &self.basis,
                self.k,
                r,
                self.options.cavity_envelope,
            )
        } else {
            (0.0, Vector3::zeros())
        };
        ModeJet { ft, dft, fc, dfc }
    }

    /// Normalized field `u = epsilon e_t f_t + sum_j b_j e_j f_c` and its Jacobian.
    pub fn field_jet(&self, r: &Vector3<f64>, b: &[Complex64; 2]) -> FieldJet {
        self.field_jet_from_modes(&self.modes(r), b)
    }

    pub fn field_jet_from_modes(&self, m: &ModeJet, b: &[Complex64; 2]) -> FieldJet {
        let et = self.basis.e_t * Complex64::from(self.drive);
        let cav =
            self.basis.e1.map(Complex64::from) * b[0] + self.basis.e2.map(Complex64::from) * b[1];
        let u = et * m.ft + cav * Complex64::from(m.fc);
        let jac = et * m.dft.transpose() + cav * m.dfc.map(Complex64::from).transpose();
        FieldJet { u, jac }
    }
}

/// Total electric field [V/m] at `r` and its Jacobian `jac[(i, k)] = d_k E_i`.
pub fn total_field(setup: &Setup, r: &Vector3<f64>, b: &[Complex64; 2]) -> (CVector3, CMatrix3) {
    let j = setup.field_jet(r, b);
    let s = Complex64::from(setup.field_scale);
    (j.u * s, j.jac * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn tweezer() -> TweezerConfig {
        TweezerConfig {
            power: 0.4,
            waist_x: 800e-9,
            waist_y: 650e-9,
            wavelength: 1550e-9,
            ellipticity: 0.3,
            rotation: 0.2,
            profile: BeamProfile::Gaussian,
        }
    }

    fn cavity() -> CavityConfig {
        CavityConfig {
            length: 1.5e-3,
            waist: 30e-6,
            phase: 0.7,
            linewidth: 2e5,
            angle: 0.4,
            detuning: -3e5,
        }
    }

    #[test]
    fn tweezer_origin_and_axis() {
        let tw = tweezer();
        assert!((tweezer_mode(&tw, &Vector3::zeros()) - 1.0).norm() < 1e-15);
        let zr = tw.rayleigh_range();
        let z = 0.7 * zr;
        let f = tweezer_mode(&tw, &Vector3::new(0.0, 0.0, z));
        assert!((f.norm() - 1.0 / (1.0 + (z / zr).powi(2)).sqrt()).abs() < 1e-14);
        let phase = tw.wavenumber() * z - (z / zr).atan();
        let expect = Complex64::from_polar(1.0, phase);
        assert!((f / f.norm() - expect).norm() < 1e-12);
    }

    #[test]
    fn tweezer_gradient_finite_difference() {
        let tw = tweezer();
        let zr = tw.rayleigh_range();
        for p in [[0.2, -0.3, 0.1], [-0.5, 0.4, -0.6], [0.1, 0.1, 0.9]] {
            let r = Vector3::new(p[0] * tw.waist_x, p[1] * tw.waist_y, p[2] * zr);
            let (_, g) = tweezer_mode_jet(&tw, &r);
            let h = 1e-12;
            for k in 0..3 {
                let mut rp = r;
                let mut rm = r;
                rp[k] += h;
                rm[k] -= h;
                let fd = (tweezer_mode(&tw, &rp) - tweezer_mode(&tw, &rm)) / (2.0 * h);
                assert!(
                    (fd - g[k]).norm() < 1e-6 * g.norm(),
                    "{k}: {fd} vs {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn cavity_mode_values() {
        let cav = cavity();
        let basis = PolarizationBasis::new(0.3, 0.2, cav.angle);
        let k = tweezer().wavenumber();
        assert!((cavity_mode(&cav, &basis, k, &Vector3::zeros()) - cav.phase.cos()).abs() < 1e-15);
        let node = CavityConfig {
            phase: FRAC_PI_2,
            ..cav
        };
        assert!(cavity_mode(&node, &basis, k, &Vector3::zeros()).abs() < 1e-15);
        let r = Vector3::new(20e-9, -10e-9, 5e-9);
        let shifted = r + basis.axis * (PI / k);
        let a = cavity_mode(&cav, &basis, k, &r);
        let b = cavity_mode(&cav, &basis, k, &shifted);
        assert!((a + b).abs() < 1e-12);
    }

    #[test]
    fn basis_is_orthonormal() {
        for (psi, zeta, theta) in [(0.0, 0.0, 0.0), (FRAC_PI_4, 1.0, 2.0), (0.3, -0.4, 0.9)] {
            let b = PolarizationBasis::new(psi, zeta, theta);
            let n: f64 = b.e_t.iter().map(|c| c.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-14);
            assert!(b.e_t1.dot(&b.e_t2).abs() < 1e-14);
            assert!(b.e1.dot(&b.e2).abs() < 1e-14);
            assert!((b.axis.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn drive_scaling() {
        let tw = tweezer();
        let cav = cavity();
        let e1 = drive_amplitude(&tw, &cav);
        let e4 = drive_amplitude(
            &TweezerConfig {
                power: 4.0 * tw.power,
                ..tw
            },
            &cav,
        );
        assert!((e4 / e1 - 2.0).abs() < 1e-14);
        assert_eq!(
            drive_amplitude(&TweezerConfig { power: 0.0, ..tw }, &cav),
            0.0
        );
    }

    #[test]
    fn ellipticity_range_checked() {
        let tw = TweezerConfig {
            ellipticity: 0.9,
            ..tweezer()
        };
        assert!(tw.validate().is_err());
    }
}
