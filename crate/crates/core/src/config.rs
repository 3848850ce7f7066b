//! Run configuration (TOML). Quantities carry their unit in the key name
//! and are converted to SI here; everything downstream is SI.

use std::f64::consts::FRAC_PI_4;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::AMU;
use crate::error::{Error, Result};
use crate::linearize::{DetuningPolicy, GasConfig};
use crate::ode::Tolerances;
use crate::optics::{BeamProfile, CavityConfig, ModelOptions, Setup, TweezerConfig};
use crate::particle::{ParticleProps, ParticleSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for stochastic runs.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub detuning_policy: DetuningPolicy,
    pub particle: ParticleSection,
    pub tweezer: TweezerSection,
    pub cavity: CavitySection,
    #[serde(default)]
    pub gas: GasSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub spectra: SpectraSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSection {
    /// Principal diameters `l_a <= l_b <= l_c`.
    pub diameters_nm: [f64; 3],
    #[serde(default = "default_permittivity")]
    pub permittivity: f64,
    #[serde(default = "default_density")]
    pub density_kg_m3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TweezerSection {
    pub power_w: f64,
    pub waist_x_nm: f64,
    pub waist_y_nm: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength_nm: f64,
    /// `psi` in `[0, pi/4]`.
    pub ellipticity_rad: f64,
    /// Polarization rotation `zeta`.
    #[serde(default)]
    pub rotation_rad: f64,
    #[serde(default)]
    pub profile: BeamProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub length_mm: f64,
    pub waist_um: f64,
    #[serde(default)]
    pub phase_rad: f64,
    /// Amplitude decay rate `kappa` in units of 10^6 1/s.
    pub linewidth_mhz: f64,
    /// Cavity axis angle `theta`.
    pub angle_rad: f64,
    /// Bare detuning in units of 10^6 rad/s; used by the fixed policy and
    /// as the starting value otherwise.
    #[serde(default)]
    pub detuning_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSection {
    #[serde(default = "default_pressure")]
    pub pressure_pa: f64,
    #[serde(default = "default_temperature")]
    pub temperature_k: f64,
    #[serde(default = "default_atom_mass")]
    pub atom_mass_amu: f64,
}

impl Default for GasSection {
    fn default() -> Self {
        Self {
            pressure_pa: default_pressure(),
            temperature_k: default_temperature(),
            atom_mass_amu: default_atom_mass(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "yes")]
    pub radiation_pressure: bool,
    #[serde(default = "yes")]
    pub scattering_loss: bool,
    #[serde(default = "yes")]
    pub cavity_envelope: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            radiation_pressure: true,
            scattering_loss: true,
            cavity_envelope: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            rtol: default_rtol(),
            atol: default_atol(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub directory: Option<String>,
}

/// Inclusive linear range with `steps` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        crate::spectra::linspace(self.start, self.end, self.steps)
    }

    fn validate(&self, key: &str) -> Result<()> {
        if self.steps == 0 || !self.start.is_finite() || !self.end.is_finite() {
            return Err(Error::InvalidInput(format!(
                "{key}: need finite bounds and steps >= 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Ellipticity values [rad].
    #[serde(default)]
    pub ellipticity: Option<Range>,
    #[serde(default)]
    pub shape: Option<ShapeGrid>,
}

/// Two swept diameters; the third follows from the fixed volume
/// `4 pi r^3 / 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeGrid {
    #[serde(default = "default_equivalent_radius")]
    pub equivalent_radius_nm: f64,
    pub d1_nm: Range,
    pub d2_nm: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraSection {
    #[serde(default = "default_points")]
    pub points: usize,
    /// Grid half-width in units of `max(w~_Q, |Delta_j|)`.
    #[serde(default = "default_span")]
    pub span: f64,
    #[serde(default = "yes")]
    pub corrections: bool,
    #[serde(default)]
    pub langevin: Option<LangevinSection>,
}

impl Default for SpectraSection {
    fn default() -> Self {
        Self {
            points: default_points(),
            span: default_span(),
            corrections: true,
            langevin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinSection {
    pub duration_s: f64,
    #[serde(default)]
    pub burn_in_s: f64,
    #[serde(default)]
    pub dt_s: Option<f64>,
    #[serde(default = "default_segment")]
    pub segment: usize,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "yes")]
    pub cavity_noise: bool,
    #[serde(default = "yes")]
    pub cubic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryModel {
    #[default]
    Full,
    QuasiStatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default)]
    pub model: TrajectoryModel,
    /// Duration in periods of the slowest confined mode.
    #[serde(default = "default_periods")]
    pub duration_periods: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Initial offset from the tweezer minimum.
    #[serde(default)]
    pub displacement_nm: [f64; 3],
    #[serde(default)]
    pub angle_offset_rad: [f64; 3],
    /// Start the cavity at the stationary field (otherwise empty).
    #[serde(default = "yes")]
    pub stationary_field: bool,
    /// Integrate the tangent flow (quasi-static model only).
    #[serde(default)]
    pub tangent: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            model: TrajectoryModel::Full,
            duration_periods: default_periods(),
            samples: default_samples(),
            displacement_nm: [0.0; 3],
            angle_offset_rad: [0.0; 3],
            stationary_field: true,
            tangent: false,
        }
    }
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn default_permittivity() -> f64 {
    2.1
}
fn default_density() -> f64 {
    2200.0
}
fn default_wavelength() -> f64 {
    1550.0
}
fn default_pressure() -> f64 {
    GasConfig::default().pressure
}
fn default_temperature() -> f64 {
    300.0
}
fn default_atom_mass() -> f64 {
    4.002_602
}
fn default_rtol() -> f64 {
    Tolerances::default().rtol
}
fn default_atol() -> f64 {
    Tolerances::default().atol
}
fn default_equivalent_radius() -> f64 {
    35.0
}
fn default_points() -> usize {
    1 << 14
}
fn default_span() -> f64 {
    1.5
}
fn default_segment() -> usize {
    4096
}
fn default_periods() -> f64 {
    5.0
}
fn default_samples() -> usize {
    201
}

fn check(ok: bool, key: &str, value: f64, expected: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{key} = {value} out of range (expected {expected})"
        )))
    }
}

impl RunConfig {
    /// Parses and validates a configuration string.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("config serialization: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.particle;
        for (i, d) in p.diameters_nm.iter().enumerate() {
            check(
                *d > 0.0 && d.is_finite(),
                &format!("particle.diameters_nm[{i}]"),
                *d,
                "> 0",
            )?;
        }
        let [a, b, c] = p.diameters_nm;
        if !(a <= b && b <= c) {
            return Err(Error::InvalidInput(format!(
                "particle.diameters_nm = [{a}, {b}, {c}] must be ordered l_a <= l_b <= l_c"
            )));
        }
        check(
            p.permittivity > 1.0,
            "particle.permittivity",
            p.permittivity,
            "> 1",
        )?;
        check(
            p.density_kg_m3 > 0.0,
            "particle.density_kg_m3",
            p.density_kg_m3,
            "> 0",
        )?;
        let t = &self.tweezer;
        check(t.power_w > 0.0, "tweezer.power_w", t.power_w, "> 0")?;
        check(
            t.waist_x_nm > 0.0,
            "tweezer.waist_x_nm",
            t.waist_x_nm,
            "> 0",
        )?;
        check(
            t.waist_y_nm > 0.0,
            "tweezer.waist_y_nm",
            t.waist_y_nm,
            "> 0",
        )?;
        check(
            t.wavelength_nm > 0.0,
            "tweezer.wavelength_nm",
            t.wavelength_nm,
            "> 0",
        )?;
        check(
            (0.0..=FRAC_PI_4).contains(&t.ellipticity_rad),
            "tweezer.ellipticity_rad",
            t.ellipticity_rad,
            "[0, pi/4] = [0, 0.7853981634]",
        )?;
        check(
            t.rotation_rad.is_finite(),
            "tweezer.rotation_rad",
            t.rotation_rad,
            "finite",
        )?;
        let cv = &self.cavity;
        check(cv.length_mm > 0.0, "cavity.length_mm", cv.length_mm, "> 0")?;
        check(cv.waist_um > 0.0, "cavity.waist_um", cv.waist_um, "> 0")?;
        check(
            cv.linewidth_mhz > 0.0,
            "cavity.linewidth_mhz",
            cv.linewidth_mhz,
            "> 0",
        )?;
        check(
            cv.angle_rad.is_finite(),
            "cavity.angle_rad",
            cv.angle_rad,
            "finite",
        )?;
        check(
            cv.phase_rad.is_finite(),
            "cavity.phase_rad",
            cv.phase_rad,
            "finite",
        )?;
        check(
            cv.detuning_mhz.is_finite(),
            "cavity.detuning_mhz",
            cv.detuning_mhz,
            "finite",
        )?;
        self.gas_config().validate()?;
        let i = &self.integrator;
        check(
            i.rtol > 0.0 && i.rtol < 1.0,
            "integrator.rtol",
            i.rtol,
            "(0, 1)",
        )?;
        check(i.atol > 0.0, "integrator.atol", i.atol, "> 0")?;
        if let Some(r) = &self.sweep.ellipticity {
            r.validate("sweep.ellipticity")?;
            for (key, v) in [("start", r.start), ("end", r.end)] {
                check(
                    (0.0..=FRAC_PI_4).contains(&v),
                    &format!("sweep.ellipticity.{key}"),
                    v,
                    "[0, pi/4]",
                )?;
            }
        }
        if let Some(s) = &self.sweep.shape {
            check(
                s.equivalent_radius_nm > 0.0,
                "sweep.shape.equivalent_radius_nm",
                s.equivalent_radius_nm,
                "> 0",
            )?;
            s.d1_nm.validate("sweep.shape.d1_nm")?;
            s.d2_nm.validate("sweep.shape.d2_nm")?;
            for (key, r) in [("d1_nm", &s.d1_nm), ("d2_nm", &s.d2_nm)] {
                check(
                    r.start > 0.0 && r.end > 0.0,
                    &format!("sweep.shape.{key}"),
                    r.start.min(r.end),
                    "> 0",
                )?;
            }
        }
        let sp = &self.spectra;
        check(sp.points >= 2, "spectra.points", sp.points as f64, ">= 2")?;
        check(sp.span > 0.0, "spectra.span", sp.span, "> 0")?;
        if let Some(l) = &sp.langevin {
            check(
                l.duration_s > 0.0,
                "spectra.langevin.duration_s",
                l.duration_s,
                "> 0",
            )?;
            check(
                l.burn_in_s >= 0.0,
                "spectra.langevin.burn_in_s",
                l.burn_in_s,
                ">= 0",
            )?;
            check(
                l.segment >= 8,
                "spectra.langevin.segment",
                l.segment as f64,
                ">= 8",
            )?;
            check(
                l.record_every >= 1,
                "spectra.langevin.record_every",
                l.record_every as f64,
                ">= 1",
            )?;
            if let Some(dt) = l.dt_s {
                check(dt > 0.0, "spectra.langevin.dt_s", dt, "> 0")?;
            }
        }
        let sim = &self.simulate;
        check(
            sim.duration_periods >= 0.0,
            "simulate.duration_periods",
            sim.duration_periods,
            ">= 0",
        )?;
        check(
            sim.samples >= 1,
            "simulate.samples",
            sim.samples as f64,
            ">= 1",
        )?;
        if sim.tangent && sim.model != TrajectoryModel::QuasiStatic {
            return Err(Error::InvalidInput(
                "simulate.tangent requires model = \"quasi-static\"".into(),
            ));
        }
        Ok(())
    }

    pub fn particle_spec(&self) -> Result<ParticleSpec> {
        let d = self.particle.diameters_nm.map(|x| x * 1e-9);
        ParticleSpec::new(d, self.particle.permittivity, self.particle.density_kg_m3)
    }

    pub fn tweezer_config(&self) -> TweezerConfig {
        let t = &self.tweezer;
        TweezerConfig {
            power: t.power_w,
            waist_x: t.waist_x_nm * 1e-9,
            waist_y: t.waist_y_nm * 1e-9,
            wavelength: t.wavelength_nm * 1e-9,
            ellipticity: t.ellipticity_rad,
            rotation: t.rotation_rad,
            profile: t.profile,
        }
    }

    pub fn cavity_config(&self) -> CavityConfig {
        let c = &self.cavity;
        CavityConfig {
            length: c.length_mm * 1e-3,
            waist: c.waist_um * 1e-6,
            phase: c.phase_rad,
            linewidth: c.linewidth_mhz * 1e6,
            angle: c.angle_rad,
            detuning: c.detuning_mhz * 1e6,
        }
    }

    pub fn gas_config(&self) -> GasConfig {
        GasConfig {
            pressure: self.gas.pressure_pa,
            temperature: self.gas.temperature_k,
            atom_mass: self.gas.atom_mass_amu * AMU,
        }
    }

    pub fn model_options(&self) -> ModelOptions {
        ModelOptions {
            radiation_pressure: self.model.radiation_pressure,
            scattering_loss: self.model.scattering_loss,
            cavity_envelope: self.model.cavity_envelope,
            cavity_enabled: true,
        }
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            rtol: self.integrator.rtol,
            atol: self.integrator.atol,
        }
    }

    /// Setup for a given particle (defaults to the configured one).
    pub fn setup_with(&self, spec: &ParticleSpec, ellipticity: f64) -> Result<Setup> {
        let props = ParticleProps::new(spec)?;
        let mut tw = self.tweezer_config();
        tw.ellipticity = ellipticity;
        Setup::new(props, tw, self.cavity_config(), self.model_options())
    }

    pub fn setup(&self) -> Result<Setup> {
        self.setup_with(&self.particle_spec()?, self.tweezer.ellipticity_rad)
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_toml_str(&text).map_err(|e| match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[particle]
diameters_nm = [40.0, 60.0, 140.0]

[tweezer]
power_w = 0.1
waist_x_nm = 1600.0
waist_y_nm = 1300.0
ellipticity_rad = 0.5

[cavity]
length_mm = 3.0
waist_um = 40.0
linewidth_mhz = 2.0
angle_rad = 1.5707963267948966
"#;

    #[test]
    fn minimal_gets_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.particle.permittivity, 2.1);
        assert_eq!(c.tweezer.wavelength_nm, 1550.0);
        assert_eq!(c.gas.temperature_k, 300.0);
        assert_eq!(c.gas.atom_mass_amu, 4.002_602);
        assert_eq!(c.detuning_policy, DetuningPolicy::Fixed);
        assert_eq!(c.spectra.points, 16384);
        assert!(c.setup().is_ok());
    }

    #[test]
    fn ellipticity_out_of_range() {
        let text = MINIMAL.replace("ellipticity_rad = 0.5", "ellipticity_rad = 0.9");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(
            err.contains("tweezer.ellipticity_rad") && err.contains("[0, pi/4]"),
            "{err}"
        );
    }

    #[test]
    fn unknown_key_rejected_with_context() {
        let text = MINIMAL.replace("power_w = 0.1", "power_w = 0.1\npowr = 3");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("powr"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn unit_conversion() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        let cav = c.cavity_config();
        assert_eq!(cav.linewidth, 2e6);
        assert!((cav.length - 3e-3).abs() < 1e-18);
        assert!((c.tweezer_config().waist_x - 1.6e-6).abs() < 1e-18);
        assert!((c.gas_config().atom_mass - 4.002_602 * AMU).abs() < 1e-40);
    }

    #[test]
    fn unordered_diameters_rejected() {
        let text = MINIMAL.replace("[40.0, 60.0, 140.0]", "[60.0, 40.0, 140.0]");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }
}
