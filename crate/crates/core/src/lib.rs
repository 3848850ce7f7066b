//! Cavity cooling of levitated ellipsoidal nanoparticles by elliptic
//! coherent scattering: optical forces and torques, coupled cavity
//! dynamics, deep-trapping linearization, occupations and output spectra.

pub mod cavity;
pub mod cli;
pub mod config;
pub mod constants;
pub mod dipole_forces;
pub mod dynamics;
pub mod error;
pub mod linearize;
pub mod ode;
pub mod optics;
pub mod particle;
pub mod quad;
pub mod spectra;

pub use error::{Error, Result};
