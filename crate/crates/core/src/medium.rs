//! Parameters of the driven Λ medium.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::quadrature::{Distribution, LineShape};

/// Rabi calibration κ, in (rad/s)/√(W/cm²), that places the EIT FWHM of the
/// default medium at 62 kHz for 105 W/cm² coupling.
pub const DEFAULT_RABI_CALIBRATION: f64 = 8.9262e4;

/// Intensity optical depth of a 90 % absorbing background, −ln 0.1.
pub const DEFAULT_OPTICAL_DEPTH: f64 = std::f64::consts::LN_10;

#[derive(Clone, Debug, PartialEq)]
pub struct AtomicParams {
    /// Homogeneous optical coherence decay γ_opt (rad/s).
    pub optical_dephasing_rate: f64,
    /// Homogeneous ground-state coherence decay γ_s (rad/s).
    pub spin_dephasing_rate: f64,
    /// Ground-state (Raman) splitting (Hz).
    pub raman_splitting: f64,
    /// Optical wavelength (m).
    pub optical_wavelength: f64,
}

impl Default for AtomicParams {
    fn default() -> Self {
        Self {
            optical_dephasing_rate: TAU * 10e3,
            spin_dephasing_rate: TAU * 1e3,
            raman_splitting: 10.2e6,
            optical_wavelength: 605.7e-9,
        }
    }
}

impl AtomicParams {
    pub fn validate(&self) -> Result<()> {
        // γ_opt also fixes the response normalisation, so it must be strictly positive.
        positive("atomic.optical_dephasing_rate", self.optical_dephasing_rate)?;
        non_negative("atomic.spin_dephasing_rate", self.spin_dephasing_rate)?;
        positive("atomic.raman_splitting", self.raman_splitting)?;
        positive("atomic.optical_wavelength", self.optical_wavelength)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BroadeningParams {
    /// Anti-hole (optical) inhomogeneous FWHM (Hz).
    pub optical_inhom_fwhm: f64,
    pub optical_inhom_shape: LineShape,
    /// Ground-state transition inhomogeneous FWHM (Hz).
    pub spin_inhom_fwhm: f64,
    pub spin_inhom_shape: LineShape,
    /// Gauss–Legendre nodes per quadrature panel.
    pub quadrature_points_optical: usize,
    pub quadrature_points_spin: usize,
}

impl Default for BroadeningParams {
    fn default() -> Self {
        Self {
            optical_inhom_fwhm: 0.5e6,
            optical_inhom_shape: LineShape::Lorentzian,
            spin_inhom_fwhm: 60e3,
            spin_inhom_shape: LineShape::Gaussian,
            quadrature_points_optical: 64,
            quadrature_points_spin: 64,
        }
    }
}

impl BroadeningParams {
    pub fn validate(&self) -> Result<()> {
        positive("broadening.optical_inhom_fwhm", self.optical_inhom_fwhm)?;
        positive("broadening.spin_inhom_fwhm", self.spin_inhom_fwhm)?;
        quadrature_count("broadening.quadrature_points_optical", self.quadrature_points_optical)?;
        quadrature_count("broadening.quadrature_points_spin", self.quadrature_points_spin)
    }

    pub fn optical(&self) -> Distribution {
        Distribution::new(self.optical_inhom_shape, self.optical_inhom_fwhm)
    }

    pub fn spin(&self) -> Distribution {
        Distribution::new(self.spin_inhom_shape, self.spin_inhom_fwhm)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldParams {
    /// Coupling irradiance (W/cm²).
    pub coupling_intensity: f64,
    /// Probe irradiance (W/cm²); recorded only, the probe is treated to first order.
    pub probe_intensity: f64,
    /// Repump irradiance (W/cm²); recorded only, folded into the background optical depth.
    pub repump_intensity: f64,
    /// Coupling offset from its optical line centre (Hz).
    pub coupling_detuning: f64,
    /// κ in Ω_c = κ·√I_c, (rad/s)/√(W/cm²).
    pub rabi_calibration: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            coupling_intensity: 105.0,
            probe_intensity: 0.1,
            repump_intensity: 1.6,
            coupling_detuning: 0.0,
            rabi_calibration: DEFAULT_RABI_CALIBRATION,
        }
    }
}

impl FieldParams {
    pub fn validate(&self) -> Result<()> {
        non_negative("fields.coupling_intensity", self.coupling_intensity)?;
        non_negative("fields.probe_intensity", self.probe_intensity)?;
        non_negative("fields.repump_intensity", self.repump_intensity)?;
        finite("fields.coupling_detuning", self.coupling_detuning)?;
        positive("fields.rabi_calibration", self.rabi_calibration)
    }
}

/// The full medium: atoms, broadening, driving fields and geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct MediumModel {
    pub atomic: AtomicParams,
    pub broadening: BroadeningParams,
    pub fields: FieldParams,
    /// Interaction length (m).
    pub length: f64,
    /// Intensity optical depth αL at the anti-hole centre with the coupling off.
    pub background_optical_depth: f64,
}

impl Default for MediumModel {
    fn default() -> Self {
        Self {
            atomic: AtomicParams::default(),
            broadening: BroadeningParams::default(),
            fields: FieldParams::default(),
            length: 3e-3,
            background_optical_depth: DEFAULT_OPTICAL_DEPTH,
        }
    }
}

impl MediumModel {
    pub fn validate(&self) -> Result<()> {
        self.atomic.validate()?;
        self.broadening.validate()?;
        self.fields.validate()?;
        positive("medium.length", self.length)?;
        non_negative("medium.background_optical_depth", self.background_optical_depth)
    }

    /// Coupling Rabi frequency Ω_c (rad/s).
    pub fn coupling_rabi(&self) -> Result<f64> {
        rabi_from_intensity(self.fields.coupling_intensity, self.fields.rabi_calibration)
    }

    pub fn with_coupling_intensity(&self, intensity: f64) -> Self {
        let mut m = self.clone();
        m.fields.coupling_intensity = intensity;
        m
    }

    /// The same medium with the coupling beam blocked.
    pub fn coupling_off(&self) -> Self {
        self.with_coupling_intensity(0.0)
    }
}

/// Ω = κ·√I.
pub fn rabi_from_intensity(intensity: f64, calibration: f64) -> Result<f64> {
    if !(intensity >= 0.0) || !intensity.is_finite() {
        return Err(Error::Domain(format!("intensity must be >= 0 W/cm^2, got {intensity}")));
    }
    if !(calibration > 0.0) || !calibration.is_finite() {
        return Err(Error::Domain(format!("rabi calibration must be > 0, got {calibration}")));
    }
    Ok(calibration * intensity.sqrt())
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite, got {v}")))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be > 0, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be >= 0, got {v}")))
    }
}

fn quadrature_count(field: &str, n: usize) -> Result<()> {
    if n >= 8 && n.is_multiple_of(2) {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be even and >= 8, got {n}")))
    }
}
