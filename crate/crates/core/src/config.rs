//! JSON run configuration. Every key is optional; unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{CalibrationTargets, DelaySettings, SpectrumSettings};
use crate::medium::{AtomicParams, BroadeningParams, FieldParams, MediumModel};
use crate::quadrature::LineShape;
use crate::signal::Waveform;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtomicConfig {
    /// rad/s
    pub optical_dephasing_rate: f64,
    /// rad/s
    pub spin_dephasing_rate: f64,
    /// Hz
    pub raman_splitting: f64,
    /// m
    pub optical_wavelength: f64,
}

impl Default for AtomicConfig {
    fn default() -> Self {
        let a = AtomicParams::default();
        Self {
            optical_dephasing_rate: a.optical_dephasing_rate,
            spin_dephasing_rate: a.spin_dephasing_rate,
            raman_splitting: a.raman_splitting,
            optical_wavelength: a.optical_wavelength,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BroadeningConfig {
    pub optical_inhom_fwhm: f64,
    pub optical_inhom_shape: LineShape,
    pub spin_inhom_fwhm: f64,
    pub spin_inhom_shape: LineShape,
    pub quadrature_points_optical: usize,
    pub quadrature_points_spin: usize,
}

impl Default for BroadeningConfig {
    fn default() -> Self {
        let b = BroadeningParams::default();
        Self {
            optical_inhom_fwhm: b.optical_inhom_fwhm,
            optical_inhom_shape: b.optical_inhom_shape,
            spin_inhom_fwhm: b.spin_inhom_fwhm,
            spin_inhom_shape: b.spin_inhom_shape,
            quadrature_points_optical: b.quadrature_points_optical,
            quadrature_points_spin: b.quadrature_points_spin,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldsConfig {
    /// W/cm²
    pub coupling_intensity: f64,
    pub probe_intensity: f64,
    pub repump_intensity: f64,
    /// Hz
    pub coupling_detuning: f64,
    /// (rad/s)/√(W/cm²)
    pub rabi_calibration: f64,
}

impl Default for FieldsConfig {
    fn default() -> Self {
        let f = FieldParams::default();
        Self {
            coupling_intensity: f.coupling_intensity,
            probe_intensity: f.probe_intensity,
            repump_intensity: f.repump_intensity,
            coupling_detuning: f.coupling_detuning,
            rabi_calibration: f.rabi_calibration,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumConfig {
    pub length_mm: f64,
    pub background_optical_depth: f64,
}

impl Default for MediumConfig {
    fn default() -> Self {
        let m = MediumModel::default();
        Self {
            length_mm: m.length * 1e3,
            background_optical_depth: m.background_optical_depth,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub background_absorption: f64,
    pub peak_transparency: f64,
    pub eit_fwhm_at_ref: f64,
    pub ref_intensity: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        let t = CalibrationTargets::default();
        Self {
            background_absorption: t.background_absorption,
            peak_transparency: t.peak_transparency,
            eit_fwhm_at_ref: t.eit_fwhm_at_ref,
            ref_intensity: t.ref_intensity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Hz
    pub half_span: f64,
    /// Hz
    pub spacing: f64,
    /// Hz
    pub fit_half_span: f64,
    /// Carrier half-span of the phase-resolved spectrum (Hz).
    pub phase_resolved_half_span: f64,
    pub phase_resolved_points: usize,
    /// Modulation frequency of the phase-resolved spectrum (Hz).
    pub phase_resolved_modulation: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        let s = SpectrumSettings::default();
        Self {
            half_span: s.half_span,
            spacing: s.spacing,
            fit_half_span: s.fit_half_span,
            phase_resolved_half_span: 200e3,
            phase_resolved_points: 81,
            phase_resolved_modulation: 6e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulationConfig {
    pub waveform: Waveform,
    pub depth: f64,
    /// Modulation frequencies of the delay measurement (Hz).
    pub frequencies: Vec<f64>,
    pub periods: f64,
    pub discard_periods: f64,
    /// Hz
    pub sample_rate: f64,
    /// Transfer-function grid for propagation (Hz).
    pub grid_half_span: f64,
    pub grid_spacing: f64,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        let d = DelaySettings::default();
        Self {
            waveform: d.waveform,
            depth: d.depth,
            frequencies: vec![3e3, 4e3, 5e3, 6e3],
            periods: d.periods,
            discard_periods: d.discard_periods,
            sample_rate: d.sample_rate,
            grid_half_span: d.grid_half_span,
            grid_spacing: d.grid_spacing,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// Lock-in time constant in modulation periods.
    pub time_constant_periods: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            time_constant_periods: DelaySettings::default().time_constant_periods,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// W/cm², strictly increasing.
    pub intensities: Vec<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            intensities: crate::harness::default_intensities(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    /// Noisy fits per run.
    pub runs: usize,
    /// Gaussian noise σ relative to the peak amplitude.
    pub noise_fraction: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            runs: 100,
            noise_fraction: 0.01,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub atomic: AtomicConfig,
    pub broadening: BroadeningConfig,
    pub fields: FieldsConfig,
    pub medium: MediumConfig,
    pub calibration: CalibrationConfig,
    pub spectrum: SpectrumConfig,
    pub modulation: ModulationConfig,
    pub detection: DetectionConfig,
    pub scan: ScanConfig,
    pub monte_carlo: MonteCarloConfig,
}

fn value_error(path: &str, message: String) -> Error {
    Error::ConfigValue {
        path: path.to_string(),
        message,
    }
}

fn finite(path: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(value_error(path, format!("expected a finite number, got {v}")))
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(value_error(path, format!("expected a value > 0, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(value_error(path, format!("expected a value >= 0, got {v}")))
    }
}

fn in_range(path: &str, v: f64, lo: f64, hi: f64, lo_open: bool, hi_open: bool) -> Result<()> {
    let ok = (if lo_open { v > lo } else { v >= lo }) && (if hi_open { v < hi } else { v <= hi });
    if ok {
        Ok(())
    } else {
        let l = if lo_open { '(' } else { '[' };
        let h = if hi_open { ')' } else { ']' };
        Err(value_error(path, format!("expected a value in {l}{lo}, {hi}{h}, got {v}")))
    }
}

fn quadrature(path: &str, n: usize) -> Result<()> {
    if n >= 8 && n.is_multiple_of(2) {
        Ok(())
    } else {
        Err(value_error(path, format!("expected an even count >= 8, got {n}")))
    }
}

impl RunConfig {
    /// Checks every field against its invariant, reporting the first failure by path.
    pub fn validate(&self) -> Result<()> {
        let a = &self.atomic;
        positive("atomic.optical_dephasing_rate", a.optical_dephasing_rate)?;
        non_negative("atomic.spin_dephasing_rate", a.spin_dephasing_rate)?;
        positive("atomic.raman_splitting", a.raman_splitting)?;
        positive("atomic.optical_wavelength", a.optical_wavelength)?;

        let b = &self.broadening;
        positive("broadening.optical_inhom_fwhm", b.optical_inhom_fwhm)?;
        positive("broadening.spin_inhom_fwhm", b.spin_inhom_fwhm)?;
        quadrature("broadening.quadrature_points_optical", b.quadrature_points_optical)?;
        quadrature("broadening.quadrature_points_spin", b.quadrature_points_spin)?;

        let f = &self.fields;
        non_negative("fields.coupling_intensity", f.coupling_intensity)?;
        non_negative("fields.probe_intensity", f.probe_intensity)?;
        non_negative("fields.repump_intensity", f.repump_intensity)?;
        finite("fields.coupling_detuning", f.coupling_detuning)?;
        positive("fields.rabi_calibration", f.rabi_calibration)?;

        positive("medium.length_mm", self.medium.length_mm)?;
        non_negative("medium.background_optical_depth", self.medium.background_optical_depth)?;

        let c = &self.calibration;
        in_range("calibration.background_absorption", c.background_absorption, 0.0, 1.0, false, true)?;
        in_range("calibration.peak_transparency", c.peak_transparency, 0.0, 1.0, true, true)?;
        positive("calibration.eit_fwhm_at_ref", c.eit_fwhm_at_ref)?;
        positive("calibration.ref_intensity", c.ref_intensity)?;

        let s = &self.spectrum;
        positive("spectrum.half_span", s.half_span)?;
        positive("spectrum.spacing", s.spacing)?;
        if s.spacing >= s.half_span {
            return Err(value_error("spectrum.spacing", format!("expected a value below half_span {}, got {}", s.half_span, s.spacing)));
        }
        positive("spectrum.fit_half_span", s.fit_half_span)?;
        positive("spectrum.phase_resolved_half_span", s.phase_resolved_half_span)?;
        if s.phase_resolved_points < 3 || s.phase_resolved_points.is_multiple_of(2) {
            return Err(value_error(
                "spectrum.phase_resolved_points",
                format!("expected an odd count >= 3, got {}", s.phase_resolved_points),
            ));
        }
        positive("spectrum.phase_resolved_modulation", s.phase_resolved_modulation)?;

        let m = &self.modulation;
        in_range("modulation.depth", m.depth, 0.0, 1.0, true, false)?;
        if m.frequencies.len() < 3 {
            return Err(value_error(
                "modulation.frequencies",
                format!("expected at least 3 frequencies, got {}", m.frequencies.len()),
            ));
        }
        for (i, &v) in m.frequencies.iter().enumerate() {
            positive(&format!("modulation.frequencies[{i}]"), v)?;
        }
        in_range("modulation.periods", m.periods, 16.0, f64::MAX, false, false)?;
        in_range("modulation.discard_periods", m.discard_periods, 0.0, m.periods, false, true)?;
        positive("modulation.sample_rate", m.sample_rate)?;
        let top = m.frequencies.iter().cloned().fold(0.0, f64::max).max(s.phase_resolved_modulation);
        if m.sample_rate < 64.0 * top {
            return Err(value_error(
                "modulation.sample_rate",
                format!("expected at least 64 x the highest modulation frequency ({} Hz), got {}", 64.0 * top, m.sample_rate),
            ));
        }
        positive("modulation.grid_half_span", m.grid_half_span)?;
        positive("modulation.grid_spacing", m.grid_spacing)?;

        positive("detection.time_constant_periods", self.detection.time_constant_periods)?;
        let usable = m.periods - m.discard_periods;
        if usable < 8.0 * self.detection.time_constant_periods {
            return Err(value_error(
                "detection.time_constant_periods",
                format!(
                    "lock-in needs 8 time constants but only {usable} periods remain after the discarded ones; got {}",
                    self.detection.time_constant_periods
                ),
            ));
        }

        let ints = &self.scan.intensities;
        if ints.is_empty() {
            return Err(value_error("scan.intensities", "expected at least one intensity".into()));
        }
        for (i, &v) in ints.iter().enumerate() {
            non_negative(&format!("scan.intensities[{i}]"), v)?;
            if i > 0 && v <= ints[i - 1] {
                return Err(value_error(
                    &format!("scan.intensities[{i}]"),
                    format!("expected strictly increasing values, got {v} after {}", ints[i - 1]),
                ));
            }
        }

        if self.monte_carlo.runs == 0 {
            return Err(value_error("monte_carlo.runs", "expected at least 1 run".into()));
        }
        in_range("monte_carlo.noise_fraction", self.monte_carlo.noise_fraction, 0.0, 1.0, false, false)?;
        Ok(())
    }

    pub fn model(&self) -> MediumModel {
        let a = &self.atomic;
        let b = &self.broadening;
        let f = &self.fields;
        MediumModel {
            atomic: AtomicParams {
                optical_dephasing_rate: a.optical_dephasing_rate,
                spin_dephasing_rate: a.spin_dephasing_rate,
                raman_splitting: a.raman_splitting,
                optical_wavelength: a.optical_wavelength,
            },
            broadening: BroadeningParams {
                optical_inhom_fwhm: b.optical_inhom_fwhm,
                optical_inhom_shape: b.optical_inhom_shape,
                spin_inhom_fwhm: b.spin_inhom_fwhm,
                spin_inhom_shape: b.spin_inhom_shape,
                quadrature_points_optical: b.quadrature_points_optical,
                quadrature_points_spin: b.quadrature_points_spin,
            },
            fields: FieldParams {
                coupling_intensity: f.coupling_intensity,
                probe_intensity: f.probe_intensity,
                repump_intensity: f.repump_intensity,
                coupling_detuning: f.coupling_detuning,
                rabi_calibration: f.rabi_calibration,
            },
            length: self.medium.length_mm * 1e-3,
            background_optical_depth: self.medium.background_optical_depth,
        }
    }

    pub fn targets(&self) -> CalibrationTargets {
        let c = &self.calibration;
        CalibrationTargets {
            background_absorption: c.background_absorption,
            peak_transparency: c.peak_transparency,
            eit_fwhm_at_ref: c.eit_fwhm_at_ref,
            ref_intensity: c.ref_intensity,
        }
    }

    pub fn spectrum_settings(&self) -> SpectrumSettings {
        SpectrumSettings {
            half_span: self.spectrum.half_span,
            spacing: self.spectrum.spacing,
            fit_half_span: self.spectrum.fit_half_span,
        }
    }

    pub fn delay_settings(&self) -> DelaySettings {
        let m = &self.modulation;
        DelaySettings {
            waveform: m.waveform,
            depth: m.depth,
            periods: m.periods,
            discard_periods: m.discard_periods,
            sample_rate: m.sample_rate,
            time_constant_periods: self.detection.time_constant_periods,
            grid_half_span: m.grid_half_span,
            grid_spacing: m.grid_spacing,
        }
    }

    /// Pretty JSON with every field spelled out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Single-line JSON, used for metadata and hashing.
    pub fn to_compact_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }
}

/// Parses and validates a JSON configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        classify(inner, Some(path))
    })?;
    de.end().map_err(|e| classify(e, None))?;
    config.validate()?;
    Ok(config)
}

fn classify(e: serde_json::Error, path: Option<String>) -> Error {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => Error::ConfigValue {
            path: path.filter(|p| p != ".").unwrap_or_else(|| "<root>".to_string()),
            message: strip_position(&e.to_string()),
        },
        _ => Error::ConfigSyntax {
            line: e.line(),
            column: e.column(),
            message: strip_position(&e.to_string()),
        },
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}
