//! End-to-end experiments: calibration, absorption spectra, modulation
//! delay measurement, phase-resolved spectra and coupling-intensity scans.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::csv::{format_number, Table};
use crate::error::{Error, Result};
use crate::fit::{fit_eit_peak, fit_linear, EitPeakFit, LinearFit};
use crate::lockin::{lockin_demodulate, suppress_components, wrap_phase, LockInResult, PhaseSeparation};
use crate::medium::MediumModel;
use crate::signal::{propagate, propagate_field, synth_probe, ModulationSpec, TimeSeries, Waveform};
use crate::spectrum::{group_delay_at_center, symmetric_grid, transfer_function, ComplexSpectrum, GroupVelocity};
use crate::susceptibility::nominal_eit_fwhm;

/// Grid half-span as a multiple of the nominal EIT FWHM when the configured
/// span is too narrow; keeps the transfer-function span requirement met.
const GRID_FWHM_MULTIPLE: f64 = 5.5;

/// Detuning grid and fit window for simulated absorption spectra.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumSettings {
    /// Half-span of the simulated grid (Hz).
    pub half_span: f64,
    /// Grid spacing (Hz).
    pub spacing: f64,
    /// Only |δ| ≤ fit_half_span enters the peak fit (Hz).
    pub fit_half_span: f64,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        Self {
            half_span: 500e3,
            spacing: 1e3,
            fit_half_span: 300e3,
        }
    }
}

impl SpectrumSettings {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("spectrum.half_span", self.half_span),
            ("spectrum.spacing", self.spacing),
            ("spectrum.fit_half_span", self.fit_half_span),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(field, format!("must be > 0, got {v}")));
            }
        }
        if self.spacing >= self.half_span {
            return Err(Error::invalid("spectrum.spacing", "must be smaller than the half-span"));
        }
        Ok(())
    }

    /// Grid with the configured spacing, widened when the model's EIT window demands it.
    pub fn grid_for(&self, model: &MediumModel) -> Result<Vec<f64>> {
        adaptive_grid(model, self.half_span, self.spacing)
    }
}

/// Largest detuning grid any experiment will evaluate.
pub const MAX_GRID_POINTS: usize = 1 << 16;

fn adaptive_grid(model: &MediumModel, half_span: f64, spacing: f64) -> Result<Vec<f64>> {
    let half = half_span.max(GRID_FWHM_MULTIPLE * nominal_eit_fwhm(model));
    let steps = (half / spacing).ceil();
    if !(2.0 * steps < MAX_GRID_POINTS as f64) {
        return Err(Error::Resolution(format!(
            "a {spacing:e} Hz grid spanning +/-{half:e} Hz needs {} points, limit {MAX_GRID_POINTS}",
            2.0 * steps + 1.0
        )));
    }
    let steps = steps as usize;
    symmetric_grid(steps as f64 * spacing, 2 * steps + 1)
}

/// −ln|H|² on every grid point.
pub fn absorption(h: &ComplexSpectrum) -> Vec<f64> {
    h.values().iter().map(|v| -v.norm_sqr().ln()).collect()
}

/// Transparency peak fitted to the absorption removed by the coupling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EitMeasurement {
    pub fit: EitPeakFit,
    /// |H(0)|² with the coupling on.
    pub peak_transmission: f64,
    /// |H(0)|² with the coupling off.
    pub background_transmission: f64,
}

pub fn measure_eit(model: &MediumModel, settings: &SpectrumSettings) -> Result<EitMeasurement> {
    let grid = settings.grid_for(model)?;
    let on = transfer_function(model, &grid)?;
    let off = transfer_function(&model.coupling_off(), &grid)?;
    let a_on = absorption(&on);
    let a_off = absorption(&off);
    let points: Vec<(f64, f64)> = grid
        .iter()
        .zip(a_off.iter().zip(&a_on))
        .filter(|(d, _)| d.abs() <= settings.fit_half_span + 1e-9 * settings.spacing)
        .map(|(&d, (off, on))| (d, off - on))
        .collect();
    let fit = fit_eit_peak(&points)?;
    let centre = grid.len() / 2;
    Ok(EitMeasurement {
        fit,
        peak_transmission: on.values()[centre].norm_sqr(),
        background_transmission: off.values()[centre].norm_sqr(),
    })
}

/// Rows of (δ, absorption with coupling, absorption without coupling).
pub fn run_spectrum_scan(model: &MediumModel, grid: &[f64]) -> Result<Table> {
    let on = transfer_function(model, grid)?;
    let off = transfer_function(&model.coupling_off(), grid)?;
    let mut t = Table::new(["detuning_hz", "absorption", "absorption_coupling_off", "transmission"]);
    t.meta("model_hash", model_hash(model));
    t.meta("coupling_intensity_w_cm2", format_number(model.fields.coupling_intensity));
    for (((d, a), b), h) in grid.iter().zip(absorption(&on)).zip(absorption(&off)).zip(on.values()) {
        t.push(vec![*d, a, b, h.norm_sqr()]);
    }
    Ok(t)
}

/// SHA-256 of the model's full parameter set.
pub fn model_hash(model: &MediumModel) -> String {
    hex::encode(Sha256::digest(format!("{model:?}").as_bytes()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationTargets {
    /// Fraction of probe intensity absorbed at the anti-hole centre, coupling off.
    pub background_absorption: f64,
    /// Expected |H(0)|² with the coupling on; reported, never fitted.
    pub peak_transparency: f64,
    /// EIT FWHM (Hz) to reproduce at `ref_intensity`.
    pub eit_fwhm_at_ref: f64,
    /// Coupling irradiance of the reference condition (W/cm²).
    pub ref_intensity: f64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            background_absorption: 0.90,
            peak_transparency: 0.50,
            eit_fwhm_at_ref: 62e3,
            ref_intensity: 105.0,
        }
    }
}

impl CalibrationTargets {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.background_absorption) {
            return Err(Error::invalid(
                "calibration.background_absorption",
                format!("must be in [0, 1), got {}", self.background_absorption),
            ));
        }
        if !(self.peak_transparency > 0.0 && self.peak_transparency < 1.0) {
            return Err(Error::invalid(
                "calibration.peak_transparency",
                format!("must be in (0, 1), got {}", self.peak_transparency),
            ));
        }
        if !(self.eit_fwhm_at_ref > 0.0) || !self.eit_fwhm_at_ref.is_finite() {
            return Err(Error::invalid(
                "calibration.eit_fwhm_at_ref",
                format!("must be > 0, got {}", self.eit_fwhm_at_ref),
            ));
        }
        if !(self.ref_intensity > 0.0) || !self.ref_intensity.is_finite() {
            return Err(Error::invalid(
                "calibration.ref_intensity",
                format!("must be > 0, got {}", self.ref_intensity),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationResult {
    pub rabi_calibration: f64,
    pub background_optical_depth: f64,
    pub achieved_fwhm: f64,
    pub fwhm_target: f64,
    /// (achieved − target)/target.
    pub fwhm_residual: f64,
    pub peak_transparency: f64,
    pub transparency_target: f64,
    /// achieved − target.
    pub transparency_residual: f64,
    pub evaluations: usize,
}

impl CalibrationResult {
    /// The template with the calibrated κ and αL applied.
    pub fn apply(&self, template: &MediumModel) -> MediumModel {
        let mut m = template.clone();
        m.fields.rabi_calibration = self.rabi_calibration;
        m.background_optical_depth = self.background_optical_depth;
        m
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::labelled("quantity", ["target", "achieved", "residual"]);
        t.meta("rabi_calibration", format_number(self.rabi_calibration));
        t.meta("background_optical_depth", format_number(self.background_optical_depth));
        t.meta("evaluations", self.evaluations.to_string());
        t.meta("residuals", "eit_fwhm_hz relative, peak_transparency absolute (cross-check, not fitted)");
        t.push_labelled("eit_fwhm_hz", vec![self.fwhm_target, self.achieved_fwhm, self.fwhm_residual]);
        t.push_labelled(
            "peak_transparency",
            vec![self.transparency_target, self.peak_transparency, self.transparency_residual],
        );
        t
    }
}

/// αL = −ln(1 − absorption).
pub fn optical_depth_from_absorption(absorbed: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&absorbed) {
        return Err(Error::Domain(format!("absorbed fraction must be in [0, 1), got {absorbed}")));
    }
    Ok(-(1.0 - absorbed).ln())
}

/// Relative FWHM tolerance of the κ search.
const CALIBRATION_TOLERANCE: f64 = 1e-4;

/// Sets αL from the background absorption, then finds κ by bracketing and
/// bisection in ln κ so the fitted EIT FWHM at the reference intensity hits
/// its target. The resulting peak transparency is reported as a cross-check.
pub fn calibrate(targets: &CalibrationTargets, template: &MediumModel, settings: &SpectrumSettings) -> Result<CalibrationResult> {
    targets.validate()?;
    settings.validate()?;
    let depth = optical_depth_from_absorption(targets.background_absorption)?;
    let mut base = template.with_coupling_intensity(targets.ref_intensity);
    base.background_optical_depth = depth;
    base.validate()?;
    let target = targets.eit_fwhm_at_ref;
    let mut evaluations = 0;
    let mut width_at = |kappa: f64| -> Result<EitMeasurement> {
        evaluations += 1;
        let mut m = base.clone();
        m.fields.rabi_calibration = kappa;
        measure_eit(&m, settings)
    };

    let mut scan: Vec<(f64, String)> = Vec::new();
    let mut lo = None;
    let mut hi = None;
    let mut kappa = 1e3;
    while kappa <= 1e9 {
        let outcome = width_at(kappa);
        scan.push((
            kappa,
            match &outcome {
                Ok(m) => format_number(m.fit.fwhm),
                Err(e) => e.to_string(),
            },
        ));
        if let Ok(m) = outcome {
            if m.fit.fwhm < target {
                lo = Some(kappa);
            } else if lo.is_some() {
                hi = Some(kappa);
                break;
            }
        }
        kappa *= 2.0;
    }
    let (Some(mut lo), Some(mut hi)) = (lo, hi) else {
        let diag: Vec<String> = scan.iter().map(|(k, w)| format!("kappa={} -> {w}", format_number(*k))).collect();
        return Err(Error::Calibration(format!(
            "could not bracket FWHM target {target} Hz; scan: {}",
            diag.join("; ")
        )));
    };

    let mut best = None;
    for _ in 0..80 {
        let mid = (lo * hi).sqrt();
        let m = width_at(mid)?;
        let err = (m.fit.fwhm - target) / target;
        best = Some((mid, m));
        if err.abs() <= CALIBRATION_TOLERANCE {
            break;
        }
        if err < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (kappa, m) = best.expect("at least one bisection step");
    let residual = (m.fit.fwhm - target) / target;
    if residual.abs() > 0.01 {
        return Err(Error::Calibration(format!(
            "bisection stalled at kappa {kappa:e} with FWHM {} Hz",
            m.fit.fwhm
        )));
    }
    Ok(CalibrationResult {
        rabi_calibration: kappa,
        background_optical_depth: depth,
        achieved_fwhm: m.fit.fwhm,
        fwhm_target: target,
        fwhm_residual: residual,
        peak_transparency: m.peak_transmission,
        transparency_target: targets.peak_transparency,
        transparency_residual: m.peak_transmission - targets.peak_transparency,
        evaluations,
    })
}

/// Signal chain of the modulation-phase delay measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelaySettings {
    pub waveform: Waveform,
    pub depth: f64,
    /// Signal length in modulation periods.
    pub periods: f64,
    /// Leading periods dropped before demodulation.
    pub discard_periods: f64,
    pub sample_rate: f64,
    /// Lock-in time constant in modulation periods.
    pub time_constant_periods: f64,
    /// Transfer-function grid half-span (Hz), widened when needed.
    pub grid_half_span: f64,
    /// Transfer-function grid spacing (Hz).
    pub grid_spacing: f64,
}

impl Default for DelaySettings {
    fn default() -> Self {
        Self {
            waveform: Waveform::Square,
            depth: 1.0,
            periods: 100.0,
            discard_periods: 4.0,
            sample_rate: 1.2e6,
            time_constant_periods: 10.0,
            grid_half_span: 500e3,
            grid_spacing: 500.0,
        }
    }
}

impl DelaySettings {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("delay.periods", self.periods),
            ("delay.sample_rate", self.sample_rate),
            ("delay.time_constant_periods", self.time_constant_periods),
            ("delay.grid_half_span", self.grid_half_span),
            ("delay.grid_spacing", self.grid_spacing),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(field, format!("must be > 0, got {v}")));
            }
        }
        if !(self.discard_periods >= 0.0 && self.discard_periods < self.periods) {
            return Err(Error::invalid(
                "delay.discard_periods",
                format!("must be in [0, periods), got {}", self.discard_periods),
            ));
        }
        if !(self.depth > 0.0 && self.depth <= 1.0) {
            return Err(Error::invalid("delay.depth", format!("must be in (0, 1], got {}", self.depth)));
        }
        Ok(())
    }

    pub fn modulation(&self, frequency: f64) -> ModulationSpec {
        ModulationSpec {
            waveform: self.waveform,
            frequency,
            depth: self.depth,
            duration: self.periods / frequency,
        }
    }
}

/// Transfer functions with and without the coupling on a shared grid.
#[derive(Clone, Debug)]
pub struct TransferPair {
    pub with_coupling: ComplexSpectrum,
    pub without_coupling: ComplexSpectrum,
}

impl TransferPair {
    pub fn new(model: &MediumModel, settings: &DelaySettings) -> Result<Self> {
        let grid = adaptive_grid(model, settings.grid_half_span, settings.grid_spacing)?;
        Ok(Self {
            with_coupling: transfer_function(model, &grid)?,
            without_coupling: transfer_function(&model.coupling_off(), &grid)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub frequency: f64,
    pub phase_with: f64,
    pub phase_without: f64,
    /// Lag of the with-coupling signal: φ_without − φ_with, wrapped.
    pub phase_shift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayMeasurement {
    pub points: Vec<PhasePoint>,
    pub fit: LinearFit,
    pub delay: f64,
}

impl DelayMeasurement {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["modulation_hz", "phase_with_rad", "phase_without_rad", "phase_shift_rad"]);
        t.meta("delay_s", format_number(self.delay));
        t.meta("slope_rad_per_hz", format_number(self.fit.slope));
        t.meta("intercept_rad", format_number(self.fit.intercept));
        t.meta("r_squared", format_number(self.fit.r_squared));
        for p in &self.points {
            t.push(vec![p.frequency, p.phase_with, p.phase_without, p.phase_shift]);
        }
        t
    }
}

fn demodulate_after_discard(signal: &TimeSeries, f_ref: f64, f_mod: f64, settings: &DelaySettings) -> Result<LockInResult> {
    let window = signal.window_from(settings.discard_periods / f_mod)?;
    lockin_demodulate(&window, f_ref, 0.0, settings.time_constant_periods / f_mod)
}

/// Lock-in phase lag at `harmonic`·f_mod between the probe transmitted with
/// and without the coupling.
pub fn phase_shift(pair: &TransferPair, f_mod: f64, harmonic: u32, settings: &DelaySettings) -> Result<PhasePoint> {
    let probe = synth_probe(&settings.modulation(f_mod), settings.sample_rate)?;
    let f_ref = f_mod * harmonic as f64;
    let with = demodulate_after_discard(&propagate(&probe, &pair.with_coupling)?, f_ref, f_mod, settings)?;
    let without = demodulate_after_discard(&propagate(&probe, &pair.without_coupling)?, f_ref, f_mod, settings)?;
    Ok(PhasePoint {
        frequency: f_ref,
        phase_with: with.phase,
        phase_without: without.phase,
        phase_shift: wrap_phase(without.phase - with.phase),
    })
}

/// Phase shift at every modulation frequency, then a straight-line fit;
/// delay = slope/(2π).
pub fn run_delay_measurement(model: &MediumModel, frequencies: &[f64], settings: &DelaySettings) -> Result<DelayMeasurement> {
    settings.validate()?;
    let pair = TransferPair::new(model, settings)?;
    delay_from_pair(&pair, frequencies, settings)
}

pub fn delay_from_pair(pair: &TransferPair, frequencies: &[f64], settings: &DelaySettings) -> Result<DelayMeasurement> {
    let points: Vec<PhasePoint> = frequencies
        .par_iter()
        .map(|&f| phase_shift(pair, f, 1, settings))
        .collect::<Result<_>>()?;
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.frequency, p.phase_shift)).collect();
    let fit = fit_linear(&xy)?;
    Ok(DelayMeasurement {
        delay: fit.delay(),
        points,
        fit,
    })
}

/// Delays φ/(2π·k·f) from the fundamental (k = 1) and third harmonic (k = 3)
/// of a square-wave probe at `f_mod`.
pub fn harmonic_delays(model: &MediumModel, f_mod: f64, settings: &DelaySettings) -> Result<(f64, f64)> {
    settings.validate()?;
    let pair = TransferPair::new(model, settings)?;
    let first = phase_shift(&pair, f_mod, 1, settings)?;
    let third = phase_shift(&pair, f_mod, 3, settings)?;
    Ok((first.phase_shift / (TAU * f_mod), third.phase_shift / (TAU * 3.0 * f_mod)))
}

/// Lock-in outputs across carrier detuning, split into the broad
/// background and the narrow transparency peak.
#[derive(Clone, Debug)]
pub struct PhaseResolvedSpectrum {
    pub modulation_frequency: f64,
    pub detunings: Vec<f64>,
    /// Anti-hole absorption: coupling-off transmission minus the input.
    pub background: Vec<LockInResult>,
    /// Transparency: coupling-on minus coupling-off transmission.
    pub peak: Vec<LockInResult>,
    pub separation: PhaseSeparation,
}

impl PhaseResolvedSpectrum {
    /// In-phase outputs of both components and their sum at `phase_ref`.
    pub fn to_table(&self, phase_ref: f64) -> Table {
        let mut t = Table::new(["detuning_hz", "background", "peak", "total"]);
        t.meta("modulation_hz", format_number(self.modulation_frequency));
        t.meta("phase_ref_rad", format_number(phase_ref));
        t.meta("background_suppression_rad", format_number(self.separation.background.phase));
        t.meta("peak_suppression_rad", format_number(self.separation.peak.phase));
        t.meta("separation_rad", format_number(self.separation.separation));
        if self.separation.non_separable {
            t.meta("warning", "background and peak suppression phases coincide within 1 mrad");
        }
        for ((d, b), p) in self.detunings.iter().zip(&self.background).zip(&self.peak) {
            let (b, p) = (b.project(phase_ref), p.project(phase_ref));
            t.push(vec![*d, b, p, b + p]);
        }
        t
    }
}

/// Intensity lock-in phasor of the probe after `h` with its carrier at `carrier` Hz.
fn detected_phasor(probe: &TimeSeries, h: &ComplexSpectrum, carrier: f64, f_mod: f64, settings: &DelaySettings) -> Result<LockInResult> {
    let field = propagate_field(probe, &h.shifted(carrier))?;
    let intensity = probe.with_samples(field.iter().map(Complex64::norm_sqr).collect());
    demodulate_after_discard(&intensity, f_mod, f_mod, settings)
}

/// Scans the probe carrier over `carriers` with a photodiode (|E|²) and a
/// lock-in at `f_mod`, and finds the reference phases that null each component.
pub fn run_phase_resolved(model: &MediumModel, carriers: &[f64], f_mod: f64, settings: &DelaySettings) -> Result<PhaseResolvedSpectrum> {
    settings.validate()?;
    let reach = carriers.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let widened = DelaySettings {
        grid_half_span: settings.grid_half_span + reach,
        ..*settings
    };
    let pair = TransferPair::new(model, &widened)?;
    let probe = synth_probe(&settings.modulation(f_mod), settings.sample_rate)?;
    let input = demodulate_after_discard(
        &probe.with_samples(probe.samples().iter().map(|v| v * v).collect()),
        f_mod,
        f_mod,
        settings,
    )?;
    let rows: Vec<(LockInResult, LockInResult)> = carriers
        .par_iter()
        .map(|&c| {
            let on = detected_phasor(&probe, &pair.with_coupling, c, f_mod, settings)?;
            let off = detected_phasor(&probe, &pair.without_coupling, c, f_mod, settings)?;
            let bg = off.phasor() - input.phasor();
            let pk = on.phasor() - off.phasor();
            Ok((
                LockInResult::from_components(bg.re, bg.im),
                LockInResult::from_components(pk.re, pk.im),
            ))
        })
        .collect::<Result<_>>()?;
    let (background, peak): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let separation = suppress_components(&background, &peak)?;
    Ok(PhaseResolvedSpectrum {
        modulation_frequency: f_mod,
        detunings: carriers.to_vec(),
        background,
        peak,
        separation,
    })
}

/// 10–130 W/cm² in 13 steps.
pub fn default_intensities() -> Vec<f64> {
    (1..=13).map(|i| 10.0 * i as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanRow {
    pub intensity: f64,
    pub eit_amplitude: f64,
    pub eit_fwhm: f64,
    pub group_delay: f64,
    pub group_velocity: GroupVelocity,
    pub peak_transmission: f64,
    pub fit_residual_rms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanTable {
    pub length: f64,
    pub rows: Vec<ScanRow>,
    pub metadata: Vec<(String, String)>,
}

impl ScanTable {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new([
            "intensity_w_cm2",
            "eit_amplitude",
            "eit_fwhm_hz",
            "group_delay_s",
            "group_velocity_m_s",
        ]);
        t.metadata = self.metadata.clone();
        for r in &self.rows {
            t.push(vec![r.intensity, r.eit_amplitude, r.eit_fwhm, r.group_delay, r.group_velocity.value()]);
        }
        t
    }

    pub fn fwhm_non_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].eit_fwhm >= w[0].eit_fwhm)
    }

    pub fn transmission_non_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].peak_transmission >= w[0].peak_transmission)
    }

    /// Largest relative deviation of |v·τ − L| over rows with finite velocity.
    pub fn velocity_identity_error(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| r.group_velocity.finite().map(|v| (v * r.group_delay - self.length).abs() / self.length))
            .fold(0.0, f64::max)
    }

    /// Mean FWHM of rows with intensity ≤ `limit` and the largest relative
    /// deviation from it.
    pub fn plateau(&self, limit: f64) -> Option<(f64, f64)> {
        let w: Vec<f64> = self.rows.iter().filter(|r| r.intensity <= limit).map(|r| r.eit_fwhm).collect();
        if w.is_empty() {
            return None;
        }
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let spread = w.iter().map(|x| (x - mean).abs() / mean).fold(0.0, f64::max);
        Some((mean, spread))
    }

    /// Row of largest group delay.
    pub fn max_delay_row(&self) -> Option<&ScanRow> {
        self.rows.iter().max_by(|a, b| a.group_delay.total_cmp(&b.group_delay))
    }

    pub fn min_velocity(&self) -> f64 {
        self.rows.iter().map(|r| r.group_velocity.value()).fold(f64::INFINITY, f64::min)
    }
}

fn check_increasing(intensities: &[f64]) -> Result<()> {
    if intensities.is_empty() {
        return Err(Error::invalid("scan.intensities", "empty intensity list"));
    }
    if intensities.iter().any(|i| !(*i >= 0.0) || !i.is_finite()) {
        return Err(Error::invalid("scan.intensities", "intensities must be finite and >= 0"));
    }
    if intensities.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("scan.intensities", "intensities must be strictly increasing"));
    }
    Ok(())
}

/// Per intensity: fitted EIT amplitude and width, model group delay and velocity.
pub fn run_intensity_scan(model: &MediumModel, intensities: &[f64], settings: &SpectrumSettings) -> Result<ScanTable> {
    check_increasing(intensities)?;
    settings.validate()?;
    model.validate()?;
    let rows: Vec<ScanRow> = intensities
        .par_iter()
        .map(|&i| {
            let m = model.with_coupling_intensity(i);
            let eit = measure_eit(&m, settings)?;
            let tau = group_delay_at_center(&m)?;
            Ok(ScanRow {
                intensity: i,
                eit_amplitude: eit.fit.amplitude,
                eit_fwhm: eit.fit.fwhm,
                group_delay: tau,
                group_velocity: GroupVelocity::from_delay(m.length, tau),
                peak_transmission: eit.peak_transmission,
                fit_residual_rms: eit.fit.residual_rms,
            })
        })
        .collect::<Result<_>>()?;
    let metadata = vec![
        ("model_hash".to_string(), model_hash(model)),
        ("interaction_length_m".to_string(), format_number(model.length)),
        (
            "length_note".to_string(),
            "interaction length taken as the full crystal thickness; the true overlap zone is slightly shorter".to_string(),
        ),
    ];
    Ok(ScanTable {
        length: model.length,
        rows,
        metadata,
    })
}

/// Per intensity: (intensity, lock-in delay, phase-derivative delay).
pub fn end_to_end_delays(
    model: &MediumModel,
    intensities: &[f64],
    frequencies: &[f64],
    settings: &DelaySettings,
) -> Result<Vec<(f64, f64, f64)>> {
    check_increasing(intensities)?;
    intensities
        .par_iter()
        .map(|&i| {
            let m = model.with_coupling_intensity(i);
            let measured = run_delay_measurement(&m, frequencies, settings)?.delay;
            Ok((i, measured, group_delay_at_center(&m)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oversized_grid_is_refused() {
        let mut m = MediumModel::default();
        m.fields.rabi_calibration = 1e9;
        assert!(matches!(SpectrumSettings::default().grid_for(&m), Err(Error::Resolution(_))));
        assert_eq!(SpectrumSettings::default().grid_for(&MediumModel::default()).unwrap().len(), 1001);
    }

    #[test]
    fn optical_depth_examples() {
        assert!((optical_depth_from_absorption(0.9).unwrap() - 2.303).abs() < 1e-3);
        assert_eq!(optical_depth_from_absorption(0.0).unwrap(), 0.0);
        assert!(optical_depth_from_absorption(1.0).is_err());
    }

    #[test]
    fn targets_validation() {
        assert!(CalibrationTargets::default().validate().is_ok());
        let bad = CalibrationTargets {
            eit_fwhm_at_ref: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn grid_widens_for_broad_windows() {
        let m = MediumModel::default().with_coupling_intensity(2000.0);
        let s = SpectrumSettings::default();
        let g = s.grid_for(&m).unwrap();
        assert!(g[g.len() - 1] >= GRID_FWHM_MULTIPLE * nominal_eit_fwhm(&m));
        assert!((g[1] - g[0] - s.spacing).abs() < 1e-6);
        let g = s.grid_for(&MediumModel::default()).unwrap();
        assert_eq!(g.len(), 1001);
    }

    #[test]
    fn spectrum_far_wings_are_transparent() {
        let m = MediumModel::default();
        let grid = symmetric_grid(5e6, 10001).unwrap();
        let t = run_spectrum_scan(&m, &grid).unwrap();
        let first = &t.rows[0];
        assert!(first[1] < 0.01 && first[2] < 0.01, "{first:?}");
        let centre = &t.rows[5000];
        assert!((centre[2] - std::f64::consts::LN_10).abs() < 1e-9);
    }

    #[test]
    fn scan_rejects_unsorted_intensities() {
        let m = MediumModel::default();
        assert!(run_intensity_scan(&m, &[20.0, 10.0], &SpectrumSettings::default()).is_err());
        assert!(run_intensity_scan(&m, &[], &SpectrumSettings::default()).is_err());
    }
}
