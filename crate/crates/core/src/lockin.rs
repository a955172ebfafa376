//! Digital lock-in amplifier and phase-resolved spectra.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

/// Time constants the filter must run before its output is read.
pub const SETTLE_TIME_CONSTANTS: f64 = 8.0;

/// Default filter time constant, in reference periods.
pub const DEFAULT_TIME_CONSTANT_PERIODS: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LockInResult {
    pub in_phase: f64,
    pub quadrature: f64,
    pub magnitude: f64,
    /// atan2(quadrature, in_phase), in (−π, π].
    pub phase: f64,
}

impl LockInResult {
    pub fn from_components(in_phase: f64, quadrature: f64) -> Self {
        Self {
            in_phase,
            quadrature,
            magnitude: in_phase.hypot(quadrature),
            phase: quadrature.atan2(in_phase),
        }
    }

    pub fn phasor(&self) -> Complex64 {
        Complex64::new(self.in_phase, self.quadrature)
    }

    /// Output an identical lock-in would give with its reference advanced by `phase_ref`.
    pub fn rotated(&self, phase_ref: f64) -> Self {
        let z = self.phasor() * Complex64::from_polar(1.0, -phase_ref);
        Self::from_components(z.re, z.im)
    }

    /// In-phase output at reference phase `phase_ref`.
    pub fn project(&self, phase_ref: f64) -> f64 {
        self.magnitude * (self.phase - phase_ref).cos()
    }
}

/// Demodulates the observation window of `signal` against
/// cos(2πf·t + phase_ref) through a first-order low-pass of time constant
/// `time_constant`.
///
/// For A·cos(2πft + φ) the result has magnitude A/2 and phase φ − phase_ref.
/// Once the filter has run for `SETTLE_TIME_CONSTANTS`, its output is
/// averaged over the remaining whole reference periods, which removes the
/// residual ripple at f and 2f.
pub fn lockin_demodulate(signal: &TimeSeries, f_ref: f64, phase_ref: f64, time_constant: f64) -> Result<LockInResult> {
    let fs = signal.sample_rate();
    if !(f_ref > 0.0 && f_ref < 0.5 * fs) {
        return Err(Error::invalid(
            "lockin.f_ref",
            format!("must lie in (0, {}) Hz, got {f_ref}", 0.5 * fs),
        ));
    }
    if !(time_constant > 0.0) || !time_constant.is_finite() {
        return Err(Error::invalid("lockin.time_constant", format!("must be > 0, got {time_constant}")));
    }
    let duration = signal.duration();
    let settle = SETTLE_TIME_CONSTANTS * time_constant;
    if duration < settle {
        return Err(Error::Settling(format!(
            "signal lasts {duration:.4e} s, filter needs {settle:.4e} s ({SETTLE_TIME_CONSTANTS} time constants)"
        )));
    }
    let dt = 1.0 / fs;
    let alpha = 1.0 - (-dt / time_constant).exp();
    let n = signal.valid_len();
    let settled = ((settle * fs).ceil() as usize).min(n - 1);
    let periods = ((n - settled) as f64 * dt * f_ref).floor();
    let average_from = if periods >= 1.0 {
        n - (periods / f_ref * fs).round() as usize
    } else {
        n - 1
    };

    let (mut x, mut y) = (0.0, 0.0);
    let (mut sx, mut sy) = (0.0, 0.0);
    for (i, &s) in signal.valid().iter().enumerate() {
        let arg = TAU * f_ref * signal.time(i) + phase_ref;
        let (sin, cos) = arg.sin_cos();
        x += alpha * (s * cos - x);
        y += alpha * (-s * sin - y);
        if i >= average_from {
            sx += x;
            sy += y;
        }
    }
    let count = (n - average_from) as f64;
    Ok(LockInResult::from_components(sx / count, sy / count))
}

/// Lock-in with the default time constant of `DEFAULT_TIME_CONSTANT_PERIODS` / f_ref.
pub fn lockin_default(signal: &TimeSeries, f_ref: f64, phase_ref: f64) -> Result<LockInResult> {
    lockin_demodulate(signal, f_ref, phase_ref, DEFAULT_TIME_CONSTANT_PERIODS / f_ref)
}

/// Wraps an angle into (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// In-phase projection of every detuning point at reference phase `phase_ref`.
pub fn phase_resolved_spectrum(points: &[(f64, LockInResult)], phase_ref: f64) -> Vec<(f64, f64)> {
    points.iter().map(|(d, r)| (*d, r.project(phase_ref))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    /// Broad anti-hole absorption.
    Background,
    /// Narrow EIT transparency peak.
    Peak,
}

/// Reference phase at which one spectral component is nulled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Suppression {
    pub phase: f64,
    /// RMS projection at `phase` relative to the RMS magnitude.
    pub residual_fraction: f64,
}

/// Phase minimising the summed squared projection of `phasors`:
/// Σ Re(z·e^{−iφ})² is least at φ = (arg Σz² + π)/2.
pub fn suppression_phase(phasors: &[LockInResult]) -> Result<Suppression> {
    let power: f64 = phasors.iter().map(|r| r.magnitude * r.magnitude).sum();
    if phasors.is_empty() || power == 0.0 {
        return Err(Error::Degenerate("component has no signal to suppress".into()));
    }
    let sum_sq: Complex64 = phasors.iter().map(|r| r.phasor() * r.phasor()).sum();
    let phase = wrap_phase(0.5 * (sum_sq.arg() + PI));
    let residual: f64 = phasors.iter().map(|r| r.project(phase).powi(2)).sum();
    Ok(Suppression {
        phase,
        residual_fraction: (residual / power).sqrt(),
    })
}

/// Suppression phases of both components and their separation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSeparation {
    pub background: Suppression,
    pub peak: Suppression,
    /// peak − background, wrapped into (−π/2, π/2] (suppression is defined mod π).
    pub separation: f64,
    /// Set when the two phases agree within 1 mrad: the components cannot be separated.
    pub non_separable: bool,
}

pub const SEPARATION_TOLERANCE: f64 = 1e-3;

pub fn suppress_components(background: &[LockInResult], peak: &[LockInResult]) -> Result<PhaseSeparation> {
    let b = suppression_phase(background)?;
    let p = suppression_phase(peak)?;
    let mut sep = (p.phase - b.phase).rem_euclid(PI);
    if sep > 0.5 * PI {
        sep -= PI;
    }
    Ok(PhaseSeparation {
        background: b,
        peak: p,
        separation: sep,
        non_separable: sep.abs() < SEPARATION_TOLERANCE,
    })
}

/// Phase at which `component` is nulled.
pub fn suppress_component(component: Component, background: &[LockInResult], peak: &[LockInResult]) -> Result<Suppression> {
    match component {
        Component::Background => suppression_phase(background),
        Component::Peak => suppression_phase(peak),
    }
}
