//! Probe envelopes and their linear propagation through a sampled transfer
//! function.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::ComplexSpectrum;

/// Uniformly sampled real envelope, zero-padded to a power-of-two length.
/// Only the first `valid_len` samples belong to the observation window.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    sample_rate: f64,
    t0: f64,
    samples: Vec<f64>,
    valid_len: usize,
}

impl TimeSeries {
    /// Wraps `samples`, zero-padding them to the next power of two.
    pub fn new(sample_rate: f64, t0: f64, mut samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::invalid("signal.sample_rate", format!("must be > 0, got {sample_rate}")));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("signal.t0", "must be finite"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("signal.samples", "empty signal"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("signal.samples", format!("non-finite sample at index {i}")));
        }
        let valid_len = samples.len();
        samples.resize(valid_len.next_power_of_two(), 0.0);
        Ok(Self {
            sample_rate,
            t0,
            samples,
            valid_len,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// All samples including the zero padding.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Samples of the observation window.
    pub fn valid(&self) -> &[f64] {
        &self.samples[..self.valid_len]
    }

    pub fn valid_len(&self) -> usize {
        self.valid_len
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate
    }

    /// Duration of the observation window.
    pub fn duration(&self) -> f64 {
        self.valid_len as f64 / self.sample_rate
    }

    /// The observation window from `start` (s, relative to t0) onwards,
    /// re-padded to a power of two.
    pub fn window_from(&self, start: f64) -> Result<Self> {
        let first = ((start * self.sample_rate) - 1e-9).ceil().max(0.0) as usize;
        if first >= self.valid_len {
            return Err(Error::invalid("signal.window", format!("start {start} s is past the end of the signal")));
        }
        Self::new(self.sample_rate, self.time(first), self.samples[first..self.valid_len].to_vec())
    }

    /// Root-mean-square over the observation window.
    pub fn rms(&self) -> f64 {
        let v = self.valid();
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), self.samples.len());
        Self {
            samples,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    Square,
    Sine,
}

/// Amplitude modulation applied to the probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModulationSpec {
    pub waveform: Waveform,
    /// Modulation frequency (Hz).
    pub frequency: f64,
    /// Modulation depth in (0, 1].
    pub depth: f64,
    /// Signal length (s).
    pub duration: f64,
}

/// Fewest modulation periods a signal may contain.
pub const MIN_PERIODS: f64 = 16.0;

/// Fewest samples per modulation period accepted by [`synth_probe`].
pub const MIN_SAMPLES_PER_PERIOD: f64 = 64.0;

impl ModulationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0) || !self.frequency.is_finite() {
            return Err(Error::invalid("modulation.frequency", format!("must be > 0, got {}", self.frequency)));
        }
        if !(self.depth > 0.0 && self.depth <= 1.0) {
            return Err(Error::invalid("modulation.depth", format!("must be in (0, 1], got {}", self.depth)));
        }
        if !(self.duration * self.frequency >= MIN_PERIODS - 1e-9) || !self.duration.is_finite() {
            return Err(Error::invalid(
                "modulation.duration",
                format!("must span >= {MIN_PERIODS} periods, got {}", self.duration * self.frequency),
            ));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }
}

/// Integral of the ±1 square wave sign(sin 2πft) from 0 to t.
fn square_integral(t: f64, f: f64) -> f64 {
    let u = (f * t).rem_euclid(1.0);
    if u < 0.5 {
        u / f
    } else {
        (1.0 - u) / f
    }
}

/// Envelope `1 − depth/2 + (depth/2)·w(2πft)` sampled from t = 0, where `w`
/// is sin or the ±1 square wave in phase with it. Square samples are
/// averaged over their sample interval, which keeps the edges alias-free
/// and makes whole-period means exact.
pub fn synth_probe(spec: &ModulationSpec, sample_rate: f64) -> Result<TimeSeries> {
    spec.validate()?;
    if !(sample_rate >= MIN_SAMPLES_PER_PERIOD * spec.frequency) || !sample_rate.is_finite() {
        return Err(Error::Resolution(format!(
            "sample rate {sample_rate} Hz is below {MIN_SAMPLES_PER_PERIOD} x the modulation frequency {} Hz",
            spec.frequency
        )));
    }
    let n = (spec.duration * sample_rate - 1e-9).ceil() as usize;
    let f = spec.frequency;
    let dt = 1.0 / sample_rate;
    let mean = 1.0 - 0.5 * spec.depth;
    let half = 0.5 * spec.depth;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            let w = match spec.waveform {
                Waveform::Sine => (TAU * f * t).sin(),
                Waveform::Square => (square_integral(t + 0.5 * dt, f) - square_integral(t - 0.5 * dt, f)) / dt,
            };
            mean + half * w
        })
        .collect();
    TimeSeries::new(sample_rate, 0.0, samples)
}

/// Fraction of the non-DC spectral energy that must fall inside the
/// transfer-function grid.
pub const COVERAGE_FRACTION: f64 = 0.99;

fn forward(signal: &TimeSeries) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = signal.samples().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

fn inverse(mut buf: Vec<Complex64>) -> Vec<Complex64> {
    let n = buf.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|z| *z *= scale);
    buf
}

/// Signed frequency (Hz) of FFT bin `k` of an `n`-point transform.
fn bin_frequency(k: usize, n: usize, sample_rate: f64) -> f64 {
    let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    k * sample_rate / n as f64
}

/// Smallest |f| containing `COVERAGE_FRACTION` of the non-DC energy.
pub fn occupied_bandwidth(signal: &TimeSeries) -> f64 {
    let spec = forward(signal);
    occupied_from_spectrum(&spec, signal.sample_rate())
}

fn occupied_from_spectrum(spec: &[Complex64], sample_rate: f64) -> f64 {
    let n = spec.len();
    let mut by_freq: Vec<(f64, f64)> = (1..n)
        .map(|k| (bin_frequency(k, n, sample_rate).abs(), spec[k].norm_sqr()))
        .collect();
    let total: f64 = by_freq.iter().map(|p| p.1).sum();
    if total == 0.0 {
        return 0.0;
    }
    by_freq.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for (f, e) in by_freq {
        acc += e;
        if acc >= COVERAGE_FRACTION * total {
            return f;
        }
    }
    0.5 * sample_rate
}

/// Complex output field: every envelope component at detuning δ is
/// multiplied by H(δ). Time dependence is exp(−i2πδt), so a phase that
/// grows with δ delays the envelope.
pub fn propagate_field(signal: &TimeSeries, h: &ComplexSpectrum) -> Result<Vec<Complex64>> {
    let mut spec = forward(signal);
    let n = spec.len();
    let fs = signal.sample_rate();
    let band = occupied_from_spectrum(&spec, fs);
    let reach = h.max_detuning().min(-h.min_detuning());
    if band > reach {
        return Err(Error::Coverage(format!(
            "signal occupies +/-{band:.4e} Hz but the transfer function only covers +/-{reach:.4e} Hz"
        )));
    }
    let interp = h.interpolator();
    for (k, z) in spec.iter_mut().enumerate() {
        *z *= interp.eval(-bin_frequency(k, n, fs));
    }
    Ok(inverse(spec))
}

/// Real part of the output field; exact whenever H(−δ) = H(δ)*.
pub fn propagate(signal: &TimeSeries, h: &ComplexSpectrum) -> Result<TimeSeries> {
    let field = propagate_field(signal, h)?;
    Ok(signal.with_samples(field.iter().map(|z| z.re).collect()))
}

/// Forward then inverse transform; reproduces the input to rounding.
pub fn round_trip(signal: &TimeSeries) -> TimeSeries {
    let back = inverse(forward(signal));
    signal.with_samples(back.iter().map(|z| z.re).collect())
}

/// Lag (in samples, signed, circular) maximising the cross-correlation of
/// `b` against `a`.
pub fn cross_correlation_lag(a: &TimeSeries, b: &TimeSeries) -> Result<isize> {
    if a.len() != b.len() {
        return Err(Error::invalid("signal.samples", "cross-correlation needs equal lengths"));
    }
    let fa = forward(a);
    let fb = forward(b);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    let xc = inverse(prod);
    let n = xc.len();
    let (best, _) = xc
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, z)| if z.re > acc.1 { (k, z.re) } else { acc });
    Ok(if best > n / 2 { best as isize - n as isize } else { best as isize })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::symmetric_grid;

    fn flat(half_span: f64) -> ComplexSpectrum {
        let grid = symmetric_grid(half_span, 2001).unwrap();
        ComplexSpectrum::from_fn(grid, |_| Complex64::new(1.0, 0.0)).unwrap()
    }

    fn delay(half_span: f64, tau: f64) -> ComplexSpectrum {
        let grid = symmetric_grid(half_span, 20001).unwrap();
        ComplexSpectrum::from_fn(grid, |d| Complex64::from_polar(1.0, TAU * d * tau)).unwrap()
    }

    #[test]
    fn square_sample_count_and_padding() {
        let spec = ModulationSpec {
            waveform: Waveform::Square,
            frequency: 3e3,
            depth: 1.0,
            duration: 16.0 / 3e3,
        };
        let s = synth_probe(&spec, 1e6).unwrap();
        assert_eq!(s.valid_len(), 5334);
        assert_eq!(s.len(), 8192);
        assert!(s.samples()[5334..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_envelope_range() {
        let spec = ModulationSpec {
            waveform: Waveform::Sine,
            frequency: 6e3,
            depth: 1.0,
            duration: 20.0 / 6e3,
        };
        let s = synth_probe(&spec, 6e3 * 128.0).unwrap();
        let (lo, hi) = s.valid().iter().fold((f64::MAX, f64::MIN), |a, &v| (a.0.min(v), a.1.max(v)));
        assert!(lo >= 0.0 && hi <= 1.0);
        assert!(lo < 1e-6 && hi > 1.0 - 1e-6);
        assert!((spec.period() - 166.6667e-6).abs() < 1e-9);
    }

    #[test]
    fn square_mean_over_whole_periods() {
        for depth in [1.0, 0.4] {
            let spec = ModulationSpec {
                waveform: Waveform::Square,
                frequency: 3e3,
                depth,
                duration: 16.0 / 3e3,
            };
            let s = synth_probe(&spec, 3e3 * 100.0).unwrap();
            let v = s.valid();
            assert_eq!(v.len(), 1600);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            assert!((mean - (1.0 - depth / 2.0)).abs() < 1e-9, "{mean}");
        }
    }

    #[test]
    fn square_has_only_odd_harmonics() {
        let f = 3e3;
        let fs = f * 128.0;
        let spec = ModulationSpec {
            waveform: Waveform::Square,
            frequency: f,
            depth: 1.0,
            duration: 64.0 / f,
        };
        let s = synth_probe(&spec, fs).unwrap();
        assert_eq!(s.valid_len(), s.len());
        let spec = forward(&s);
        let n = spec.len();
        let fundamental = spec[64].norm();
        for k in 1..n / 2 {
            if k % 64 == 0 && (k / 64) % 2 == 1 {
                continue;
            }
            let db = 20.0 * (spec[k].norm() / fundamental).log10();
            assert!(db < -60.0, "bin {k}: {db} dB");
        }
    }

    #[test]
    fn invalid_specs() {
        let good = ModulationSpec {
            waveform: Waveform::Square,
            frequency: 3e3,
            depth: 1.0,
            duration: 16.0 / 3e3,
        };
        assert!(matches!(synth_probe(&good, 3e3 * 63.0), Err(Error::Resolution(_))));
        assert!(synth_probe(&ModulationSpec { depth: 0.0, ..good }, 1e6).is_err());
        assert!(synth_probe(&ModulationSpec { duration: 15.0 / 3e3, ..good }, 1e6).is_err());
        assert!(synth_probe(&ModulationSpec { frequency: -1.0, ..good }, 1e6).is_err());
        assert!(TimeSeries::new(1.0, 0.0, vec![f64::NAN]).is_err());
    }

    #[test]
    fn identity_and_round_trip() {
        let spec = ModulationSpec {
            waveform: Waveform::Square,
            frequency: 5e3,
            depth: 1.0,
            duration: 20.0 / 5e3,
        };
        let s = synth_probe(&spec, 1e6).unwrap();
        let out = propagate(&s, &flat(5e5)).unwrap();
        let rms = |a: &[f64], b: &[f64]| {
            (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
        };
        assert!(rms(out.samples(), s.samples()) < 1e-12);
        assert!(rms(round_trip(&s).samples(), s.samples()) < 1e-12);
    }

    #[test]
    fn pure_delay_lags_sine() {
        let f = 5e3;
        let spec = ModulationSpec {
            waveform: Waveform::Sine,
            frequency: f,
            depth: 1.0,
            duration: 1024.0 / 1e6 * 16.0,
        };
        let s = synth_probe(&spec, 1e6).unwrap();
        let tau = 20e-6;
        let out = propagate(&s, &delay(5e5, tau)).unwrap();
        // away from the circular wrap the output is the input shifted by 20 samples
        for i in 100..s.valid_len() - 100 {
            assert!((out.samples()[i] - s.samples()[i - 20]).abs() < 1e-6, "{i}");
        }
        assert!((TAU * f * tau - 0.628).abs() < 1e-3);
    }

    #[test]
    fn coverage_is_enforced() {
        let spec = ModulationSpec {
            waveform: Waveform::Square,
            frequency: 6e3,
            depth: 1.0,
            duration: 20.0 / 6e3,
        };
        let s = synth_probe(&spec, 1e6).unwrap();
        assert!(matches!(propagate(&s, &flat(20e3)), Err(Error::Coverage(_))));
        assert!(occupied_bandwidth(&s) > 6e3);
    }

    #[test]
    fn correlation_recovers_shift() {
        let spec = ModulationSpec {
            waveform: Waveform::Square,
            frequency: 4e3,
            depth: 1.0,
            duration: 20.0 / 4e3,
        };
        let s = synth_probe(&spec, 1e6).unwrap();
        let out = propagate(&s, &delay(5e5, 37e-6)).unwrap();
        assert_eq!(cross_correlation_lag(&s, &out).unwrap(), 37);
    }

    #[test]
    fn window_drops_leading_periods() {
        let s = TimeSeries::new(10.0, 0.0, (0..30).map(|i| i as f64).collect()).unwrap();
        let w = s.window_from(0.4).unwrap();
        assert_eq!(w.valid()[0], 4.0);
        assert_eq!(w.valid_len(), 26);
        assert_eq!(w.len(), 32);
        assert!((w.t0() - 0.4).abs() < 1e-12);
    }
}
