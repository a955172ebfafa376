//! Cross-module runs of the measurement chain on the default medium.

use std::f64::consts::TAU;

use num_complex::Complex64;
use slowlight::config::RunConfig;
use slowlight::harness::{
    absorption, calibrate, default_intensities, delay_from_pair, measure_eit, phase_shift, run_delay_measurement,
    run_intensity_scan, run_phase_resolved, TransferPair,
};
use slowlight::lockin::{lockin_default, wrap_phase};
use slowlight::medium::{rabi_from_intensity, DEFAULT_RABI_CALIBRATION};
use slowlight::signal::{propagate, synth_probe, ModulationSpec, Waveform};
use slowlight::spectrum::{group_delay_at_center, symmetric_grid, transfer_function, ComplexSpectrum};
use slowlight::MediumModel;

fn pure_delay(tau: f64, half_span: f64, points: usize) -> ComplexSpectrum {
    ComplexSpectrum::from_fn(symmetric_grid(half_span, points).unwrap(), |d| Complex64::from_polar(1.0, TAU * d * tau)).unwrap()
}

#[test]
fn calibration_reproduces_the_shipped_constant() {
    let cfg = RunConfig::default();
    let c = calibrate(&cfg.targets(), &cfg.model(), &cfg.spectrum_settings()).unwrap();
    assert!((c.rabi_calibration - DEFAULT_RABI_CALIBRATION).abs() <= 1e-3 * DEFAULT_RABI_CALIBRATION);
    assert!(c.fwhm_residual.abs() <= 1e-4);
    assert!((c.background_optical_depth - 0.1f64.ln().abs()).abs() < 1e-12);
    // Ω_c(105 W/cm²) is the fixed point: re-measuring gives the target width
    let m = c.apply(&cfg.model());
    assert_eq!(rabi_from_intensity(105.0, c.rabi_calibration).unwrap(), m.coupling_rabi().unwrap());
    let again = measure_eit(&m, &cfg.spectrum_settings()).unwrap();
    assert!((again.fit.fwhm - 62e3).abs() <= 1e-4 * 62e3);
}

#[test]
fn coupling_off_absorption_follows_the_anti_hole() {
    let m = MediumModel::default().coupling_off();
    let grid = symmetric_grid(5e6, 10001).unwrap();
    let a = absorption(&transfer_function(&m, &grid).unwrap());
    let centre = a[5000];
    assert!((centre - 2.303).abs() < 1e-3, "{centre}");
    // Lorentzian anti-hole: half the centre value at ±250 kHz
    assert!((a[5000 + 250] / centre - 0.5).abs() < 0.02, "{}", a[5250] / centre);
    assert!(a[0] < 0.01 * centre && a[10000] < 0.01 * centre);
}

#[test]
fn pure_delay_sine_lags_by_the_delay_phase() {
    let spec = ModulationSpec {
        waveform: Waveform::Sine,
        frequency: 5e3,
        depth: 1.0,
        duration: 100.0 / 5e3,
    };
    let fs = 1.2e6;
    let probe = synth_probe(&spec, fs).unwrap();
    let out = propagate(&probe, &pure_delay(20e-6, 0.5 * fs, 60001)).unwrap();
    let a = lockin_default(&probe.window_from(4.0 / 5e3).unwrap(), 5e3, 0.0).unwrap();
    let b = lockin_default(&out.window_from(4.0 / 5e3).unwrap(), 5e3, 0.0).unwrap();
    assert!((wrap_phase(a.phase - b.phase) - 0.628).abs() < 1e-3);
}

#[test]
fn delay_chain_recovers_a_pure_delay() {
    let settings = RunConfig::default().delay_settings();
    let pair = TransferPair {
        with_coupling: pure_delay(20e-6, 600e3, 2401),
        without_coupling: pure_delay(0.0, 600e3, 2401),
    };
    let d = delay_from_pair(&pair, &[3e3, 4e3, 5e3, 6e3], &settings).unwrap();
    assert!((d.delay - 20e-6).abs() <= 0.02 * 20e-6, "{}", d.delay);
    assert!(d.fit.r_squared > 0.999);
    // square wave delayed by τ reads 2πfτ at the fundamental
    let p = phase_shift(&pair, 6e3, 1, &settings).unwrap();
    assert!((p.phase_shift - TAU * 6e3 * 20e-6).abs() <= 0.02 * TAU * 6e3 * 20e-6);
}

#[test]
fn lockin_delay_matches_phase_derivative_at_reference() {
    let cfg = RunConfig::default();
    let m = cfg.model();
    let d = run_delay_measurement(&m, &cfg.modulation.frequencies, &cfg.delay_settings()).unwrap();
    let tau = group_delay_at_center(&m).unwrap();
    assert!(((d.delay - tau) / tau).abs() <= 0.05, "{} vs {tau}", d.delay);
    assert!(d.fit.r_squared > 0.99);
}

#[test]
fn intensity_scan_shape_and_determinism() {
    let cfg = RunConfig::default();
    let run = || run_intensity_scan(&cfg.model(), &default_intensities(), &cfg.spectrum_settings()).unwrap();
    let scan = run();
    assert_eq!(scan.rows.len(), 13);
    assert!(scan.fwhm_non_decreasing());
    assert!(scan.transmission_non_decreasing());
    assert!(scan.velocity_identity_error() <= 1e-9);
    let bytes = scan.to_table().to_bytes();
    let text = String::from_utf8(bytes.clone()).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(data.len(), 13);
    assert!(data.iter().all(|l| l.split(',').count() == 5));
    assert!(text.contains("# model_hash: "));
    assert_eq!(run().to_table().to_bytes(), bytes);
}

#[test]
fn phase_resolved_components_separate() {
    let cfg = RunConfig::default();
    let carriers = symmetric_grid(cfg.spectrum.phase_resolved_half_span, cfg.spectrum.phase_resolved_points).unwrap();
    let s = run_phase_resolved(&cfg.model(), &carriers, 6e3, &cfg.delay_settings()).unwrap();
    assert!(!s.separation.non_separable);
    // the narrow peak lags the broad background by roughly the EIT delay phase
    let expected = TAU * 6e3 * group_delay_at_center(&cfg.model()).unwrap();
    assert!(s.separation.separation < 0.0);
    assert!((s.separation.separation.abs() - expected).abs() <= 0.25 * expected);
    let table = s.to_table(s.separation.background.phase);
    assert_eq!(table.rows.len(), carriers.len());
}
