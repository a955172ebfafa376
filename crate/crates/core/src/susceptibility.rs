//! Weak-probe susceptibility of the coupling-dressed Λ system.
//!
//! All responses are dimensionless and normalised so that a resonant ion
//! with the coupling off gives `i`; the physical scale lives entirely in the
//! background optical depth. For one ion with probe optical detuning Δ and
//! two-photon detuning δ,
//!
//! ```text
//! χ = i·γ_opt·(γ_s − i2πδ) / [ (γ_opt − i2πΔ)(γ_s − i2πδ) + Ω_c²/4 ]
//! ```
//!
//! The ensemble response averages this over the anti-hole (optical) and
//! ground-state (spin) offset distributions. An ion shifted by `x` in optical
//! frequency sees Δ → Δ − x, and one shifted by `s` in ground splitting sees
//! δ → δ − s; the two shifts enter the complex denominators as `+i2πx` and
//! `+i2πs`. Because the response has its only pole in the upper half-plane of
//! either offset, a Lorentzian average is exact when the offset is replaced
//! by `−i·HWHM`. Gaussian averages are done on pole-graded Gauss–Legendre
//! panels and checked by doubling the node count.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::medium::MediumModel;
use crate::quadrature::{Distribution, GaussLegendre, LineShape, Pole};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest relative change tolerated when the quadrature order is doubled.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;

/// Normalised single-class response for complex optical and spin denominators.
#[inline]
pub(crate) fn lambda_response(gamma_opt: f64, optical: Complex64, spin: Complex64, rabi_sq: f64) -> Complex64 {
    if rabi_sq == 0.0 {
        I * gamma_opt / optical
    } else {
        I * gamma_opt * spin / (optical * spin + 0.25 * rabi_sq)
    }
}

/// Response of a single homogeneous ion class.
pub fn chi_homogeneous(delta_two_photon: f64, delta_optical: f64, model: &MediumModel) -> Result<Complex64> {
    model.validate()?;
    let rabi = model.coupling_rabi()?;
    let g = model.atomic.optical_dephasing_rate;
    let optical = Complex64::new(g, -TAU * delta_optical);
    let spin = Complex64::new(model.atomic.spin_dephasing_rate, -TAU * delta_two_photon);
    Ok(lambda_response(g, optical, spin, rabi * rabi))
}

/// Ensemble-averaged response at two-photon detuning `delta_two_photon` (Hz).
pub fn chi_averaged(delta_two_photon: f64, model: &MediumModel) -> Result<Complex64> {
    Susceptibility::new(model)?.averaged(delta_two_photon)
}

/// Width estimate (Hz) of the EIT window: the power-broadened homogeneous
/// Lorentzian combined with the spin distribution (Voigt approximation for
/// a Gaussian spin shape). Used to size grids and derivative steps.
pub fn nominal_eit_fwhm(model: &MediumModel) -> f64 {
    let rabi = model.coupling_rabi().unwrap_or(0.0);
    let optical_width = model.atomic.optical_dephasing_rate + TAU * model.broadening.optical().hwhm();
    let lorentz = (model.atomic.spin_dephasing_rate + rabi * rabi / (4.0 * optical_width)) / std::f64::consts::PI;
    let spin = model.broadening.spin_inhom_fwhm;
    match model.broadening.spin_inhom_shape {
        LineShape::Lorentzian => lorentz + spin,
        LineShape::Gaussian => 0.5346 * lorentz + (0.2166 * lorentz * lorentz + spin * spin).sqrt(),
    }
}

/// Precomputed evaluator for the averaged response of one medium.
#[derive(Clone, Debug)]
pub struct Susceptibility {
    gamma_opt: f64,
    gamma_spin: f64,
    rabi_sq: f64,
    coupling_detuning: f64,
    optical: Distribution,
    spin: Distribution,
    /// Rules at the configured order and at twice that order.
    optical_rules: [GaussLegendre; 2],
    spin_rules: [GaussLegendre; 2],
    norm: [f64; 2],
}

impl Susceptibility {
    pub fn new(model: &MediumModel) -> Result<Self> {
        model.validate()?;
        let rabi = model.coupling_rabi()?;
        let b = &model.broadening;
        let mut s = Self {
            gamma_opt: model.atomic.optical_dephasing_rate,
            gamma_spin: model.atomic.spin_dephasing_rate,
            rabi_sq: rabi * rabi,
            coupling_detuning: model.fields.coupling_detuning,
            optical: b.optical(),
            spin: b.spin(),
            optical_rules: [
                GaussLegendre::new(b.quadrature_points_optical),
                GaussLegendre::new(2 * b.quadrature_points_optical),
            ],
            spin_rules: [
                GaussLegendre::new(b.quadrature_points_spin),
                GaussLegendre::new(2 * b.quadrature_points_spin),
            ],
            norm: [1.0; 2],
        };
        s.norm = [s.normalisation(0), s.normalisation(1)];
        Ok(s)
    }

    /// Single-class response, Δ and δ in Hz.
    pub fn homogeneous(&self, delta_two_photon: f64, delta_optical: f64) -> Complex64 {
        lambda_response(
            self.gamma_opt,
            Complex64::new(self.gamma_opt, -TAU * delta_optical),
            Complex64::new(self.gamma_spin, -TAU * delta_two_photon),
            self.rabi_sq,
        )
    }

    /// Averaged response, verified against the doubled-order quadrature.
    pub fn averaged(&self, delta_two_photon: f64) -> Result<Complex64> {
        let coarse = self.raw_average(delta_two_photon, 0) / self.norm[0];
        let fine = self.raw_average(delta_two_photon, 1) / self.norm[1];
        if !(fine.re.is_finite() && fine.im.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite susceptibility at detuning {delta_two_photon} Hz"
            )));
        }
        let diff = (fine - coarse).norm();
        if diff > CONVERGENCE_TOLERANCE * fine.norm() + 1e-12 {
            return Err(Error::Accuracy {
                detuning_hz: delta_two_photon,
                change: diff / fine.norm().max(f64::MIN_POSITIVE),
            });
        }
        Ok(fine)
    }

    /// Averaged response on many detunings, evaluated in parallel.
    pub fn averaged_many(&self, detunings: &[f64]) -> Result<Vec<Complex64>> {
        detunings.par_iter().map(|&d| self.averaged(d)).collect()
    }

    /// Averaged response at quadrature order `k` (0 = configured, 1 = doubled),
    /// normalised at that same order.
    pub fn averaged_at_order(&self, delta_two_photon: f64, k: usize) -> Complex64 {
        self.raw_average(delta_two_photon, k) / self.norm[k]
    }

    fn response(&self, optical: Complex64, spin: Complex64) -> Complex64 {
        lambda_response(self.gamma_opt, optical, spin, self.rabi_sq)
    }

    /// Anti-hole centre value with the coupling off; only the optical average matters there.
    fn normalisation(&self, k: usize) -> f64 {
        let g0 = Complex64::new(self.gamma_opt, 0.0);
        let two_level = |optical: Complex64| I * self.gamma_opt / optical;
        match self.optical.shape {
            LineShape::Lorentzian => two_level(g0 + TAU * self.optical.hwhm()).im,
            LineShape::Gaussian => {
                let pole = Pole::from_complex(-g0 / (I * TAU));
                self.optical
                    .average(&self.optical_rules[k], Some(pole), |x| two_level(g0 + I * TAU * x))
                    .im
            }
        }
    }

    fn optical_average(&self, g0: Complex64, spin: Complex64, k: usize) -> Complex64 {
        match self.optical.shape {
            LineShape::Lorentzian => self.response(g0 + TAU * self.optical.hwhm(), spin),
            LineShape::Gaussian => {
                if self.rabi_sq > 0.0 && spin == Complex64::new(0.0, 0.0) {
                    return Complex64::new(0.0, 0.0);
                }
                let shift = if self.rabi_sq > 0.0 { 0.25 * self.rabi_sq / spin } else { Complex64::new(0.0, 0.0) };
                let pole = Pole::from_complex((-shift - g0) / (I * TAU));
                self.optical
                    .average(&self.optical_rules[k], Some(pole), |x| self.response(g0 + I * TAU * x, spin))
            }
        }
    }

    fn raw_average(&self, delta: f64, k: usize) -> Complex64 {
        let g0 = Complex64::new(self.gamma_opt, -TAU * (self.coupling_detuning + delta));
        let a0 = Complex64::new(self.gamma_spin, -TAU * delta);
        match self.spin.shape {
            LineShape::Lorentzian => self.optical_average(g0, a0 + TAU * self.spin.hwhm(), k),
            LineShape::Gaussian => {
                if self.rabi_sq == 0.0 {
                    // no coupling: the response does not depend on the spin offset
                    return self.optical_average(g0, a0, k);
                }
                // Locate the spin-offset pole with the optical distribution
                // replaced by a Lorentzian of the same half-width.
                let g_eff = g0 + TAU * self.optical.hwhm();
                let a_pole = -0.25 * self.rabi_sq / g_eff;
                let pole = Pole::from_complex((a_pole - a0) / (I * TAU));
                self.spin.average(&self.spin_rules[k], Some(pole), |s| {
                    self.optical_average(g0, a0 + I * TAU * s, k)
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::LineShape;

    fn model_with_rabi(rabi: f64) -> MediumModel {
        let mut m = MediumModel::default();
        m.fields.coupling_intensity = 1.0;
        if rabi == 0.0 {
            m.fields.coupling_intensity = 0.0;
        } else {
            m.fields.rabi_calibration = rabi;
        }
        m
    }

    #[test]
    fn two_level_resonance_is_i() {
        let m = model_with_rabi(0.0);
        for delta in [-3e5, 0.0, 17.0, 1e6] {
            let chi = chi_homogeneous(delta, 0.0, &m).unwrap();
            assert!((chi - I).norm() < 1e-15);
        }
    }

    #[test]
    fn half_width_gives_half_absorption() {
        let m = model_with_rabi(0.0);
        let hwhm_hz = m.atomic.optical_dephasing_rate / TAU;
        let chi = chi_homogeneous(0.0, hwhm_hz, &m).unwrap();
        assert!((chi.im - 0.5).abs() < 1e-14);
        let chi = chi_homogeneous(0.0, -hwhm_hz, &m).unwrap();
        assert!((chi.im - 0.5).abs() < 1e-14);
    }

    #[test]
    fn ideal_dark_state_is_transparent() {
        let mut m = model_with_rabi(TAU * 50e3);
        m.atomic.spin_dephasing_rate = 0.0;
        let chi = chi_homogeneous(0.0, 0.0, &m).unwrap();
        assert_eq!(chi, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn homogeneous_is_passive() {
        let m = model_with_rabi(TAU * 80e3);
        for i in -50..=50 {
            for j in -50..=50 {
                let chi = chi_homogeneous(i as f64 * 3e3, j as f64 * 1e4, &m).unwrap();
                assert!(chi.im >= 0.0, "{chi} at {i},{j}");
            }
        }
    }

    #[test]
    fn averaged_normalisation_anchor() {
        let m = MediumModel::default().coupling_off();
        let chi = chi_averaged(0.0, &m).unwrap();
        assert!((chi - I).norm() < 1e-12, "{chi}");
        let mut g = m.clone();
        g.broadening.optical_inhom_shape = LineShape::Gaussian;
        g.broadening.quadrature_points_optical = 16;
        let chi = chi_averaged(0.0, &g).unwrap();
        assert!((chi - I).norm() < 1e-12, "{chi}");
    }

    #[test]
    fn vanishing_widths_reduce_to_homogeneous() {
        let mut m = MediumModel::default();
        m.fields.coupling_intensity = 30.0;
        m.broadening.optical_inhom_fwhm = 1e-6;
        m.broadening.spin_inhom_fwhm = 1e-6;
        let sus = Susceptibility::new(&m).unwrap();
        for delta in [-40e3, -3e3, 0.0, 1.5e3, 22e3] {
            let avg = sus.averaged(delta).unwrap();
            // the probe optical detuning follows δ for the central ion class
            let hom = chi_homogeneous(delta, delta, &m).unwrap();
            assert!((avg - hom).norm() <= 1e-9 * hom.norm().max(1e-3), "{delta}: {avg} vs {hom}");
        }
    }

    #[test]
    fn lorentzian_closed_form_matches_wide_numeric_average() {
        // Independent route: average the homogeneous response numerically over
        // wide Lorentzian windows instead of shifting into the complex plane.
        let mut m = MediumModel::default();
        m.fields.coupling_intensity = 60.0;
        m.broadening.optical_inhom_fwhm = 50e3;
        m.broadening.spin_inhom_shape = LineShape::Lorentzian;
        m.broadening.spin_inhom_fwhm = 20e3;
        let on = Susceptibility::new(&m).unwrap();
        let off = Susceptibility::new(&m.coupling_off()).unwrap();
        let rule = GaussLegendre::new(32);
        let opt = m.broadening.optical();
        let spin = m.broadening.spin();
        let wide = |d: &Distribution| (-2000.0 * d.fwhm, 2000.0 * d.fwhm);
        let gamma = m.atomic.optical_dephasing_rate;
        let gamma_s = m.atomic.spin_dephasing_rate;
        let rabi_sq = m.coupling_rabi().unwrap().powi(2);
        // pole in the optical offset x of homogeneous(δ', Δ0 − x)
        let optical_pole = |rabi_sq: f64, delta_opt: f64, delta_spin: f64| {
            let a = Complex64::new(gamma_s, -TAU * delta_spin);
            let g0 = Complex64::new(gamma, -TAU * delta_opt);
            let shift = if rabi_sq > 0.0 { 0.25 * rabi_sq / a } else { Complex64::new(0.0, 0.0) };
            Pole::from_complex((-shift - g0) / (I * TAU))
        };
        let norm = opt
            .average_on(&rule, wide(&opt), Some(optical_pole(0.0, 0.0, 0.0)), |x| off.homogeneous(0.0, -x))
            .im;
        for delta in [0.0, 12e3, -45e3] {
            let g_eff = Complex64::new(gamma + TAU * opt.hwhm(), -TAU * delta);
            let a0 = Complex64::new(gamma_s, -TAU * delta);
            let spin_pole = Pole::from_complex((-0.25 * rabi_sq / g_eff - a0) / (I * TAU));
            let numeric = spin.average_on(&rule, wide(&spin), Some(spin_pole), |s| {
                let pole = optical_pole(rabi_sq, delta, delta - s);
                opt.average_on(&rule, wide(&opt), Some(pole), |x| on.homogeneous(delta - s, delta - x))
            }) / norm;
            let closed = on.averaged(delta).unwrap();
            // window truncation at ±2000 FWHM leaves ~1e-4 of the Lorentzian mass out
            assert!((numeric - closed).norm() < 2e-3 * closed.norm(), "{delta}: {numeric} vs {closed}");
        }
    }

    #[test]
    fn gaussian_optical_matches_between_orders() {
        let mut m = MediumModel::default();
        m.fields.coupling_intensity = 105.0;
        m.broadening.optical_inhom_shape = LineShape::Gaussian;
        m.broadening.quadrature_points_optical = 16;
        m.broadening.quadrature_points_spin = 16;
        let sus = Susceptibility::new(&m).unwrap();
        for delta in [-150e3, -20e3, 0.0, 5e3, 80e3] {
            let chi = sus.averaged(delta).unwrap();
            assert!(chi.im >= -1e-12);
        }
    }

    #[test]
    fn coupling_opens_a_transparency_window() {
        let m = MediumModel::default();
        let on = chi_averaged(0.0, &m).unwrap();
        let off = chi_averaged(0.0, &m.coupling_off()).unwrap();
        assert!(on.im < 0.6 * off.im, "{on} vs {off}");
    }

    #[test]
    fn nominal_width_grows_with_power() {
        let m = MediumModel::default();
        let lo = nominal_eit_fwhm(&m.with_coupling_intensity(10.0));
        let hi = nominal_eit_fwhm(&m.with_coupling_intensity(130.0));
        assert!(lo >= m.broadening.spin_inhom_fwhm);
        assert!(hi > lo);
    }
}
