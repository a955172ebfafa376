//! Brute-force check of the closed-form Λ response.
//!
//! Builds the full three-level Lindblad superoperator from the rotating-frame
//! Hamiltonian and jump operators, linearises it around the unperturbed
//! ground state |1⟩⟨1| for a unit probe Rabi frequency, and solves the
//! resulting linear system for the steady-state coherences. States are
//! ordered |1⟩, |2⟩ (ground) and |3⟩ (excited).

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::medium::MediumModel;

const DIM: usize = 3;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Column-major index of ρ_ij in vec(ρ).
fn idx(i: usize, j: usize) -> usize {
    i + DIM * j
}

fn projector(i: usize, j: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(DIM, DIM);
    m[(i, j)] = c(1.0);
    m
}

/// Superoperator of ρ ↦ −i[H, ρ].
fn commutator(h: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let id = DMatrix::<Complex64>::identity(DIM, DIM);
    (id.kronecker(h) - h.transpose().kronecker(&id)) * Complex64::new(0.0, -1.0)
}

/// Superoperator of ρ ↦ LρL† − ½{L†L, ρ}.
fn dissipator(l: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let id = DMatrix::<Complex64>::identity(DIM, DIM);
    let ldl = l.adjoint() * l;
    l.map(|z| z.conj()).kronecker(l) - (id.kronecker(&ldl) + ldl.transpose().kronecker(&id)) * c(0.5)
}

/// Probe coherence from the linearised master equation, normalised like
/// [`crate::susceptibility::chi_homogeneous`] (two-level resonance = i).
pub fn steady_state_oracle(delta_two_photon: f64, delta_optical: f64, model: &MediumModel) -> Result<Complex64> {
    model.validate()?;
    let gamma_opt = model.atomic.optical_dephasing_rate;
    let gamma_s = model.atomic.spin_dephasing_rate;
    let rabi_c = model.coupling_rabi()?;
    let (g1, g2, e) = (0, 1, 2);

    let mut h0 = DMatrix::<Complex64>::zeros(DIM, DIM);
    h0[(g2, g2)] = c(-TAU * delta_two_photon);
    h0[(e, e)] = c(-TAU * delta_optical);
    h0[(g2, e)] = c(-0.5 * rabi_c);
    h0[(e, g2)] = c(-0.5 * rabi_c);

    // Spontaneous decay split evenly into both ground states, plus pure
    // dephasing of |3⟩, together give the optical coherence decay γ_opt.
    let spontaneous = gamma_opt;
    let excited_dephasing = 0.5 * gamma_opt;
    let jumps = [
        projector(g1, e) * c((0.5 * spontaneous).sqrt()),
        projector(g2, e) * c((0.5 * spontaneous).sqrt()),
        projector(e, e) * c((2.0 * excited_dephasing).sqrt()),
        projector(g2, g2) * c((2.0 * gamma_s).sqrt()),
    ];
    let mut liouvillian = commutator(&h0);
    for l in &jumps {
        liouvillian += dissipator(l);
    }

    // first-order drive: −i[H_p, |1⟩⟨1|] with Ω_p = 1
    let mut hp = DMatrix::<Complex64>::zeros(DIM, DIM);
    hp[(e, g1)] = c(-0.5);
    hp[(g1, e)] = c(-0.5);
    let rho0 = projector(g1, g1);
    let drive = (&hp * &rho0 - &rho0 * &hp) * Complex64::new(0.0, -1.0);

    // populations are untouched at first order; solve on the coherences
    let coherences: Vec<(usize, usize)> = (0..DIM)
        .flat_map(|j| (0..DIM).map(move |i| (i, j)))
        .filter(|(i, j)| i != j)
        .collect();
    let n = coherences.len();
    let mut a = DMatrix::<Complex64>::zeros(n, n);
    let mut b = DMatrix::<Complex64>::zeros(n, 1);
    for (r, &(i, j)) in coherences.iter().enumerate() {
        for (col, &(k, l)) in coherences.iter().enumerate() {
            a[(r, col)] = liouvillian[(idx(i, j), idx(k, l))];
        }
        b[(r, 0)] = -drive[(i, j)];
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Degenerate("coherence equations are singular (zero decay on resonance)".into()))?;
    let row = coherences
        .iter()
        .position(|&p| p == (e, g1))
        .expect("optical coherence is part of the system");
    let rho_31 = x[(row, 0)];
    if !(rho_31.re.is_finite() && rho_31.im.is_finite()) {
        return Err(Error::Degenerate("non-finite steady-state coherence".into()));
    }
    Ok(rho_31 * (2.0 * gamma_opt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::susceptibility::chi_homogeneous;

    fn model(rabi: f64, gamma_opt_hz: f64, gamma_s_hz: f64) -> MediumModel {
        let mut m = MediumModel::default();
        m.atomic.optical_dephasing_rate = TAU * gamma_opt_hz;
        m.atomic.spin_dephasing_rate = TAU * gamma_s_hz;
        if rabi > 0.0 {
            m.fields.coupling_intensity = 1.0;
            m.fields.rabi_calibration = rabi;
        } else {
            m.fields.coupling_intensity = 0.0;
        }
        m
    }

    #[test]
    fn reduces_to_two_level() {
        let m = model(0.0, 10e3, 1e3);
        let chi = steady_state_oracle(123.0, 0.0, &m).unwrap();
        assert!((chi - Complex64::new(0.0, 1.0)).norm() < 1e-12, "{chi}");
    }

    #[test]
    fn dark_state_without_spin_decay() {
        let m = model(TAU * 50e3, 250e3, 0.0);
        let chi = steady_state_oracle(0.0, 0.0, &m).unwrap();
        assert!(chi.norm() < 1e-12, "{chi}");
        let chi = steady_state_oracle(0.0, 30e3, &m).unwrap();
        assert!(chi.norm() < 1e-12, "{chi}");
    }

    #[test]
    fn singular_when_undamped_and_resonant() {
        let m = model(0.0, 10e3, 0.0);
        assert!(matches!(steady_state_oracle(0.0, 0.0, &m), Err(Error::Degenerate(_))));
    }

    #[test]
    fn matches_closed_form_on_grid() {
        let m = model(TAU * 50e3, 250e3, 1e3);
        let mut worst: f64 = 0.0;
        for i in 0..21 {
            for j in 0..21 {
                let delta = -200e3 + 20e3 * i as f64;
                let big_delta = -1e6 + 1e5 * j as f64;
                let a = chi_homogeneous(delta, big_delta, &m).unwrap();
                let b = steady_state_oracle(delta, big_delta, &m).unwrap();
                worst = worst.max((a - b).norm() / a.norm().max(b.norm()));
            }
        }
        assert!(worst <= 1e-8, "worst relative deviation {worst:e}");
    }
}
