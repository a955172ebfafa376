//! Lorentzian peak and straight-line least-squares fits.

use std::f64::consts::TAU;

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};

/// Fewest samples required within the fitted FWHM.
pub const MIN_POINTS_IN_PEAK: usize = 16;

const MAX_ITERATIONS: usize = 500;

/// Lorentzian on a constant baseline:
/// y = baseline + amplitude·(w/2)² / ((x − center)² + (w/2)²).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EitPeakFit {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub residual_rms: f64,
    pub iterations: usize,
}

impl EitPeakFit {
    pub fn eval(&self, x: f64) -> f64 {
        lorentzian(&Vector4::new(self.center, self.fwhm, self.amplitude, self.baseline), x)
    }
}

fn lorentzian(p: &Vector4<f64>, x: f64) -> f64 {
    let hw2 = 0.25 * p[1] * p[1];
    p[3] + p[2] * hw2 / ((x - p[0]).powi(2) + hw2)
}

/// Value and gradient with respect to (center, fwhm, amplitude, baseline).
fn lorentzian_grad(p: &Vector4<f64>, x: f64) -> (f64, Vector4<f64>) {
    let (c, w, a, b) = (p[0], p[1], p[2], p[3]);
    let hw2 = 0.25 * w * w;
    let u = x - c;
    let den = u * u + hw2;
    let shape = hw2 / den;
    let d_center = a * hw2 * 2.0 * u / (den * den);
    let d_width = a * 0.5 * w * u * u / (den * den);
    (b + a * shape, Vector4::new(d_center, d_width, shape, 1.0))
}

fn cost(points: &[(f64, f64)], p: &Vector4<f64>) -> f64 {
    points.iter().map(|&(x, y)| (y - lorentzian(p, x)).powi(2)).sum()
}

fn initial_guess(points: &[(f64, f64)]) -> Vector4<f64> {
    let n = points.len();
    let edge = (n / 10).max(1);
    let baseline = (points[..edge].iter().chain(&points[n - edge..]).map(|p| p.1).sum::<f64>()) / (2 * edge) as f64;
    let (imax, &(xc, ymax)) = points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty");
    let half = baseline + 0.5 * (ymax - baseline);
    let left = points[..imax].iter().rev().find(|p| p.1 < half).map(|p| p.0).unwrap_or(points[0].0);
    let right = points[imax..].iter().find(|p| p.1 < half).map(|p| p.0).unwrap_or(points[n - 1].0);
    let width = (right - left).max((points[1].0 - points[0].0).abs());
    Vector4::new(xc, width, ymax - baseline, baseline)
}

/// Levenberg–Marquardt fit of a single Lorentzian peak on a constant baseline.
/// Deterministic: fixed start from the data, fixed damping schedule.
pub fn fit_eit_peak(points: &[(f64, f64)]) -> Result<EitPeakFit> {
    if points.len() < MIN_POINTS_IN_PEAK {
        return Err(Error::Resolution(format!(
            "{} points supplied, need at least {MIN_POINTS_IN_PEAK} inside the peak",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::Fit("non-finite input point".into()));
    }
    let mut p = initial_guess(points);
    let scale = Vector4::new(p[1].abs(), p[1].abs(), p[2].abs().max(1e-300), p[2].abs().max(1e-300));
    let mut c = cost(points, &p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for &(x, y) in points {
            let (f, g) = lorentzian_grad(&p, x);
            jtj += g * g.transpose();
            jtr += g * (y - f);
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for i in 0..4 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let tc = cost(points, &trial);
            if tc.is_finite() && tc <= c {
                let small = (0..4).all(|i| step[i].abs() <= 1e-12 * (trial[i].abs() + scale[i]));
                let flat = c - tc <= 1e-15 * c;
                p = trial;
                c = tc;
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                if small || flat {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: a stationary point
            converged = true;
        }
        if converged || c == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Fit(format!(
            "no convergence after {MAX_ITERATIONS} iterations (center {:.6e}, fwhm {:.6e}, amplitude {:.6e}, cost {c:.3e})",
            p[0], p[1], p[2]
        )));
    }
    let fwhm = p[1].abs();
    if !(fwhm > 0.0) || !fwhm.is_finite() {
        return Err(Error::Fit(format!("degenerate width {fwhm}")));
    }
    if p[2] < 0.0 {
        return Err(Error::Fit(format!("fitted peak has negative amplitude {:.6e}", p[2])));
    }
    let inside = points.iter().filter(|q| (q.0 - p[0]).abs() <= 0.5 * fwhm).count();
    if inside < MIN_POINTS_IN_PEAK {
        return Err(Error::Resolution(format!(
            "only {inside} points inside the fitted FWHM of {fwhm:.4e}, need {MIN_POINTS_IN_PEAK}"
        )));
    }
    Ok(EitPeakFit {
        center: p[0],
        fwhm,
        amplitude: p[2],
        baseline: p[3],
        residual_rms: (c / points.len() as f64).sqrt(),
        iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residual_rms: f64,
}

impl LinearFit {
    /// Group delay slope/(2π) for phase (rad) against modulation frequency (Hz).
    pub fn delay(&self) -> f64 {
        self.slope / TAU
    }
}

/// Ordinary least squares through at least three distinct abscissae.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<LinearFit> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if points.len() < 3 || xs.len() < 3 {
        return Err(Error::Degenerate(format!(
            "linear fit needs >= 3 distinct abscissae, got {} of {} points",
            xs.len(),
            points.len()
        )));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::Degenerate("non-finite point".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        residual_rms: (ss_res / n).sqrt(),
    })
}
