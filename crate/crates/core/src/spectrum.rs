//! Sampled complex responses, the medium transfer function and the group
//! delay/velocity derived from its phase.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::medium::MediumModel;
use crate::susceptibility::{nominal_eit_fwhm, Susceptibility};

const UNIFORMITY: f64 = 1e-9;

/// Complex response sampled on an ascending, uniform detuning grid (Hz).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    detunings: Vec<f64>,
    values: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(detunings: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if detunings.len() != values.len() {
            return Err(Error::invalid(
                "spectrum.values",
                format!("{} values for {} detunings", values.len(), detunings.len()),
            ));
        }
        check_uniform(&detunings)?;
        Ok(Self { detunings, values })
    }

    /// Evaluates `f` on every detuning of `grid`.
    pub fn from_fn(grid: Vec<f64>, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = grid.iter().map(|&d| f(d)).collect();
        Self::new(grid, values)
    }

    pub fn detunings(&self) -> &[f64] {
        &self.detunings
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.detunings[self.len() - 1] - self.detunings[0]) / (self.len() - 1) as f64
    }

    pub fn min_detuning(&self) -> f64 {
        self.detunings[0]
    }

    pub fn max_detuning(&self) -> f64 {
        self.detunings[self.len() - 1]
    }

    /// The same response re-referenced so that `offset` becomes zero detuning.
    pub fn shifted(&self, offset: f64) -> Self {
        let first = self.detunings[0] - offset;
        let step = self.spacing();
        Self {
            detunings: (0..self.len()).map(|i| first + step * i as f64).collect(),
            values: self.values.clone(),
        }
    }

    pub fn interpolator(&self) -> SpectrumInterpolator {
        SpectrumInterpolator::new(self)
    }
}

fn check_uniform(detunings: &[f64]) -> Result<()> {
    let n = detunings.len();
    if n < 2 {
        return Err(Error::invalid("spectrum.detunings", "need at least two points"));
    }
    if detunings.iter().any(|d| !d.is_finite()) {
        return Err(Error::invalid("spectrum.detunings", "non-finite detuning"));
    }
    let step = (detunings[n - 1] - detunings[0]) / (n - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::invalid("spectrum.detunings", "must be strictly increasing"));
    }
    for (i, w) in detunings.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::invalid("spectrum.detunings", format!("not increasing at index {}", i + 1)));
        }
        if ((w[1] - w[0]) - step).abs() > UNIFORMITY * step.max(w[0].abs().max(w[1].abs()) * 1e-6) {
            return Err(Error::invalid("spectrum.detunings", format!("non-uniform spacing at index {}", i + 1)));
        }
    }
    Ok(())
}

/// `points` detunings spaced uniformly over `[-half_span, half_span]`.
pub fn symmetric_grid(half_span: f64, points: usize) -> Result<Vec<f64>> {
    if !(half_span > 0.0) || !half_span.is_finite() {
        return Err(Error::invalid("grid.half_span", format!("must be > 0, got {half_span}")));
    }
    if points < 3 || points.is_multiple_of(2) {
        return Err(Error::invalid("grid.points", format!("must be odd and >= 3, got {points}")));
    }
    let half = (points / 2) as f64;
    let step = half_span / half;
    Ok((0..points).map(|i| (i as f64 - half) * step).collect())
}

/// Cubic (Catmull–Rom) interpolation of a spectrum in log-magnitude and
/// unwrapped phase, so linear phase ramps and exponential attenuation are
/// reproduced without ripple. Outside the grid the edge value is held.
#[derive(Clone, Debug)]
pub struct SpectrumInterpolator {
    start: f64,
    step: f64,
    polar: bool,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl SpectrumInterpolator {
    fn new(s: &ComplexSpectrum) -> Self {
        let polar = s.values.iter().all(|v| v.norm() > 0.0);
        let (a, b) = if polar {
            let logmag = s.values.iter().map(|v| v.norm().ln()).collect();
            let mut phase = Vec::with_capacity(s.len());
            let mut last = 0.0;
            for (i, v) in s.values.iter().enumerate() {
                let mut p = v.arg();
                if i > 0 {
                    p += TAU * ((last - p) / TAU).round();
                }
                phase.push(p);
                last = p;
            }
            (logmag, phase)
        } else {
            (s.values.iter().map(|v| v.re).collect(), s.values.iter().map(|v| v.im).collect())
        };
        Self {
            start: s.min_detuning(),
            step: s.spacing(),
            polar,
            a,
            b,
        }
    }

    pub fn covers(&self, detuning: f64) -> bool {
        let end = self.start + self.step * (self.a.len() - 1) as f64;
        detuning >= self.start - 1e-9 * self.step && detuning <= end + 1e-9 * self.step
    }

    pub fn eval(&self, detuning: f64) -> Complex64 {
        let n = self.a.len();
        let u = ((detuning - self.start) / self.step).clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n - 2);
        let t = u - i as f64;
        let a = catmull_rom(&self.a, i, t);
        let b = catmull_rom(&self.b, i, t);
        if self.polar {
            Complex64::from_polar(a.exp(), b)
        } else {
            Complex64::new(a, b)
        }
    }
}

fn catmull_rom(y: &[f64], i: usize, t: f64) -> f64 {
    let n = y.len();
    let p1 = y[i];
    let p2 = y[i + 1];
    let p0 = if i > 0 { y[i - 1] } else { 2.0 * p1 - p2 };
    let p3 = if i + 2 < n { y[i + 2] } else { 2.0 * p2 - p1 };
    0.5 * (2.0 * p1
        + (p2 - p0) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
        + (3.0 * (p1 - p2) + p3 - p0) * t * t * t)
}

/// Field transfer for optical depth `optical_depth` and averaged response `chi`:
/// H = exp[−(αL/2)·Im χ + i·(αL/2)·Re χ].
pub fn transfer_from_chi(optical_depth: f64, chi: Complex64) -> Complex64 {
    (Complex64::new(0.0, 0.5 * optical_depth) * chi).exp()
}

/// Linear field transfer function of the medium on a symmetric detuning grid.
pub fn transfer_function(model: &MediumModel, grid: &[f64]) -> Result<ComplexSpectrum> {
    check_uniform(grid)?;
    let n = grid.len();
    let span = grid[n - 1] - grid[0];
    if (grid[0] + grid[n - 1]).abs() > UNIFORMITY * span {
        return Err(Error::invalid("grid", "detuning grid must be symmetric about zero"));
    }
    let fwhm = nominal_eit_fwhm(model);
    if span < 10.0 * fwhm {
        return Err(Error::Resolution(format!(
            "grid spans {span:.4e} Hz, need at least 10x the EIT FWHM ({:.4e} Hz)",
            10.0 * fwhm
        )));
    }
    let inside = grid.iter().filter(|d| d.abs() <= 0.5 * fwhm).count();
    if inside < 16 {
        return Err(Error::Resolution(format!(
            "only {inside} grid points inside the EIT FWHM of {fwhm:.4e} Hz, need 16"
        )));
    }
    let sus = Susceptibility::new(model)?;
    let chi = sus.averaged_many(grid)?;
    let values = chi
        .into_iter()
        .map(|c| transfer_from_chi(model.background_optical_depth, c))
        .collect();
    ComplexSpectrum::new(grid.to_vec(), values)
}

/// Group delay d(arg H)/dω at zero detuning from central differences with
/// steps `step` and `step/2`, Richardson-extrapolated.
pub fn group_delay_of<F>(transfer: F, step: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<Complex64>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Numerical(format!("derivative step must be > 0, got {step}")));
    }
    let slope = |h: f64| -> Result<f64> {
        let ratio = transfer(h)? * transfer(-h)?.conj();
        Ok(ratio.arg() / (2.0 * TAU * h))
    };
    let coarse = slope(step)?;
    let fine = slope(0.5 * step)?;
    let tau = (4.0 * fine - coarse) / 3.0;
    if tau.is_finite() {
        Ok(tau)
    } else {
        Err(Error::Numerical("non-finite group delay".into()))
    }
}

/// Derivative step used for the model group delay: EIT FWHM / 100.
pub fn delay_step(model: &MediumModel) -> f64 {
    nominal_eit_fwhm(model) / 100.0
}

/// Coupling-induced group delay (s): phase slope at δ = 0 of the transfer
/// with the coupling on relative to the same medium with it off, which is
/// what a with/without-coupling modulation-phase comparison measures.
pub fn group_delay_at_center(model: &MediumModel) -> Result<f64> {
    let on = Susceptibility::new(model)?;
    let off = Susceptibility::new(&model.coupling_off())?;
    let depth = model.background_optical_depth;
    group_delay_of(
        |d| {
            let diff = on.averaged(d)? - off.averaged(d)?;
            Ok(transfer_from_chi(depth, diff))
        },
        delay_step(model),
    )
}

/// Absolute group delay of the medium transfer (coupling on), including the
/// anomalous-dispersion advance of the anti-hole background.
pub fn transfer_group_delay(model: &MediumModel) -> Result<f64> {
    let sus = Susceptibility::new(model)?;
    let depth = model.background_optical_depth;
    group_delay_of(|d| Ok(transfer_from_chi(depth, sus.averaged(d)?)), delay_step(model))
}

/// Group velocity L/τ; a vanishing delay yields the `Unbounded` sentinel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GroupVelocity {
    Finite(f64),
    Unbounded,
}

impl GroupVelocity {
    pub fn from_delay(length: f64, delay: f64) -> Self {
        if delay == 0.0 || !delay.is_finite() {
            return GroupVelocity::Unbounded;
        }
        let v = length / delay;
        if v.is_finite() {
            GroupVelocity::Finite(v)
        } else {
            GroupVelocity::Unbounded
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            GroupVelocity::Finite(v) => Some(v),
            GroupVelocity::Unbounded => None,
        }
    }

    /// Numeric value, `+inf` for the sentinel.
    pub fn value(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

pub fn group_velocity(model: &MediumModel) -> Result<GroupVelocity> {
    let tau = group_delay_at_center(model)?;
    Ok(GroupVelocity::from_delay(model.length, tau))
}

/// Discrete Hilbert transform (1/π)·P∫ f(y)/(x − y) dy of uniformly sampled
/// data, via FFT with zero padding to at least twice the length.
pub fn hilbert_transform(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(size, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        *z *= if k == 0 || k == size / 2 {
            Complex64::new(0.0, 0.0)
        } else if k < size / 2 {
            Complex64::new(0.0, -1.0)
        } else {
            Complex64::new(0.0, 1.0)
        };
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf.iter().take(n).map(|z| z.re / size as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(ComplexSpectrum::new(vec![0.0, 1.0, 2.0], vec![Complex64::new(1.0, 0.0); 2]).is_err());
        assert!(ComplexSpectrum::new(vec![0.0, 1.0, 3.0], vec![Complex64::new(1.0, 0.0); 3]).is_err());
        assert!(ComplexSpectrum::new(vec![0.0, -1.0, -2.0], vec![Complex64::new(1.0, 0.0); 3]).is_err());
        assert!(ComplexSpectrum::new(vec![-1.0, 0.0, 1.0], vec![Complex64::new(1.0, 0.0); 3]).is_ok());
        let g = symmetric_grid(320e3, 641).unwrap();
        assert_eq!(g.len(), 641);
        assert_eq!(g[320], 0.0);
        assert!((g[0] + 320e3).abs() < 1e-9 && (g[640] - 320e3).abs() < 1e-9);
        assert!(symmetric_grid(1.0, 4).is_err());
    }

    #[test]
    fn empty_medium_is_transparent() {
        let mut m = MediumModel::default();
        m.background_optical_depth = 0.0;
        let h = transfer_function(&m, &symmetric_grid(500e3, 1001).unwrap()).unwrap();
        assert!(h.values().iter().all(|v| *v == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn coupling_off_center_transmission() {
        let m = MediumModel::default().coupling_off();
        let h = transfer_function(&m, &symmetric_grid(500e3, 1001).unwrap()).unwrap();
        let t = h.values()[500].norm_sqr();
        assert!((t - 0.100).abs() <= 0.001, "{t}");
    }

    #[test]
    fn coarse_or_narrow_grids_are_rejected() {
        let m = MediumModel::default();
        assert!(matches!(
            transfer_function(&m, &symmetric_grid(500e3, 21).unwrap()),
            Err(Error::Resolution(_))
        ));
        assert!(matches!(
            transfer_function(&m, &symmetric_grid(100e3, 2001).unwrap()),
            Err(Error::Resolution(_))
        ));
        let shifted: Vec<f64> = symmetric_grid(320e3, 641).unwrap().iter().map(|d| d + 1e3).collect();
        assert!(transfer_function(&m, &shifted).is_err());
    }

    #[test]
    fn transfer_is_passive_with_odd_phase() {
        let m = MediumModel::default();
        let h = transfer_function(&m, &symmetric_grid(500e3, 1001).unwrap()).unwrap();
        let v = h.values();
        for i in 0..v.len() {
            assert!(v[i].norm() <= 1.0 + 1e-12);
            let j = v.len() - 1 - i;
            assert!((v[i].arg() + v[j].arg()).abs() < 1e-6);
        }
    }

    #[test]
    fn pure_delay_slope() {
        let tau0 = 10e-6;
        let tau = group_delay_of(|d| Ok(Complex64::from_polar(1.0, TAU * d * tau0)), 1e3).unwrap();
        assert!((tau - tau0).abs() < 1e-9, "{tau}");
    }

    #[test]
    fn delay_vanishes_without_coupling() {
        let m = MediumModel::default().coupling_off();
        assert_eq!(group_delay_at_center(&m).unwrap(), 0.0);
        assert_eq!(group_velocity(&m).unwrap(), GroupVelocity::Unbounded);
    }

    #[test]
    fn coupling_delays_the_probe() {
        let m = MediumModel::default();
        let tau = group_delay_at_center(&m).unwrap();
        assert!(tau > 0.0);
        // the anti-hole alone advances the envelope
        let advance = transfer_group_delay(&m.coupling_off()).unwrap();
        assert!(advance < 0.0);
        let absolute = transfer_group_delay(&m).unwrap();
        assert!((absolute - advance - tau).abs() < 1e-3 * tau);
    }

    #[test]
    fn velocity_identity() {
        let v = GroupVelocity::from_delay(3e-3, 66e-6);
        assert!((v.value() - 45.4545).abs() < 1e-3);
        let v = GroupVelocity::from_delay(3e-3, 39.6e-6);
        assert!((v.value() - 75.7576).abs() < 1e-3);
        assert_eq!(GroupVelocity::from_delay(3e-3, 0.0), GroupVelocity::Unbounded);
        assert_eq!(GroupVelocity::from_delay(3e-3, 0.0).value(), f64::INFINITY);
    }

    #[test]
    fn interpolation_reproduces_linear_phase_and_holds_edges() {
        let grid = symmetric_grid(100e3, 201).unwrap();
        let tau0 = 20e-6;
        let s = ComplexSpectrum::from_fn(grid, |d| Complex64::from_polar((-1e-5f64 * d).exp(), TAU * d * tau0)).unwrap();
        let it = s.interpolator();
        for d in [-99_999.5, -1234.567, 0.0, 333.3, 77_777.7] {
            let exact = Complex64::from_polar((-1e-5f64 * d).exp(), TAU * d * tau0);
            assert!((it.eval(d) - exact).norm() < 1e-12, "{d}");
        }
        assert_eq!(it.eval(5e5), it.eval(100e3));
        assert!(!it.covers(1.5e5) && it.covers(1e5));
    }

    #[test]
    fn hilbert_of_lorentzian() {
        // H[g²/(g²+x²)] = g·x/(g²+x²)
        let g = 1.0;
        let n = 1 << 14;
        let dx = 0.01;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 - (n / 2) as f64) * dx).collect();
        let f: Vec<f64> = xs.iter().map(|x| g * g / (g * g + x * x)).collect();
        let h = hilbert_transform(&f);
        for i in (n / 2 - 200..n / 2 + 200).step_by(37) {
            let exact = g * xs[i] / (g * g + xs[i] * xs[i]);
            assert!((h[i] - exact).abs() < 2e-3, "{} {} {}", xs[i], h[i], exact);
        }
    }
}
