//! Gauss–Legendre quadrature on pole-graded composite panels, and the
//! inhomogeneous frequency distributions averaged with it.
//!
//! The integrands met here are rational in the offset variable with a single
//! pole a short distance off the real axis (the homogeneous linewidth),
//! while the averaging window is set by the much wider inhomogeneous
//! distribution. A fixed rule over the whole window cannot resolve that, so
//! the window is split at `re ± dist·2^k` around the pole's real part and the
//! rule is applied on every panel. Each panel then sees the pole at a
//! distance comparable to its own length, which keeps the rule
//! exponentially convergent regardless of the width ratio.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Half-width of the averaging window, in units of the distribution FWHM.
pub const WINDOW_FWHM: f64 = 5.0;

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3; // 2·sqrt(2 ln 2)

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() <= 1e-15 {
                    dp = legendre_with_derivative(n, z).1;
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
    }
    let dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
    (p1, dp)
}

/// Location of the dominant integrand singularity: real part and distance
/// from the real axis, both in the integration variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pole {
    pub re: f64,
    pub dist: f64,
}

impl Pole {
    pub fn from_complex(z: Complex64) -> Self {
        Self {
            re: z.re,
            dist: z.im.abs(),
        }
    }
}

/// Number of equal panels the window is always split into.
pub const BASE_PANELS: usize = 10;

/// Panel breakpoints on `[lo, hi]`: `BASE_PANELS` equal panels, refined
/// geometrically towards `pole`.
pub fn graded_breakpoints(lo: f64, hi: f64, pole: Option<Pole>) -> Vec<f64> {
    let span = hi - lo;
    let mut points: Vec<f64> = (0..=BASE_PANELS)
        .map(|i| lo + span * i as f64 / BASE_PANELS as f64)
        .collect();
    points[BASE_PANELS] = hi;
    if let Some(pole) = pole.filter(|p| p.re.is_finite() && p.dist.is_finite()) {
        let mut step = pole.dist.max(span * 1e-12);
        if pole.re > lo && pole.re < hi {
            points.push(pole.re);
        }
        while step < 2.0 * span {
            for x in [pole.re - step, pole.re + step] {
                if x > lo && x < hi {
                    points.push(x);
                }
            }
            step *= 2.0;
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup_by(|a, b| (*a - *b).abs() <= span * 1e-14);
    points
}

/// Composite integral of `density(x)·f(x)` over `[lo, hi]`.
///
/// Returns the weighted integral together with the integral of the density
/// alone on the same nodes, so callers can normalise to unit weight.
pub fn integrate_weighted<D, F>(
    rule: &GaussLegendre,
    lo: f64,
    hi: f64,
    pole: Option<Pole>,
    density: D,
    f: F,
) -> (Complex64, f64)
where
    D: Fn(f64) -> f64,
    F: Fn(f64) -> Complex64,
{
    let breaks = graded_breakpoints(lo, hi, pole);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut mass = 0.0;
    for panel in breaks.windows(2) {
        for (x, w) in rule.mapped(panel[0], panel[1]) {
            let wp = w * density(x);
            mass += wp;
            acc += f(x) * wp;
        }
    }
    (acc, mass)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineShape {
    Lorentzian,
    Gaussian,
}

/// A centred inhomogeneous distribution of transition offsets (Hz).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Distribution {
    pub shape: LineShape,
    pub fwhm: f64,
}

impl Distribution {
    pub fn new(shape: LineShape, fwhm: f64) -> Self {
        Self { shape, fwhm }
    }

    pub fn hwhm(&self) -> f64 {
        0.5 * self.fwhm
    }

    pub fn sigma(&self) -> f64 {
        self.fwhm / FWHM_PER_SIGMA
    }

    /// Probability density at offset `x` (Hz⁻¹).
    pub fn density(&self, x: f64) -> f64 {
        match self.shape {
            LineShape::Lorentzian => {
                let g = self.hwhm();
                g / (PI * (x * x + g * g))
            }
            LineShape::Gaussian => {
                let s = self.sigma();
                (-0.5 * (x / s).powi(2)).exp() / (s * (2.0 * PI).sqrt())
            }
        }
    }

    /// Default averaging window, ±`WINDOW_FWHM`·FWHM.
    pub fn window(&self) -> (f64, f64) {
        (-WINDOW_FWHM * self.fwhm, WINDOW_FWHM * self.fwhm)
    }

    /// Mass of the density captured by the composite rule on the default window.
    pub fn captured_mass(&self, rule: &GaussLegendre, pole: Option<Pole>) -> f64 {
        let (lo, hi) = self.window();
        integrate_weighted(rule, lo, hi, pole, |x| self.density(x), |_| Complex64::new(1.0, 0.0)).1
    }

    /// Numerical average of `f` over the distribution on `window`,
    /// renormalised to unit total weight on the quadrature nodes.
    pub fn average_on<F>(&self, rule: &GaussLegendre, window: (f64, f64), pole: Option<Pole>, f: F) -> Complex64
    where
        F: Fn(f64) -> Complex64,
    {
        let (acc, mass) = integrate_weighted(rule, window.0, window.1, pole, |x| self.density(x), f);
        acc / mass
    }

    pub fn average<F>(&self, rule: &GaussLegendre, pole: Option<Pole>, f: F) -> Complex64
    where
        F: Fn(f64) -> Complex64,
    {
        self.average_on(rule, self.window(), pole, f)
    }
}
