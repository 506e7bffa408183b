//! Gauss-Legendre / Gauss-Hermite nodes and composite adaptive integration.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Points per Gauss-Legendre panel.
pub const PANEL_ORDER: usize = 64;
/// Target relative change between successive refinements.
pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 1e-9;
/// Maximum number of panel doublings.
pub const DEFAULT_MAX_REFINEMENTS: u32 = 6;
/// Changes below this are treated as converged regardless of magnitude.
const ABSOLUTE_FLOOR: f64 = 1e-13;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "rule order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Nodes and weights of the `n`-point Gauss-Hermite rule for weight `exp(-x^2)`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "rule order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n.div_ceil(2) {
        // Initial guesses from Numerical Recipes' gauher.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let (p, d) = hermite_normalized(n, z);
            pp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = hermite_normalized(n, z);
        if d != 0.0 {
            pp = d;
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        let w = 2.0 / (pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

// Orthonormal Hermite recurrence; avoids overflow for large n.
fn hermite_normalized(n: usize, x: f64) -> (f64, f64) {
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = x * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    let d = (2.0 * n as f64).sqrt() * p2;
    (p1, d)
}

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER))
}

/// Quadrature scheme used on each panel of a [`FrequencyGrid`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureRule {
    CompositeGaussLegendre,
    CompositeSimpson,
}

/// A fixed discretisation of a finite frequency interval.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub rule: QuadratureRule,
}

impl FrequencyGrid {
    pub fn new(min: f64, max: f64, points: usize, rule: QuadratureRule) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::invalid(format!("grid bounds [{min}, {max}] are not an increasing finite pair")));
        }
        if points < 64 {
            return Err(Error::invalid(format!("grid needs at least 64 points, got {points}")));
        }
        Ok(Self { min, max, points, rule })
    }

    /// Nodes and weights of the discretisation.
    pub fn nodes_and_weights(&self) -> (Vec<f64>, Vec<f64>) {
        match self.rule {
            QuadratureRule::CompositeGaussLegendre => {
                let panels = self.points.div_ceil(PANEL_ORDER);
                composite_gl(self.min, self.max, panels)
            }
            QuadratureRule::CompositeSimpson => {
                // Simpson needs an odd number of nodes.
                let n = if self.points % 2 == 0 { self.points + 1 } else { self.points };
                let h = (self.max - self.min) / (n - 1) as f64;
                let nodes = (0..n).map(|k| self.min + h * k as f64).collect();
                let weights = (0..n)
                    .map(|k| {
                        let c = if k == 0 || k == n - 1 {
                            1.0
                        } else if k % 2 == 1 {
                            4.0
                        } else {
                            2.0
                        };
                        c * h / 3.0
                    })
                    .collect();
                (nodes, weights)
            }
        }
    }

    pub fn integrate<F: Fn(f64) -> Complex64>(&self, f: F) -> Complex64 {
        let (x, w) = self.nodes_and_weights();
        x.iter().zip(&w).map(|(&xi, &wi)| f(xi) * wi).sum()
    }
}

fn composite_gl(a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = panel_rule();
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * gx.len());
    let mut weights = Vec::with_capacity(panels * gx.len());
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        for (x, w) in gx.iter().zip(gw) {
            nodes.push(mid + 0.5 * h * x);
            weights.push(0.5 * h * w);
        }
    }
    (nodes, weights)
}

fn composite_sum<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, panels: usize) -> Complex64 {
    let (gx, gw) = panel_rule();
    let h = (b - a) / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let mid = a + h * (p as f64 + 0.5);
        let mut s = Complex64::new(0.0, 0.0);
        for (x, w) in gx.iter().zip(gw) {
            s += f(mid + 0.5 * h * x) * *w;
        }
        acc += s * (0.5 * h);
    }
    acc
}

/// Settings for [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct AdaptiveOptions {
    pub relative_tolerance: f64,
    pub max_refinements: u32,
    pub initial_panels: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            relative_tolerance: DEFAULT_RELATIVE_TOLERANCE,
            max_refinements: DEFAULT_MAX_REFINEMENTS,
            initial_panels: 2,
        }
    }
}

/// Integrates `f` over `[a, b]` with composite 64-point Gauss-Legendre
/// panels, splitting at `breakpoints` and doubling the panel count until the
/// estimate settles.
pub fn integrate<F: Fn(f64) -> Complex64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: AdaptiveOptions,
) -> Result<Complex64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("integration bounds must be finite"));
    }
    if b <= a {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut cuts = vec![a];
    let mut inner: Vec<f64> = breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    cuts.extend(inner);
    cuts.push(b);

    let estimate = |panels: usize| -> Complex64 {
        cuts.windows(2).map(|seg| composite_sum(&f, seg[0], seg[1], panels)).sum()
    };

    let mut panels = opts.initial_panels.max(1);
    let mut prev = estimate(panels);
    let mut change = f64::INFINITY;
    for _ in 0..opts.max_refinements {
        panels *= 2;
        let next = estimate(panels);
        let diff = (next - prev).norm();
        change = diff / next.norm().max(f64::MIN_POSITIVE);
        prev = next;
        if diff <= opts.relative_tolerance * next.norm() || diff <= ABSOLUTE_FLOOR {
            return Ok(next);
        }
    }
    Err(Error::NumericConvergence { estimate: prev, relative_change: change })
}

/// Integrates over the whole real line by mapping `x = c + s tan(theta)`.
pub fn integrate_real_line<F: Fn(f64) -> Complex64>(
    f: F,
    center: f64,
    scale: f64,
    opts: AdaptiveOptions,
) -> Result<Complex64> {
    let half = 0.5 * PI;
    let g = |theta: f64| {
        let c = theta.cos();
        if c <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let x = center + scale * theta.tan();
        f(x) * (scale / (c * c))
    };
    integrate(g, -half, half, &[0.0], opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = w.iter().sum();
        assert_relative_eq!(s, 2.0, epsilon = 1e-14);
        let m18: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert_relative_eq!(m18, 2.0 / 19.0, epsilon = 1e-14);
    }

    #[test]
    fn legendre_64_weights_sum_to_two() {
        let (x, w) = gauss_legendre(64);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn hermite_rule_reproduces_gaussian_moments() {
        for n in [1usize, 2, 5, 20, 40] {
            let (x, w) = gauss_hermite(n);
            let m0: f64 = w.iter().sum();
            assert_relative_eq!(m0, PI.sqrt(), epsilon = 1e-12);
            if n >= 3 {
                let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
                assert_relative_eq!(m2, PI.sqrt() / 2.0, epsilon = 1e-12);
                let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
                assert_relative_eq!(m4, 3.0 * PI.sqrt() / 4.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn adaptive_gaussian() {
        let v = integrate(
            |x| Complex64::new((-x * x).exp(), 0.0),
            -12.0,
            12.0,
            &[],
            AdaptiveOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(v.re, PI.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn kink_is_handled_with_breakpoint() {
        let f = |x: f64| Complex64::new((-(x - 0.3).abs()).exp(), 0.0);
        let v = integrate(f, -40.0, 40.0, &[0.3], AdaptiveOptions::default()).unwrap();
        assert_relative_eq!(v.re, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn real_line_lorentzian() {
        let v = integrate_real_line(
            |x| Complex64::new(1.0 / (1.0 + x * x), 0.0),
            0.0,
            1.0,
            AdaptiveOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(v.re, PI, epsilon = 1e-12);
    }

    #[test]
    fn grids_agree() {
        let f = |x: f64| Complex64::new(x.cos() * (-x * x / 4.0).exp(), 0.0);
        let exact = 2.0 * PI.sqrt() * (-1.0f64).exp();
        let gl = FrequencyGrid::new(-20.0, 20.0, 256, QuadratureRule::CompositeGaussLegendre).unwrap();
        let si = FrequencyGrid::new(-20.0, 20.0, 2001, QuadratureRule::CompositeSimpson).unwrap();
        assert_relative_eq!(gl.integrate(f).re, exact, epsilon = 1e-12);
        assert_relative_eq!(si.integrate(f).re, exact, epsilon = 1e-9);
    }

    #[test]
    fn grid_rejects_small_point_count() {
        assert!(FrequencyGrid::new(0.0, 1.0, 10, QuadratureRule::CompositeSimpson).is_err());
    }

    #[test]
    fn nonconvergence_is_reported() {
        let opts = AdaptiveOptions { max_refinements: 1, initial_panels: 1, ..Default::default() };
        let r = integrate(|x| Complex64::new((200.0 * x).sin().abs(), 0.0), 0.0, 100.0, &[], opts);
        assert!(matches!(r, Err(Error::NumericConvergence { .. })));
    }
}
