//! Quadrature for expectations under a Gaussian: a fixed Gauss–Hermite rule
//! and an adaptive Gauss–Kronrod scheme.
//!
//! Gauss–Hermite nodes start from the Golub–Welsch eigenvalues and are polished by Newton
//! iteration on the orthonormal Hermite recurrence; weights come from the
//! recurrence derivative.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::distributions::GaussianParams;

/// An `n`-point Gauss–Hermite rule for `∫ e^{-x²} f(x) dx`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let pim4 = PI.powf(-0.25);
        // Golub–Welsch eigenvalues as starting points, polished by Newton.
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        guesses.sort_by(|a, b| b.total_cmp(a));

        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for mut z in guesses {
            for _ in 0..8 {
                let (p, d) = hermite_orthonormal(n, z, pim4);
                let step = p / d;
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = hermite_orthonormal(n, z, pim4);
            nodes.push(z);
            weights.push(2.0 / (d * d));
        }
        // Exact symmetry.
        for i in 0..n / 2 {
            let z = 0.5 * (nodes[i] - nodes[n - 1 - i]);
            let w = 0.5 * (weights[i] + weights[n - 1 - i]);
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared, lazily built rule for `n` nodes.
    pub fn cached(n: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(GaussHermite::new(n)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ e^{-x²} f(x) dx`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// `E[f(X)]` for `X ~ N(g.mu, g.sigma²)`.
    pub fn expectation(&self, g: &GaussianParams, f: impl Fn(f64) -> f64) -> f64 {
        let scale = std::f64::consts::SQRT_2 * g.sigma();
        self.integrate(|t| f(g.mu() + scale * t)) / PI.sqrt()
    }
}

/// Adaptive Gauss–Kronrod (7/15-point) integration of `E[f(X)]` for
/// `X ~ N(mu, sigma²)`, on the standardized variable `t = (x - mu) / sigma`
/// truncated to `|t| <= TAIL` (neglected mass below 1e-22).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveKronrod {
    pub abs_tol: f64,
    pub max_panels: usize,
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub panels: usize,
}

const TAIL: f64 = 10.0;
const INITIAL_PANELS: usize = 8;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod_panel(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

impl AdaptiveKronrod {
    pub fn new(abs_tol: f64, max_panels: usize) -> Self {
        Self { abs_tol, max_panels }
    }

    /// Integrates `f` over `[a, b]`, bisecting the panel with the largest
    /// error estimate until the summed estimate drops below `abs_tol`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> Integral {
        let width = (b - a) / INITIAL_PANELS as f64;
        let mut panels: Vec<(f64, f64, f64, f64)> = (0..INITIAL_PANELS)
            .map(|i| {
                let lo = a + i as f64 * width;
                let hi = if i + 1 == INITIAL_PANELS { b } else { lo + width };
                let (v, e) = kronrod_panel(&f, lo, hi);
                (lo, hi, v, e)
            })
            .collect();
        loop {
            let err: f64 = panels.iter().map(|p| p.3).sum();
            if err <= self.abs_tol || panels.len() >= self.max_panels {
                break;
            }
            let (worst, _) = panels
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, be), (i, p)| if p.3 > be { (i, p.3) } else { (bi, be) });
            let (lo, hi, _, _) = panels[worst];
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let (vl, el) = kronrod_panel(&f, lo, mid);
            let (vr, er) = kronrod_panel(&f, mid, hi);
            panels[worst] = (lo, mid, vl, el);
            panels.push((mid, hi, vr, er));
        }
        // Sum in position order so the result does not depend on refinement order.
        panels.sort_by(|x, y| x.0.total_cmp(&y.0));
        Integral {
            value: panels.iter().map(|p| p.2).sum(),
            error_estimate: panels.iter().map(|p| p.3).sum(),
            panels: panels.len(),
        }
    }

    /// `E[f(X)]` for `X ~ N(g.mu, g.sigma²)`.
    pub fn expectation(&self, g: &GaussianParams, f: impl Fn(f64) -> f64) -> Integral {
        let norm = 1.0 / (2.0 * PI).sqrt();
        self.integrate(
            |t| norm * (-0.5 * t * t).exp() * f(g.mu() + g.sigma() * t),
            -TAIL,
            TAIL,
        )
    }
}

/// Returns (p_n(z), p_n'(z)) for the orthonormal Hermite polynomials.
fn hermite_orthonormal(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_sqrt_pi() {
        for n in [8, 20, 64, 128, 256] {
            let q = GaussHermite::new(n);
            let s: f64 = q.weights().iter().sum();
            assert!((s - PI.sqrt()).abs() < 1e-12, "n={n}: {s}");
        }
    }

    #[test]
    fn integrates_even_moments_exactly() {
        // ∫ e^{-x²} x^{2k} dx = Γ(k + 1/2)
        let q = GaussHermite::new(32);
        let gamma_half = [PI.sqrt(), PI.sqrt() / 2.0, 3.0 * PI.sqrt() / 4.0, 15.0 * PI.sqrt() / 8.0];
        for (k, want) in gamma_half.iter().enumerate() {
            let got = q.integrate(|x| x.powi(2 * k as i32));
            assert!((got - want).abs() < 1e-12, "k={k}");
        }
        assert!(q.integrate(|x| x.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn kronrod_integrates_smooth_functions() {
        let q = AdaptiveKronrod::new(1e-13, 500);
        let r = q.integrate(f64::sin, 0.0, PI);
        assert!((r.value - 2.0).abs() < 1e-13);
        let g = GaussianParams::new(0.5, 2.0).unwrap();
        let m2 = q.expectation(&g, |x| x * x);
        assert!((m2.value - 4.25).abs() < 1e-12);
    }

    #[test]
    fn kronrod_refines_near_a_kink() {
        let q = AdaptiveKronrod::new(1e-12, 2000);
        let r = q.integrate(|x: f64| (x - 0.3).abs(), -1.0, 1.0);
        assert!((r.value - 1.09).abs() < 1e-11);
        assert!(r.panels > INITIAL_PANELS);
    }

    #[test]
    fn nodes_are_sorted_and_symmetric() {
        let q = GaussHermite::new(17);
        for w in q.nodes().windows(2) {
            assert!(w[0] > w[1]);
        }
        for i in 0..17 {
            assert!((q.nodes()[i] + q.nodes()[16 - i]).abs() < 1e-13);
        }
    }

    #[test]
    fn gaussian_expectation_of_cosine() {
        // E[cos X] for X ~ N(0, 1) is e^{-1/2}
        let q = GaussHermite::new(40);
        let g = GaussianParams::new(0.0, 1.0).unwrap();
        let got = q.expectation(&g, f64::cos);
        assert!((got - (-0.5f64).exp()).abs() < 1e-14);
    }
}
