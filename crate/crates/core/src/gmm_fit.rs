//! Fitting a single Gaussian to a Gaussian mixture by minimizing `D_alpha`.
//!
//! The objective is cheap and multimodal in `(mu, sigma)`, so the fit is an
//! exhaustive grid scan followed by Nelder–Mead refinement from the best grid
//! cell. The refinement runs in `(mu, ln sigma)` with `sigma >= SIGMA_FLOOR`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{d_alpha_unchecked, d_alpha_continuous, GaussianMixtureSpec, GaussianParams, QuadratureConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::NelderMead;

/// Hard lower bound on the fitted scale.
pub const SIGMA_FLOOR: f64 = 1e-3;

/// Values of the heatmap are capped here.
pub const HEATMAP_CAP: f64 = 3.0;

/// An evenly spaced axis of `count` points from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub log_spaced: bool,
}

impl Axis {
    pub fn linear(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count, log_spaced: false }
    }

    pub fn log(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count, log_spaced: true }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        if self.count < 2 {
            return Err(Error::invalid(name, format!("count must be at least 2, got {}", self.count)));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(Error::invalid(name, format!("need min < max, got [{}, {}]", self.min, self.max)));
        }
        if self.log_spaced && self.min <= 0.0 {
            return Err(Error::invalid(name, "log-spaced axis needs a positive minimum"));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    return self.max;
                }
                let t = i as f64 / last;
                if self.log_spaced {
                    (self.min.ln() + t * (self.max.ln() - self.min.ln())).exp()
                } else {
                    self.min + t * (self.max - self.min)
                }
            })
            .collect()
    }

    /// Spacing between the first two points, in the axis' own (log or linear) units.
    fn step(&self) -> f64 {
        if self.log_spaced {
            (self.max.ln() - self.min.ln()) / (self.count - 1) as f64
        } else {
            (self.max - self.min) / (self.count - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub alpha: f64,
    pub mu_grid: Axis,
    pub sigma_grid: Axis,
    pub refine_iters: usize,
    pub refine_tol: f64,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
}

impl FitConfig {
    /// Default search box for `spec`: `mu` over the component means padded by
    /// three of the widest standard deviations (200 points), `sigma`
    /// log-spaced over `[0.05, 3 * widest std]` (100 points).
    pub fn for_spec(spec: &GaussianMixtureSpec, alpha: f64) -> Self {
        let (lo, hi) = spec.mean_range();
        let s = spec.max_sigma();
        Self {
            alpha,
            mu_grid: Axis::linear(lo - 3.0 * s, hi + 3.0 * s, 200),
            sigma_grid: Axis::log(0.05, 3.0 * s, 100),
            refine_iters: 500,
            refine_tol: 1e-8,
            quadrature: QuadratureConfig::default(),
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", format!("must lie in [0, 2], got {}", self.alpha)));
        }
        self.mu_grid.validate("mu_grid")?;
        self.sigma_grid.validate("sigma_grid")?;
        if self.sigma_grid.min < SIGMA_FLOOR {
            return Err(Error::invalid(
                "sigma_grid",
                format!("minimum must be at least {SIGMA_FLOOR}, got {}", self.sigma_grid.min),
            ));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::invalid("refine_tol", "must be positive"));
        }
        self.quadrature.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub alpha: f64,
    pub g_hat: GaussianParams,
    pub d_alpha_value: f64,
    pub grid_best: GaussianParams,
    pub grid_value: f64,
    pub iterations: usize,
    /// False when refinement ran out of iterations, ran into the sigma floor,
    /// or the final quadrature check failed.
    pub converged: bool,
}

/// Evaluates `D_alpha` on every `(mu, sigma)` of the grid; rows index sigma.
pub fn dalpha_grid(spec: &GaussianMixtureSpec, alpha: f64, mus: &[f64], sigmas: &[f64], q: &QuadratureConfig) -> Matrix {
    let cells: Vec<f64> = (0..sigmas.len() * mus.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / mus.len(), k % mus.len());
            // Grid points are validated positive; the constructor cannot fail.
            let g = GaussianParams::new(mus[j], sigmas[i]).expect("grid point");
            d_alpha_unchecked(&g, spec, alpha, q)
        })
        .collect();
    Matrix::from_fn(sigmas.len(), mus.len(), |i, j| cells[i * mus.len() + j])
}

/// Grid minimizer with ties broken by smaller sigma, then smaller mu.
fn grid_argmin(values: &Matrix, mus: &[f64], sigmas: &[f64]) -> (usize, usize) {
    let mut best = (0, 0);
    for i in 0..sigmas.len() {
        for j in 0..mus.len() {
            let v = values.get(i, j);
            let b = values.get(best.0, best.1);
            let better = v < b
                || (v == b && (sigmas[i] < sigmas[best.0] || (sigmas[i] == sigmas[best.0] && mus[j] < mus[best.1])));
            if better || b.is_nan() {
                best = (i, j);
            }
        }
    }
    best
}

pub fn fit_gaussian_dalpha(spec: &GaussianMixtureSpec, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let mus = cfg.mu_grid.points();
    let sigmas = cfg.sigma_grid.points();
    let values = dalpha_grid(spec, cfg.alpha, &mus, &sigmas, &cfg.quadrature);
    let (bi, bj) = grid_argmin(&values, &mus, &sigmas);
    let grid_best = GaussianParams::new(mus[bj], sigmas[bi])?;
    let grid_value = values.get(bi, bj);

    let objective = |x: &[f64]| {
        let sigma = x[1].exp();
        if !(sigma >= SIGMA_FLOOR) || !x[0].is_finite() {
            return f64::INFINITY;
        }
        match GaussianParams::new(x[0], sigma) {
            Ok(g) => d_alpha_unchecked(&g, spec, cfg.alpha, &cfg.quadrature),
            Err(_) => f64::INFINITY,
        }
    };
    let mu_step = cfg.mu_grid.step();
    let log_sigma_step = if cfg.sigma_grid.log_spaced {
        cfg.sigma_grid.step()
    } else {
        cfg.sigma_grid.step() / grid_best.sigma()
    };
    let nm = NelderMead {
        max_iters: cfg.refine_iters,
        diameter_tol: cfg.refine_tol,
        ..NelderMead::default()
    };
    let min = nm.minimize(objective, &[grid_best.mu(), grid_best.sigma().ln()], &[mu_step, log_sigma_step]);

    let (g_hat, value) = if min.value <= grid_value {
        (GaussianParams::new(min.x[0], min.x[1].exp())?, min.value)
    } else {
        (grid_best, grid_value)
    };
    let at_floor = g_hat.sigma() <= SIGMA_FLOOR * 1.01;
    let quadrature_ok = d_alpha_continuous(&g_hat, spec, cfg.alpha, cfg.quadrature).is_ok();
    Ok(FitResult {
        alpha: cfg.alpha,
        g_hat,
        d_alpha_value: value,
        grid_best,
        grid_value,
        iterations: min.iterations,
        converged: min.converged && !at_floor && quadrature_ok,
    })
}

/// One fit per alpha with the same grid and refinement policy. Errors are
/// reported per alpha; the sweep always runs to the end.
pub fn alpha_sweep_fit(spec: &GaussianMixtureSpec, alphas: &[f64], cfg: &FitConfig) -> Result<Vec<Result<FitResult>>> {
    if alphas.is_empty() {
        return Err(Error::Empty("alpha sweep has no alphas"));
    }
    Ok(alphas
        .iter()
        .map(|&a| fit_gaussian_dalpha(spec, &cfg.with_alpha(a)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapSpec {
    pub mu_range: Axis,
    pub sigma_range: Axis,
}

impl HeatmapSpec {
    /// 200 x 200 over the default fit search box, sigma linear.
    pub fn covering(spec: &GaussianMixtureSpec) -> Self {
        let cfg = FitConfig::for_spec(spec, 1.0);
        Self {
            mu_range: Axis::linear(cfg.mu_grid.min, cfg.mu_grid.max, 200),
            sigma_range: Axis::linear(cfg.sigma_grid.min, cfg.sigma_grid.max, 200),
        }
    }
}

/// `min(3, ln D_alpha(cell) - ln D_alpha(fit))` over a `(mu, sigma)` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub mu_axis: Vec<f64>,
    pub sigma_axis: Vec<f64>,
    /// Rows index sigma, columns index mu.
    pub values: Matrix,
    pub star: GaussianParams,
}

impl Heatmap {
    /// Grid indices (sigma row, mu column) of the smallest value.
    pub fn argmin(&self) -> (usize, usize) {
        grid_argmin(&self.values, &self.mu_axis, &self.sigma_axis)
    }

    /// Grid indices of the cell nearest to the star.
    pub fn star_cell(&self) -> (usize, usize) {
        (nearest(&self.sigma_axis, self.star.sigma()), nearest(&self.mu_axis, self.star.mu()))
    }
}

fn nearest(axis: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, v) in axis.iter().enumerate() {
        if (v - x).abs() < (axis[best] - x).abs() {
            best = i;
        }
    }
    best
}

/// Capped log-ratio of `D_alpha` against the fitted optimum at one point.
pub fn heatmap_value(d_cell: f64, d_fit: f64) -> f64 {
    (d_cell.ln() - d_fit.ln()).min(HEATMAP_CAP)
}

pub fn dalpha_heatmap(spec: &GaussianMixtureSpec, alpha: f64, hs: &HeatmapSpec, fit: &FitResult, q: &QuadratureConfig) -> Result<Heatmap> {
    hs.mu_range.validate("mu_range")?;
    hs.sigma_range.validate("sigma_range")?;
    if hs.sigma_range.min <= 0.0 {
        return Err(Error::invalid("sigma_range", "minimum must be positive"));
    }
    if fit.d_alpha_value <= 0.0 {
        return Err(Error::NonPositiveDAlpha {
            mu: fit.g_hat.mu(),
            sigma: fit.g_hat.sigma(),
            value: fit.d_alpha_value,
        });
    }
    let mu_axis = hs.mu_range.points();
    let sigma_axis = hs.sigma_range.points();
    let raw = dalpha_grid(spec, alpha, &mu_axis, &sigma_axis, q);
    let mut values = Matrix::zeros(sigma_axis.len(), mu_axis.len());
    for (i, &sigma) in sigma_axis.iter().enumerate() {
        for (j, &mu) in mu_axis.iter().enumerate() {
            let d = raw.get(i, j);
            if !(d > 0.0) {
                return Err(Error::NonPositiveDAlpha { mu, sigma, value: d });
            }
            values.set(i, j, heatmap_value(d, fit.d_alpha_value));
        }
    }
    Ok(Heatmap {
        mu_axis,
        sigma_axis,
        values,
        star: fit.g_hat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedMixture {
    pub name: String,
    pub spec: GaussianMixtureSpec,
}

/// The standard target mixtures: equal weights, first mean at 0 and
/// subsequent means spaced by the gap.
///
/// | components | stds               | gaps    |
/// |------------|--------------------|---------|
/// | 2          | 1, 0.8             | 4, 5, 6 |
/// | 3          | 1, 0.8, 0.5        | 3, 5, 7 |
/// | 4          | 1, 0.8, 0.5, 0.3   | 3, 5, 7 |
pub fn standard_configs() -> Vec<NamedMixture> {
    let families: [(&[f64], &[f64]); 3] = [
        (&[1.0, 0.8], &[4.0, 5.0, 6.0]),
        (&[1.0, 0.8, 0.5], &[3.0, 5.0, 7.0]),
        (&[1.0, 0.8, 0.5, 0.3], &[3.0, 5.0, 7.0]),
    ];
    let mut out = Vec::new();
    for (stds, gaps) in families {
        for &gap in gaps {
            let params: Vec<(f64, f64)> = stds.iter().enumerate().map(|(i, &s)| (i as f64 * gap, s)).collect();
            out.push(NamedMixture {
                name: format!("{}comp-gap{}", stds.len(), gap),
                spec: GaussianMixtureSpec::equal_weights(&params).expect("standard mixtures are valid"),
            });
        }
    }
    out
}

/// Looks up one of [`standard_configs`] by name, e.g. `"2comp-gap4"`.
pub fn standard_config(name: &str) -> Option<GaussianMixtureSpec> {
    standard_configs().into_iter().find(|m| m.name == name).map(|m| m.spec)
}
