//! Gaussians, Gaussian mixtures and categorical distributions, together with
//! the entropy / cross-entropy / KL / D_alpha functionals over them.
//!
//! `D_alpha(p || q) = -alpha * H(p) + H(p, q)`. At `alpha = 1` this is the
//! reverse KL divergence; for any other `alpha` it is not a divergence, since
//! `D_alpha(p || p) = (1 - alpha) * H(p)`.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{AdaptiveKronrod, GaussHermite};

/// Tolerance on the normalization of probability vectors and mixture weights.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Largest admissible change when the quadrature node count is doubled.
pub const QUADRATURE_TOL: f64 = 1e-8;

/// A univariate Gaussian with location `mu` and scale `sigma > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    mu: f64,
    sigma: f64,
}

impl GaussianParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::invalid("mu", format!("must be finite, got {mu}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
        }
        Ok(Self { mu, sigma })
    }

    #[inline]
    pub fn mu(&self) -> f64 {
        self.mu
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        -0.5 * z * z - self.sigma.ln() - 0.5 * (2.0 * PI).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// A finite Gaussian mixture with positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<MixtureComponent>", into = "Vec<MixtureComponent>")]
pub struct GaussianMixtureSpec {
    components: Vec<MixtureComponent>,
}

impl GaussianMixtureSpec {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture has no components"));
        }
        for c in &components {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::invalid("weight", format!("must be positive, got {}", c.weight)));
            }
            GaussianParams::new(c.mu, c.sigma)?;
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid("weight", format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { components })
    }

    /// Mixture of equally weighted components.
    pub fn equal_weights(params: &[(f64, f64)]) -> Result<Self> {
        let w = 1.0 / params.len().max(1) as f64;
        Self::new(
            params
                .iter()
                .map(|&(mu, sigma)| MixtureComponent { weight: w, mu, sigma })
                .collect(),
        )
    }

    /// A one-component "mixture".
    pub fn single(g: GaussianParams) -> Self {
        Self {
            components: vec![MixtureComponent {
                weight: 1.0,
                mu: g.mu,
                sigma: g.sigma,
            }],
        }
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn means(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(|c| c.mu)
    }

    pub fn max_sigma(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.sigma))
    }

    pub fn mean_range(&self) -> (f64, f64) {
        self.means()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m), hi.max(m)))
    }
}

impl TryFrom<Vec<MixtureComponent>> for GaussianMixtureSpec {
    type Error = Error;

    fn try_from(v: Vec<MixtureComponent>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GaussianMixtureSpec> for Vec<MixtureComponent> {
    fn from(s: GaussianMixtureSpec) -> Self {
        s.components
    }
}

/// A probability vector over a finite outcome set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDist {
    probs: Vec<f64>,
}

impl CategoricalDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("categorical distribution has no outcomes"));
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::invalid("probs", format!("entry {p} is not a probability")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid("probs", format!("entries sum to {total}, expected 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy in nats, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

/// How expectations under the candidate Gaussian are integrated.
///
/// Both schemes work on the candidate's own affine frame `x = mu + sigma * t`.
/// The fixed Gauss–Hermite rule is exact for polynomial integrands but
/// converges slowly once the candidate is much wider than the transitions
/// between mixture components; the adaptive scheme handles those.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case", deny_unknown_fields)]
pub enum QuadratureConfig {
    /// Fixed rule; converged when doubling the node count moves the value by
    /// at most [`QUADRATURE_TOL`].
    GaussHermite { node_count: usize },
    /// Bisection on the 7/15-point Gauss–Kronrod pair; converged when the
    /// summed error estimate is at most [`QUADRATURE_TOL`].
    Adaptive { abs_tol: f64, max_panels: usize },
}

impl QuadratureConfig {
    pub const MIN_NODES: usize = 8;

    pub fn gauss_hermite(node_count: usize) -> Result<Self> {
        let q = QuadratureConfig::GaussHermite { node_count };
        q.validate()?;
        Ok(q)
    }

    pub fn adaptive(abs_tol: f64) -> Result<Self> {
        let q = QuadratureConfig::Adaptive { abs_tol, max_panels: 4000 };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            QuadratureConfig::GaussHermite { node_count } if node_count < Self::MIN_NODES => Err(Error::invalid(
                "node_count",
                format!("need at least {} nodes, got {node_count}", Self::MIN_NODES),
            )),
            QuadratureConfig::Adaptive { abs_tol, .. } if !(abs_tol > 0.0 && abs_tol <= QUADRATURE_TOL) => {
                Err(Error::invalid(
                    "abs_tol",
                    format!("must lie in (0, {QUADRATURE_TOL:e}], got {abs_tol}"),
                ))
            }
            QuadratureConfig::Adaptive { max_panels, .. } if max_panels < 8 => {
                Err(Error::invalid("max_panels", "need at least 8 panels"))
            }
            _ => Ok(()),
        }
    }

    /// `E_g[f]` and, for the convergence check, the size of the discrepancy.
    fn expectation(&self, g: &GaussianParams, f: impl Fn(f64) -> f64) -> (f64, f64) {
        match *self {
            QuadratureConfig::GaussHermite { node_count } => {
                let coarse = GaussHermite::cached(node_count).expectation(g, &f);
                let fine = GaussHermite::cached(2 * node_count).expectation(g, &f);
                (coarse, (fine - coarse).abs())
            }
            QuadratureConfig::Adaptive { abs_tol, max_panels } => {
                let r = AdaptiveKronrod::new(abs_tol, max_panels).expectation(g, f);
                (r.value, r.error_estimate)
            }
        }
    }

    /// `E_g[f]` without the convergence check; the cheap path for dense grids.
    pub fn expectation_unchecked(&self, g: &GaussianParams, f: impl Fn(f64) -> f64) -> f64 {
        match *self {
            QuadratureConfig::GaussHermite { node_count } => GaussHermite::cached(node_count).expectation(g, f),
            QuadratureConfig::Adaptive { abs_tol, max_panels } => {
                AdaptiveKronrod::new(abs_tol, max_panels).expectation(g, f).value
            }
        }
    }

    fn not_converged(&self, delta: f64) -> Error {
        match *self {
            QuadratureConfig::GaussHermite { node_count } => Error::QuadratureNotConverged {
                nodes: node_count,
                doubled: 2 * node_count,
                delta,
            },
            QuadratureConfig::Adaptive { max_panels, .. } => Error::QuadratureNotConverged {
                nodes: 15 * max_panels,
                doubled: 15 * max_panels,
                delta,
            },
        }
    }
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig::Adaptive {
            abs_tol: 1e-11,
            max_panels: 4000,
        }
    }
}

/// Differential entropy `½ ln(2πe σ²)`. Negative for `σ < 1/√(2πe)`.
pub fn gauss_entropy(g: &GaussianParams) -> f64 {
    0.5 * (2.0 * PI * E * g.sigma * g.sigma).ln()
}

/// Log density of the mixture at `x`, via log-sum-exp over components.
pub fn gmm_log_pdf(spec: &GaussianMixtureSpec, x: f64) -> f64 {
    let mut max = f64::NEG_INFINITY;
    // Few components; two passes avoid an allocation.
    for c in &spec.components {
        let z = (x - c.mu) / c.sigma;
        let t = c.weight.ln() - c.sigma.ln() - 0.5 * z * z;
        max = max.max(t);
    }
    let mut acc = 0.0;
    for c in &spec.components {
        let z = (x - c.mu) / c.sigma;
        acc += (c.weight.ln() - c.sigma.ln() - 0.5 * z * z - max).exp();
    }
    max + acc.ln() - 0.5 * (2.0 * PI).ln()
}

/// `H(g, spec)` without the convergence check.
pub fn cross_entropy_unchecked(g: &GaussianParams, spec: &GaussianMixtureSpec, q: &QuadratureConfig) -> f64 {
    -q.expectation_unchecked(g, |x| gmm_log_pdf(spec, x))
}

/// Cross-entropy `H(g, spec) = -E_g[ln spec(x)]`, integrated in the frame of
/// `g`. Fails with [`Error::QuadratureNotConverged`] when the scheme's
/// discrepancy exceeds [`QUADRATURE_TOL`].
pub fn cross_entropy_gauss_gmm(
    g: &GaussianParams,
    spec: &GaussianMixtureSpec,
    q: QuadratureConfig,
) -> Result<f64> {
    q.validate()?;
    let (value, delta) = q.expectation(g, |x| gmm_log_pdf(spec, x));
    if !(delta <= QUADRATURE_TOL) {
        return Err(q.not_converged(delta));
    }
    Ok(-value)
}

fn check_alpha_range(alpha: f64) -> Result<()> {
    if !(0.0..=2.0).contains(&alpha) {
        return Err(Error::invalid("alpha", format!("must lie in [0, 2], got {alpha}")));
    }
    Ok(())
}

/// `D_alpha(g || spec) = -alpha H(g) + H(g, spec)`.
pub fn d_alpha_continuous(
    g: &GaussianParams,
    spec: &GaussianMixtureSpec,
    alpha: f64,
    q: QuadratureConfig,
) -> Result<f64> {
    check_alpha_range(alpha)?;
    Ok(-alpha * gauss_entropy(g) + cross_entropy_gauss_gmm(g, spec, q)?)
}

/// `D_alpha` without the convergence check; used on dense grids.
pub fn d_alpha_unchecked(g: &GaussianParams, spec: &GaussianMixtureSpec, alpha: f64, q: &QuadratureConfig) -> f64 {
    -alpha * gauss_entropy(g) + cross_entropy_unchecked(g, spec, q)
}

/// Closed-form `KL(p || q)` between two Gaussians.
pub fn gaussian_kl(p: &GaussianParams, q: &GaussianParams) -> f64 {
    let d = p.mu - q.mu;
    (q.sigma / p.sigma).ln() + (p.sigma * p.sigma + d * d) / (2.0 * q.sigma * q.sigma) - 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoricalFunctionals {
    pub entropy: f64,
    pub cross_entropy: f64,
    pub kl: f64,
    pub d_alpha: f64,
}

/// Entropy of `p`, `H(p, q)`, `KL(p || q)` and `D_alpha(p || q)` in one pass.
pub fn categorical_functionals(p: &CategoricalDist, q: &CategoricalDist, alpha: f64) -> Result<CategoricalFunctionals> {
    if p.len() != q.len() {
        return Err(Error::invalid(
            "q",
            format!("outcome sets differ: {} vs {}", p.len(), q.len()),
        ));
    }
    let ent = entropy(&p.probs);
    let ce = cross_entropy(&p.probs, &q.probs)?;
    Ok(CategoricalFunctionals {
        entropy: ent,
        cross_entropy: ce,
        kl: ce - ent,
        d_alpha: -alpha * ent + ce,
    })
}

/// `softmax(logits / temperature)`.
pub fn apply_temperature(logits: &[f64], temperature: f64) -> Result<CategoricalDist> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(
            "temperature",
            format!("must be positive, got {temperature}"),
        ));
    }
    if logits.is_empty() {
        return Err(Error::Empty("no logits"));
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    Ok(CategoricalDist { probs: softmax(&scaled) })
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| x - lse).collect()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

pub fn cross_entropy(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::SupportMismatch { index: i });
            }
            acc -= pi * qi.ln();
        }
    }
    Ok(acc)
}

/// Half the L1 distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Index of the first maximal entry.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
