//! Bradley–Terry preferences, the H-DPO loss and its gradient over tabular
//! softmax policies, the closed-form optimal policy and the entropy-adjusted
//! objective it maximizes.
//!
//! A policy is a matrix of logits indexed by (prompt, completion); each row
//! is pushed through a softmax. Completions are atomic arms. All probability
//! arithmetic is carried out on log-probabilities.
//!
//! With `alpha = 1` every quantity here reduces to plain DPO.

use serde::{Deserialize, Serialize};

use crate::distributions::{apply_temperature, cross_entropy, entropy, log_softmax, log_sum_exp, softmax, total_variation};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// The entropy coefficient `alpha` and the deviation coefficient `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl LossConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let cfg = Self { alpha, beta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.01 }
    }
}

/// Row-wise softmax policy over completions.
///
/// Logits are finite or `-inf`; `-inf` marks a completion with zero
/// probability. Every row needs at least one finite logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    logits: Matrix,
}

impl TabularPolicy {
    pub fn from_logits(logits: Matrix) -> Result<Self> {
        for (x, row) in logits.iter_rows().enumerate() {
            if row.iter().any(|z| z.is_nan() || *z == f64::INFINITY) {
                return Err(Error::invalid("logits", format!("row {x} contains NaN or +inf")));
            }
            if !row.iter().any(|z| z.is_finite()) {
                return Err(Error::invalid("logits", format!("row {x} has no finite logit")));
            }
        }
        Ok(Self { logits })
    }

    /// Policy whose rows are the given probability vectors.
    pub fn from_probs(probs: &Matrix) -> Result<Self> {
        for (x, row) in probs.iter_rows().enumerate() {
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::invalid("probs", format!("row {x} is not a probability vector")));
            }
        }
        let logits = Matrix::from_fn(probs.rows(), probs.cols(), |i, j| probs.get(i, j).ln());
        Self::from_logits(logits)
    }

    pub fn uniform(n_prompts: usize, n_completions: usize) -> Self {
        Self {
            logits: Matrix::zeros(n_prompts, n_completions),
        }
    }

    pub fn n_prompts(&self) -> usize {
        self.logits.rows()
    }

    pub fn n_completions(&self) -> usize {
        self.logits.cols()
    }

    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut Matrix {
        &mut self.logits
    }

    pub fn log_probs(&self) -> Matrix {
        let mut out = self.logits.clone();
        for x in 0..out.rows() {
            let lp = log_softmax(self.logits.row(x));
            out.row_mut(x).copy_from_slice(&lp);
        }
        out
    }

    pub fn row_probs(&self, x: usize) -> Vec<f64> {
        softmax(self.logits.row(x))
    }

    pub fn probs(&self) -> Matrix {
        let mut out = self.logits.clone();
        for x in 0..out.rows() {
            let p = self.row_probs(x);
            out.row_mut(x).copy_from_slice(&p);
        }
        out
    }

    pub fn row_entropy(&self, x: usize) -> f64 {
        entropy(&self.row_probs(x))
    }

    fn same_shape(&self, other: &TabularPolicy) -> Result<()> {
        if !self.logits.same_shape(&other.logits) {
            return Err(Error::invalid(
                "policy",
                format!(
                    "shape {}x{} does not match {}x{}",
                    self.n_prompts(),
                    self.n_completions(),
                    other.n_prompts(),
                    other.n_completions()
                ),
            ));
        }
        Ok(())
    }
}

/// Largest per-prompt total-variation distance between two policies.
pub fn max_row_tv(a: &TabularPolicy, b: &TabularPolicy) -> f64 {
    (0..a.n_prompts())
        .map(|x| total_variation(&a.row_probs(x), &b.row_probs(x)))
        .fold(0.0, f64::max)
}

/// Ground-truth rewards `r(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTable(Matrix);

impl RewardTable {
    pub fn new(r: Matrix) -> Result<Self> {
        if r.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("reward", "all rewards must be finite"));
        }
        Ok(Self(r))
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(x, y)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn row(&self, x: usize) -> &[f64] {
        self.0.row(x)
    }
}

/// `y_w` is preferred over `y_l` for prompt `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferencePair {
    pub x: usize,
    pub y_w: usize,
    pub y_l: usize,
}

impl PreferencePair {
    fn check(&self, n_prompts: usize, n_completions: usize) -> Result<()> {
        if self.y_w == self.y_l {
            return Err(Error::invalid("pair", format!("{self:?} compares a completion with itself")));
        }
        if self.x >= n_prompts || self.y_w >= n_completions || self.y_l >= n_completions {
            return Err(Error::invalid("pair", format!("{self:?} is out of range")));
        }
        Ok(())
    }
}

/// Exact weights `w(x, y_w, y_l)` over all ordered pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationWeights {
    n_prompts: usize,
    n_completions: usize,
    weights: Vec<f64>,
}

impl PopulationWeights {
    /// `weight(x, y_w, y_l)`; the diagonal must be zero and the total one.
    pub fn from_fn(n_prompts: usize, n_completions: usize, mut weight: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut weights = Vec::with_capacity(n_prompts * n_completions * n_completions);
        for x in 0..n_prompts {
            for a in 0..n_completions {
                for b in 0..n_completions {
                    weights.push(weight(x, a, b));
                }
            }
        }
        let w = Self {
            n_prompts,
            n_completions,
            weights,
        };
        w.validate()?;
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("weights", "must be finite and non-negative"));
        }
        for x in 0..self.n_prompts {
            for y in 0..self.n_completions {
                if self.get(x, y, y) != 0.0 {
                    return Err(Error::invalid("weights", format!("w({x}, {y}, {y}) must be zero")));
                }
            }
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("weights", format!("sum to {total}, expected 1")));
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, x: usize, y_w: usize, y_l: usize) -> f64 {
        self.weights[(x * self.n_completions + y_w) * self.n_completions + y_l]
    }

    pub fn n_prompts(&self) -> usize {
        self.n_prompts
    }

    pub fn n_completions(&self) -> usize {
        self.n_completions
    }

    /// Non-zero entries in index order.
    pub fn iter(&self) -> impl Iterator<Item = (PreferencePair, f64)> + '_ {
        let n = self.n_completions;
        self.weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(move |(k, &w)| {
            let pair = PreferencePair {
                x: k / (n * n),
                y_w: (k / n) % n,
                y_l: k % n,
            };
            (pair, w)
        })
    }
}

/// Preference data: either observed triples or an exact population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PreferenceDataset {
    Sampled { pairs: Vec<PreferencePair> },
    Population { weights: PopulationWeights },
}

impl PreferenceDataset {
    pub fn sampled(pairs: Vec<PreferencePair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("sampled dataset has no pairs"));
        }
        if let Some(p) = pairs.iter().find(|p| p.y_w == p.y_l) {
            return Err(Error::invalid("pair", format!("{p:?} compares a completion with itself")));
        }
        Ok(Self::Sampled { pairs })
    }

    pub fn population(weights: PopulationWeights) -> Self {
        Self::Population { weights }
    }

    /// Terms of the loss expectation as (pair, weight), in a fixed order.
    pub fn weighted_pairs(&self) -> Vec<(PreferencePair, f64)> {
        match self {
            Self::Sampled { pairs } => {
                let w = 1.0 / pairs.len() as f64;
                pairs.iter().map(|&p| (p, w)).collect()
            }
            Self::Population { weights } => weights.iter().collect(),
        }
    }

    /// Empirical frequencies of the sampled pairs as population weights, so
    /// that a loss over the returned dataset equals the mean over the pairs.
    pub fn aggregated(&self, n_prompts: usize, n_completions: usize) -> Result<Self> {
        match self {
            Self::Population { .. } => Ok(self.clone()),
            Self::Sampled { pairs } => {
                let mut counts = vec![0usize; n_prompts * n_completions * n_completions];
                for p in pairs {
                    p.check(n_prompts, n_completions)?;
                    counts[(p.x * n_completions + p.y_w) * n_completions + p.y_l] += 1;
                }
                let n = pairs.len() as f64;
                let weights = PopulationWeights::from_fn(n_prompts, n_completions, |x, a, b| {
                    counts[(x * n_completions + a) * n_completions + b] as f64 / n
                })?;
                Ok(Self::Population { weights })
            }
        }
    }

    fn check(&self, n_prompts: usize, n_completions: usize) -> Result<()> {
        match self {
            Self::Sampled { pairs } => pairs.iter().try_for_each(|p| p.check(n_prompts, n_completions)),
            Self::Population { weights } => {
                if weights.n_prompts != n_prompts || weights.n_completions != n_completions {
                    return Err(Error::invalid("dataset", "population shape does not match the policy"));
                }
                Ok(())
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-ln sigmoid(z)`, stable for large `|z|`.
pub fn neg_log_sigmoid(z: f64) -> f64 {
    if z == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    (-z).max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Bradley–Terry probability that `y1` is preferred over `y2` for prompt `x`.
pub fn bt_prob(r: &RewardTable, x: usize, y1: usize, y2: usize) -> f64 {
    sigmoid(r.get(x, y1) - r.get(x, y2))
}

fn ref_log_ratio(ref_lp: &Matrix, pair: &PreferencePair) -> Result<f64> {
    for y in [pair.y_w, pair.y_l] {
        if ref_lp.get(pair.x, y) == f64::NEG_INFINITY {
            return Err(Error::SupportMismatch { index: y });
        }
    }
    Ok(ref_lp.get(pair.x, pair.y_w) - ref_lp.get(pair.x, pair.y_l))
}

fn margin_from_log_probs(lp: &Matrix, ref_lp: &Matrix, pair: &PreferencePair, cfg: &LossConfig) -> Result<f64> {
    let policy_ratio = lp.get(pair.x, pair.y_w) - lp.get(pair.x, pair.y_l);
    Ok(cfg.alpha * cfg.beta * policy_ratio - cfg.beta * ref_log_ratio(ref_lp, pair)?)
}

/// `alpha beta log(pi(y_w)/pi(y_l)) - beta log(ref(y_w)/ref(y_l))`, the
/// difference of the implicit rewards of `y_w` and `y_l` (the partition terms
/// cancel).
pub fn implicit_reward_margin(policy: &TabularPolicy, reference: &TabularPolicy, pair: &PreferencePair, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    policy.same_shape(reference)?;
    pair.check(policy.n_prompts(), policy.n_completions())?;
    let lp = log_softmax(policy.logits.row(pair.x));
    let ref_lp = log_softmax(reference.logits.row(pair.x));
    let ref_ratio = ref_lp[pair.y_w] - ref_lp[pair.y_l];
    for y in [pair.y_w, pair.y_l] {
        if ref_lp[y] == f64::NEG_INFINITY {
            return Err(Error::SupportMismatch { index: y });
        }
    }
    Ok(cfg.alpha * cfg.beta * (lp[pair.y_w] - lp[pair.y_l]) - cfg.beta * ref_ratio)
}

/// Implicit reward `alpha beta log pi(y|x) - beta log ref(y|x) + alpha beta log Z(x)`
/// of a policy, given the log-partition values of the prompt rows.
pub fn implicit_reward(policy: &TabularPolicy, reference: &TabularPolicy, log_z: &[f64], cfg: &LossConfig) -> Result<Matrix> {
    cfg.validate()?;
    policy.same_shape(reference)?;
    let lp = policy.log_probs();
    let ref_lp = reference.log_probs();
    Ok(Matrix::from_fn(policy.n_prompts(), policy.n_completions(), |x, y| {
        cfg.alpha * cfg.beta * lp.get(x, y) - cfg.beta * ref_lp.get(x, y) + cfg.alpha * cfg.beta * log_z[x]
    }))
}

fn prepare(policy: &TabularPolicy, reference: &TabularPolicy, data: &PreferenceDataset, cfg: &LossConfig) -> Result<(Matrix, Matrix)> {
    cfg.validate()?;
    policy.same_shape(reference)?;
    data.check(policy.n_prompts(), policy.n_completions())?;
    Ok((policy.log_probs(), reference.log_probs()))
}

/// H-DPO loss: `E[-ln sigmoid(margin)]` over the dataset.
pub fn hdpo_loss(policy: &TabularPolicy, reference: &TabularPolicy, data: &PreferenceDataset, cfg: &LossConfig) -> Result<f64> {
    let (lp, ref_lp) = prepare(policy, reference, data, cfg)?;
    let mut loss = 0.0;
    for (pair, w) in data.weighted_pairs() {
        loss += w * neg_log_sigmoid(margin_from_log_probs(&lp, &ref_lp, &pair, cfg)?);
    }
    Ok(loss)
}

/// Plain DPO loss with a single `beta` on both log-ratios.
pub fn dpo_loss(policy: &TabularPolicy, reference: &TabularPolicy, data: &PreferenceDataset, beta: f64) -> Result<f64> {
    let cfg = LossConfig::new(1.0, beta)?;
    let (lp, ref_lp) = prepare(policy, reference, data, &cfg)?;
    let mut loss = 0.0;
    for (pair, w) in data.weighted_pairs() {
        let z = beta * (lp.get(pair.x, pair.y_w) - lp.get(pair.x, pair.y_l)) - beta * ref_log_ratio(&ref_lp, &pair)?;
        loss += w * neg_log_sigmoid(z);
    }
    Ok(loss)
}

/// Loss, gradient with respect to the policy logits, and the per-prompt loss
/// contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    pub grad: Matrix,
    pub per_prompt: Vec<f64>,
}

/// Loss and its exact gradient in one pass.
///
/// `d/dz log(pi(y_w)/pi(y_l)) = e_{y_w} - e_{y_l}` for softmax logits `z`, so a
/// pair contributes `-w sigmoid(-margin) alpha beta (e_{y_w} - e_{y_l})` to
/// its prompt row.
pub fn hdpo_loss_and_grad(policy: &TabularPolicy, reference: &TabularPolicy, data: &PreferenceDataset, cfg: &LossConfig) -> Result<LossEval> {
    let (lp, ref_lp) = prepare(policy, reference, data, cfg)?;
    let mut grad = Matrix::zeros(policy.n_prompts(), policy.n_completions());
    let mut per_prompt = vec![0.0; policy.n_prompts()];
    let ab = cfg.alpha * cfg.beta;
    for (pair, w) in data.weighted_pairs() {
        let m = margin_from_log_probs(&lp, &ref_lp, &pair, cfg)?;
        per_prompt[pair.x] += w * neg_log_sigmoid(m);
        let coef = -w * sigmoid(-m) * ab;
        grad.add_at(pair.x, pair.y_w, coef);
        grad.add_at(pair.x, pair.y_l, -coef);
    }
    Ok(LossEval {
        loss: per_prompt.iter().sum(),
        grad,
        per_prompt,
    })
}

pub fn hdpo_loss_grad(policy: &TabularPolicy, reference: &TabularPolicy, data: &PreferenceDataset, cfg: &LossConfig) -> Result<Matrix> {
    Ok(hdpo_loss_and_grad(policy, reference, data, cfg)?.grad)
}

/// The maximizer of the entropy-adjusted objective together with its
/// per-prompt log partition values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OraclePolicy {
    pub policy: TabularPolicy,
    pub log_z: Vec<f64>,
}

fn oracle_logits(reference: &TabularPolicy, r: &RewardTable, beta: f64) -> Result<Matrix> {
    if r.matrix().rows() != reference.n_prompts() || r.matrix().cols() != reference.n_completions() {
        return Err(Error::invalid("reward", "shape does not match the reference policy"));
    }
    let ref_lp = reference.log_probs();
    for x in 0..ref_lp.rows() {
        if let Some(y) = ref_lp.row(x).iter().position(|v| *v == f64::NEG_INFINITY) {
            return Err(Error::SupportMismatch { index: y });
        }
    }
    Ok(Matrix::from_fn(ref_lp.rows(), ref_lp.cols(), |x, y| ref_lp.get(x, y) + r.get(x, y) / beta))
}

/// `pi*(y|x) = ref(y|x)^{1/alpha} exp(r(x,y) / (alpha beta)) / Z(x)`, i.e. the
/// row-wise temperature-`alpha` softmax of `log ref + r / beta`.
pub fn optimal_policy(reference: &TabularPolicy, r: &RewardTable, cfg: &LossConfig) -> Result<OraclePolicy> {
    cfg.validate()?;
    let base = oracle_logits(reference, r, cfg.beta)?;
    let mut logits = base.clone();
    let mut log_z = Vec::with_capacity(base.rows());
    for x in 0..base.rows() {
        let dist = apply_temperature(base.row(x), cfg.alpha)?;
        let row: Vec<f64> = dist.probs().iter().map(|p| p.ln()).collect();
        let scaled: Vec<f64> = base.row(x).iter().map(|v| v / cfg.alpha).collect();
        log_z.push(log_sum_exp(&scaled));
        logits.row_mut(x).copy_from_slice(&row);
    }
    Ok(OraclePolicy {
        policy: TabularPolicy::from_logits(logits)?,
        log_z,
    })
}

fn check_prompt_weights(weights: &[f64], n_prompts: usize) -> Result<()> {
    if weights.len() != n_prompts {
        return Err(Error::invalid("prompt_weights", format!("expected {n_prompts} entries, got {}", weights.len())));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("prompt_weights", "must be a probability vector"));
    }
    Ok(())
}

/// `sum_x w(x) [E_pi r + alpha beta H(pi) - beta H(pi, ref)]`.
pub fn hdpo_objective(policy: &TabularPolicy, reference: &TabularPolicy, r: &RewardTable, cfg: &LossConfig, prompt_weights: &[f64]) -> Result<f64> {
    cfg.validate()?;
    policy.same_shape(reference)?;
    check_prompt_weights(prompt_weights, policy.n_prompts())?;
    let mut total = 0.0;
    for (x, &w) in prompt_weights.iter().enumerate() {
        let p = policy.row_probs(x);
        let q = reference.row_probs(x);
        let expected_reward: f64 = p.iter().zip(r.row(x)).map(|(pi, ri)| pi * ri).sum();
        total += w * (expected_reward + cfg.alpha * cfg.beta * entropy(&p) - cfg.beta * cross_entropy(&p, &q)?);
    }
    Ok(total)
}

/// The RLHF objective `E_pi r - beta KL(pi || ref)`.
pub fn rlhf_objective(policy: &TabularPolicy, reference: &TabularPolicy, r: &RewardTable, beta: f64, prompt_weights: &[f64]) -> Result<f64> {
    policy.same_shape(reference)?;
    check_prompt_weights(prompt_weights, policy.n_prompts())?;
    let mut total = 0.0;
    for (x, &w) in prompt_weights.iter().enumerate() {
        let p = policy.row_probs(x);
        let q = reference.row_probs(x);
        let expected_reward: f64 = p.iter().zip(r.row(x)).map(|(pi, ri)| pi * ri).sum();
        let kl = cross_entropy(&p, &q)? - entropy(&p);
        total += w * (expected_reward - beta * kl);
    }
    Ok(total)
}

/// Population of Bradley–Terry comparisons under `r`: a prompt drawn from
/// `prompt_weights`, an unordered pair of distinct completions drawn
/// uniformly, and the winner decided by [`bt_prob`].
pub fn bt_population(r: &RewardTable, prompt_weights: &[f64]) -> Result<PopulationWeights> {
    let n_prompts = r.matrix().rows();
    let n_completions = r.matrix().cols();
    check_prompt_weights(prompt_weights, n_prompts)?;
    if n_completions < 2 {
        return Err(Error::invalid("n_completions", "need at least two completions"));
    }
    let n_unordered = (n_completions * (n_completions - 1) / 2) as f64;
    PopulationWeights::from_fn(n_prompts, n_completions, |x, a, b| {
        if a == b {
            0.0
        } else {
            prompt_weights[x] * bt_prob(r, x, a, b) / n_unordered
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(rows: Vec<Vec<f64>>) -> TabularPolicy {
        TabularPolicy::from_logits(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn bt_examples() {
        let r = RewardTable::new(Matrix::from_rows(vec![vec![1.0, 1.0, 1.0 + 3f64.ln()]]).unwrap()).unwrap();
        assert_eq!(bt_prob(&r, 0, 0, 1), 0.5);
        assert!((bt_prob(&r, 0, 2, 0) - 0.75).abs() < 1e-15);
        assert!((bt_prob(&r, 0, 2, 0) + bt_prob(&r, 0, 0, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn neg_log_sigmoid_is_stable() {
        assert!((neg_log_sigmoid(0.0) - 2f64.ln()).abs() < 1e-16);
        assert!((neg_log_sigmoid(-800.0) - 800.0).abs() < 1e-9);
        assert!(neg_log_sigmoid(800.0) >= 0.0 && neg_log_sigmoid(800.0) < 1e-300);
        assert_eq!(neg_log_sigmoid(f64::NEG_INFINITY), f64::INFINITY);
    }

    #[test]
    fn margin_small_instance() {
        // logits (0.3, -0.2) and ref (0.1, 0.5), alpha 0.9, beta 0.1;
        // log-ratios under a softmax are logit differences: 0.5 and -0.4.
        let pi = policy(vec![vec![0.3, -0.2]]);
        let rf = policy(vec![vec![0.1, 0.5]]);
        let cfg = LossConfig::new(0.9, 0.1).unwrap();
        let m = implicit_reward_margin(&pi, &rf, &PreferencePair { x: 0, y_w: 0, y_l: 1 }, &cfg).unwrap();
        let expected = 0.09 * 0.5 + 0.1 * 0.4;
        assert!((m - expected).abs() < 1e-15, "{m} vs {expected}");
    }

    #[test]
    fn margin_zero_at_reference_with_unit_alpha() {
        let rf = policy(vec![vec![0.1, 0.5, -1.0], vec![2.0, 0.0, 0.3]]);
        let cfg = LossConfig::new(1.0, 0.3).unwrap();
        for x in 0..2 {
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        let m = implicit_reward_margin(&rf, &rf, &PreferencePair { x, y_w: a, y_l: b }, &cfg).unwrap();
                        assert!(m.abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn margin_rejects_bad_pairs_and_support() {
        let pi = policy(vec![vec![0.0, 0.0]]);
        let cfg = LossConfig::default();
        assert!(implicit_reward_margin(&pi, &pi, &PreferencePair { x: 0, y_w: 1, y_l: 1 }, &cfg).is_err());
        assert!(implicit_reward_margin(&pi, &pi, &PreferencePair { x: 1, y_w: 0, y_l: 1 }, &cfg).is_err());
        let rf = TabularPolicy::from_probs(&Matrix::from_rows(vec![vec![1.0, 0.0]]).unwrap()).unwrap();
        assert!(matches!(
            implicit_reward_margin(&pi, &rf, &PreferencePair { x: 0, y_w: 0, y_l: 1 }, &cfg),
            Err(Error::SupportMismatch { index: 1 })
        ));
    }

    #[test]
    fn loss_at_reference_is_ln2() {
        let rf = policy(vec![vec![0.1, 0.5, -1.0]]);
        let data = PreferenceDataset::sampled(vec![
            PreferencePair { x: 0, y_w: 0, y_l: 1 },
            PreferencePair { x: 0, y_w: 2, y_l: 1 },
        ])
        .unwrap();
        let l = hdpo_loss(&rf, &rf, &data, &LossConfig::new(1.0, 0.5).unwrap()).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn population_loss_matches_brute_force() {
        // 2 prompts x 3 completions, weights proportional to (1 + x + 2a + b).
        let pi = policy(vec![vec![0.2, -0.4, 1.1], vec![0.0, 0.7, -0.3]]);
        let rf = policy(vec![vec![0.5, 0.1, -0.2], vec![-1.0, 0.4, 0.9]]);
        let raw = |x: usize, a: usize, b: usize| if a == b { 0.0 } else { 1.0 + x as f64 + 2.0 * a as f64 + b as f64 };
        let mut total = 0.0;
        for x in 0..2 {
            for a in 0..3 {
                for b in 0..3 {
                    total += raw(x, a, b);
                }
            }
        }
        let weights = PopulationWeights::from_fn(2, 3, |x, a, b| raw(x, a, b) / total).unwrap();
        let data = PreferenceDataset::population(weights);
        let cfg = LossConfig::new(0.85, 0.7).unwrap();

        let mut brute = 0.0;
        for x in 0..2 {
            let p = softmax(pi.logits().row(x));
            let q = softmax(rf.logits().row(x));
            for a in 0..3 {
                for b in 0..3 {
                    if a == b {
                        continue;
                    }
                    let m = 0.85 * 0.7 * (p[a] / p[b]).ln() - 0.7 * (q[a] / q[b]).ln();
                    brute += raw(x, a, b) / total * (1.0 + (-m).exp()).ln();
                }
            }
        }
        let l = hdpo_loss(&pi, &rf, &data, &cfg).unwrap();
        assert!((l - brute).abs() < 1e-14, "{l} vs {brute}");
    }

    #[test]
    fn population_weights_validation() {
        assert!(PopulationWeights::from_fn(1, 2, |_, a, b| if a == b { 0.5 } else { 0.25 }).is_err());
        assert!(PopulationWeights::from_fn(1, 2, |_, a, b| if a == b { 0.0 } else { 0.4 }).is_err());
        assert!(PopulationWeights::from_fn(1, 2, |_, a, b| if a == b { 0.0 } else { 0.5 }).is_ok());
        assert!(PreferenceDataset::sampled(vec![]).is_err());
    }

    #[test]
    fn gradient_zero_at_reference_on_symmetric_data() {
        let rf = policy(vec![vec![0.1, 0.5, -1.0], vec![2.0, 0.0, 0.3]]);
        let mut pairs = Vec::new();
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            pairs.push(PreferencePair { x: 0, y_w: a, y_l: b });
            pairs.push(PreferencePair { x: 0, y_w: b, y_l: a });
        }
        let data = PreferenceDataset::sampled(pairs).unwrap();
        let g = hdpo_loss_grad(&rf, &rf, &data, &LossConfig::new(1.0, 0.2).unwrap()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn gradient_rows_without_data_are_zero() {
        let pi = policy(vec![vec![0.1, 0.5, -1.0], vec![2.0, 0.0, 0.3]]);
        let rf = policy(vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]);
        let data = PreferenceDataset::sampled(vec![PreferencePair { x: 1, y_w: 2, y_l: 0 }]).unwrap();
        let g = hdpo_loss_grad(&pi, &rf, &data, &LossConfig::new(0.8, 0.5).unwrap()).unwrap();
        assert!(g.row(0).iter().all(|v| *v == 0.0));
        assert!(g.row(1).iter().any(|v| *v != 0.0));
    }

    #[test]
    fn aggregated_loss_equals_pair_mean() {
        let pi = policy(vec![vec![0.1, 0.5, -1.0]]);
        let rf = policy(vec![vec![0.3, 0.0, 0.2]]);
        let pairs = vec![
            PreferencePair { x: 0, y_w: 0, y_l: 1 },
            PreferencePair { x: 0, y_w: 0, y_l: 1 },
            PreferencePair { x: 0, y_w: 2, y_l: 1 },
        ];
        let data = PreferenceDataset::sampled(pairs).unwrap();
        let agg = data.aggregated(1, 3).unwrap();
        let cfg = LossConfig::new(0.9, 0.4).unwrap();
        let a = hdpo_loss(&pi, &rf, &data, &cfg).unwrap();
        let b = hdpo_loss(&pi, &rf, &agg, &cfg).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn oracle_reduces_to_reference_and_to_reward_softmax() {
        let rf = policy(vec![vec![0.1, 0.5, -1.0], vec![2.0, 0.0, 0.3]]);
        let constant = RewardTable::new(Matrix::from_rows(vec![vec![2.0; 3], vec![-1.0; 3]]).unwrap()).unwrap();
        let o = optimal_policy(&rf, &constant, &LossConfig::new(1.0, 0.1).unwrap()).unwrap();
        assert!(max_row_tv(&o.policy, &rf) < 1e-14);

        let r = RewardTable::new(Matrix::from_rows(vec![vec![0.3, 0.1, -0.2], vec![0.0, 0.05, 0.2]]).unwrap()).unwrap();
        let u = TabularPolicy::uniform(2, 3);
        let beta = 0.2;
        let o = optimal_policy(&u, &r, &LossConfig::new(1.0, beta).unwrap()).unwrap();
        for x in 0..2 {
            let want = softmax(&r.row(x).iter().map(|v| v / beta).collect::<Vec<_>>());
            assert!(total_variation(&o.policy.row_probs(x), &want) < 1e-15);
        }
    }

    #[test]
    fn oracle_matches_direct_normalization() {
        // ref (0.2, 0.3, 0.5), r (0.01, -0.02, 0.015), alpha 0.8, beta 0.05:
        // unnormalized ref^{1.25} exp(r / 0.04), evaluated term by term.
        let rf = TabularPolicy::from_probs(&Matrix::from_rows(vec![vec![0.2, 0.3, 0.5]]).unwrap()).unwrap();
        let r = RewardTable::new(Matrix::from_rows(vec![vec![0.01, -0.02, 0.015]]).unwrap()).unwrap();
        let o = optimal_policy(&rf, &r, &LossConfig::new(0.8, 0.05).unwrap()).unwrap();
        let u = [
            0.2f64.powf(1.25) * (0.25f64).exp(),
            0.3f64.powf(1.25) * (-0.5f64).exp(),
            0.5f64.powf(1.25) * (0.375f64).exp(),
        ];
        let z: f64 = u.iter().sum();
        let p = o.policy.row_probs(0);
        for y in 0..3 {
            assert!((p[y] - u[y] / z).abs() < 1e-15);
        }
        assert!((o.log_z[0] - z.ln()).abs() < 1e-13);
    }

    #[test]
    fn objective_reduces_to_rlhf() {
        let pi = policy(vec![vec![0.1, 0.5, -1.0], vec![2.0, 0.0, 0.3]]);
        let rf = policy(vec![vec![0.0, 0.2, 0.1], vec![1.0, 0.0, -0.5]]);
        let r = RewardTable::new(Matrix::from_rows(vec![vec![0.3, 0.1, -0.2], vec![0.0, 0.5, 0.2]]).unwrap()).unwrap();
        let w = [0.25, 0.75];
        let a = hdpo_objective(&pi, &rf, &r, &LossConfig::new(1.0, 0.4).unwrap(), &w).unwrap();
        let b = rlhf_objective(&pi, &rf, &r, 0.4, &w).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn objective_one_hot_limit() {
        let r = RewardTable::new(Matrix::from_rows(vec![vec![0.3, 1.2, -0.2]]).unwrap()).unwrap();
        let one_hot = TabularPolicy::from_probs(&Matrix::from_rows(vec![vec![0.0, 1.0, 0.0]]).unwrap()).unwrap();
        let rf = TabularPolicy::uniform(1, 3);
        for beta in [1e-3, 1e-6, 1e-9] {
            let v = hdpo_objective(&one_hot, &rf, &r, &LossConfig::new(0.9, beta).unwrap(), &[1.0]).unwrap();
            assert!((v - 1.2).abs() <= 2.0 * beta * 3f64.ln());
        }
    }

    #[test]
    fn bt_population_sums_per_prompt() {
        let r = RewardTable::new(Matrix::from_rows(vec![vec![0.3, 1.2, -0.2], vec![0.0, 0.0, 0.0]]).unwrap()).unwrap();
        let pop = bt_population(&r, &[0.4, 0.6]).unwrap();
        let first: f64 = pop.iter().filter(|(p, _)| p.x == 0).map(|(_, w)| w).sum();
        assert!((first - 0.4).abs() < 1e-15);
        assert_eq!(pop.get(1, 0, 2), pop.get(1, 2, 0));
    }
}
