//! Synthetic Bradley–Terry tasks and full-batch gradient descent on the
//! H-DPO loss, checked against the closed-form optimal policy.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::preference::{
    bt_population, bt_prob, hdpo_loss_and_grad, max_row_tv, optimal_policy, LossConfig, PreferenceDataset, PreferencePair, RewardTable,
    TabularPolicy,
};

/// Ground-truth rewards, a full-support reference policy and a prompt
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticTask {
    reward: RewardTable,
    reference: TabularPolicy,
    prompt_weights: Vec<f64>,
}

impl SyntheticTask {
    pub fn new(reward: RewardTable, reference: TabularPolicy, prompt_weights: Vec<f64>) -> Result<Self> {
        let (n_p, n_c) = (reference.n_prompts(), reference.n_completions());
        if n_p == 0 || n_c < 2 {
            return Err(Error::invalid("task", "need at least one prompt and two completions"));
        }
        if reward.matrix().rows() != n_p || reward.matrix().cols() != n_c {
            return Err(Error::invalid("reward", "shape does not match the reference policy"));
        }
        if reference.logits().as_slice().iter().any(|z| !z.is_finite()) {
            return Err(Error::invalid("reference", "must have full support"));
        }
        let total: f64 = prompt_weights.iter().sum();
        if prompt_weights.len() != n_p || prompt_weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("prompt_weights", "must be a probability vector over prompts"));
        }
        Ok(Self {
            reward,
            reference,
            prompt_weights,
        })
    }

    /// Rewards and reference logits drawn i.i.d. from N(0, 1); uniform
    /// prompt weights.
    pub fn random(n_prompts: usize, n_completions: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        let reward = Matrix::from_fn(n_prompts, n_completions, |_, _| normal());
        let logits = Matrix::from_fn(n_prompts, n_completions, |_, _| normal());
        let weights = vec![1.0 / n_prompts.max(1) as f64; n_prompts];
        Self::new(RewardTable::new(reward)?, TabularPolicy::from_logits(logits)?, weights)
    }

    /// The 3 x 6 task used by default.
    pub fn default_task(seed: u64) -> Result<Self> {
        Self::random(3, 6, seed)
    }

    /// One prompt, reference (0.5, 0.49, 0.01), rewards (0, 0, 0.05).
    pub fn designated_nonuniform() -> Self {
        let reference = Matrix::from_rows(vec![vec![0.5, 0.49, 0.01]]).expect("rectangular");
        let reward = Matrix::from_rows(vec![vec![0.0, 0.0, 0.05]]).expect("rectangular");
        Self::new(
            RewardTable::new(reward).expect("finite"),
            TabularPolicy::from_probs(&reference).expect("probability rows"),
            vec![1.0],
        )
        .expect("valid task")
    }

    pub fn n_prompts(&self) -> usize {
        self.reference.n_prompts()
    }

    pub fn n_completions(&self) -> usize {
        self.reference.n_completions()
    }

    pub fn reward(&self) -> &RewardTable {
        &self.reward
    }

    pub fn reference(&self) -> &TabularPolicy {
        &self.reference
    }

    pub fn prompt_weights(&self) -> &[f64] {
        &self.prompt_weights
    }

    /// Same rewards and prompt weights with another reference policy.
    pub fn with_reference(&self, reference: TabularPolicy) -> Result<Self> {
        Self::new(self.reward.clone(), reference, self.prompt_weights.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DatasetMode {
    Population,
    Sampled { n_pairs: usize },
}

/// Preference data under the task's Bradley–Terry model.
///
/// Population mode returns exact weights over ordered pairs. Sampled mode
/// draws `n_pairs` triples: a prompt from the prompt weights, an unordered
/// pair of distinct completions uniformly, and the winner by [`bt_prob`].
pub fn synthesize_dataset(task: &SyntheticTask, mode: DatasetMode, seed: u64) -> Result<PreferenceDataset> {
    match mode {
        DatasetMode::Population => Ok(PreferenceDataset::population(bt_population(&task.reward, &task.prompt_weights)?)),
        DatasetMode::Sampled { n_pairs } => {
            if n_pairs == 0 {
                return Err(Error::invalid("n_pairs", "must be at least 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prompts = WeightedIndex::new(&task.prompt_weights).map_err(|e| Error::invalid("prompt_weights", e.to_string()))?;
            let n = task.n_completions();
            let pairs = (0..n_pairs)
                .map(|_| {
                    let x = prompts.sample(&mut rng);
                    let a = rng.gen_range(0..n);
                    let mut b = rng.gen_range(0..n - 1);
                    if b >= a {
                        b += 1;
                    }
                    let u: f64 = rng.gen();
                    if u < bt_prob(&task.reward, x, a, b) {
                        PreferencePair { x, y_w: a, y_l: b }
                    } else {
                        PreferencePair { x, y_w: b, y_l: a }
                    }
                })
                .collect();
            PreferenceDataset::sampled(pairs)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    pub grad_norm_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            max_steps: 20_000,
            grad_norm_tol: 1e-10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", format!("{} must be positive", self.learning_rate)));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps", "must be at least 1"));
        }
        if !(self.grad_norm_tol > 0.0) {
            return Err(Error::invalid("grad_norm_tol", format!("{} must be positive", self.grad_norm_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub final_policy: TabularPolicy,
    /// Loss before each update, then the loss at the final policy.
    pub loss_curve: Vec<f64>,
    pub final_grad_norm: f64,
    pub steps_used: usize,
    pub converged: bool,
}

/// Full-batch gradient descent on the policy logits from zero.
///
/// Sampled datasets are first collapsed into empirical pair frequencies,
/// which leaves the loss unchanged. Stops once the Frobenius norm of the
/// gradient drops below `grad_norm_tol` or after `max_steps` updates.
pub fn train(task: &SyntheticTask, data: &PreferenceDataset, loss_cfg: &LossConfig, train_cfg: &TrainConfig) -> Result<TrainReport> {
    loss_cfg.validate()?;
    train_cfg.validate()?;
    let data = data.aggregated(task.n_prompts(), task.n_completions())?;
    let mut policy = TabularPolicy::uniform(task.n_prompts(), task.n_completions());
    let mut loss_curve = Vec::with_capacity(train_cfg.max_steps.min(100_000) + 1);
    let mut step = 0;
    loop {
        let eval = hdpo_loss_and_grad(&policy, &task.reference, &data, loss_cfg)?;
        if let Some(prompt) = eval.per_prompt.iter().position(|l| !l.is_finite()) {
            return Err(Error::NonFiniteLoss { step, prompt });
        }
        loss_curve.push(eval.loss);
        let grad_norm = eval.grad.norm();
        let converged = grad_norm < train_cfg.grad_norm_tol;
        if converged || step == train_cfg.max_steps {
            return Ok(TrainReport {
                final_policy: policy,
                loss_curve,
                final_grad_norm: grad_norm,
                steps_used: step,
                converged,
            });
        }
        for (z, g) in policy.logits_mut().as_mut_slice().iter_mut().zip(eval.grad.as_slice()) {
            *z -= train_cfg.learning_rate * g;
        }
        step += 1;
    }
}

/// Prompt-weighted mean of the row entropies.
pub fn mean_entropy(policy: &TabularPolicy, prompt_weights: &[f64]) -> f64 {
    prompt_weights.iter().enumerate().map(|(x, w)| w * policy.row_entropy(x)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyPoint {
    pub mean_policy_entropy: f64,
    pub oracle_entropy: f64,
    /// Largest per-row TV distance between the trained and optimal policies.
    pub oracle_tv: f64,
    pub steps_used: usize,
    pub converged: bool,
}

#[derive(Debug)]
pub struct EntropyRow {
    pub alpha: f64,
    pub outcome: Result<EntropyPoint>,
}

/// Trains on the population data once per `alpha` and reports the mean
/// entropy of each final policy. A failed run is recorded in its row and
/// the sweep goes on. Rows are returned in input order.
pub fn entropy_vs_alpha(task: &SyntheticTask, alphas: &[f64], beta: f64, train_cfg: &TrainConfig) -> Result<Vec<EntropyRow>> {
    if alphas.is_empty() {
        return Err(Error::Empty("alpha list"));
    }
    if alphas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("alphas", "must be sorted in strictly ascending order"));
    }
    let data = synthesize_dataset(task, DatasetMode::Population, train_cfg.seed)?;
    Ok(alphas
        .par_iter()
        .map(|&alpha| EntropyRow {
            alpha,
            outcome: entropy_point(task, &data, alpha, beta, train_cfg),
        })
        .collect())
}

fn entropy_point(task: &SyntheticTask, data: &PreferenceDataset, alpha: f64, beta: f64, train_cfg: &TrainConfig) -> Result<EntropyPoint> {
    let cfg = LossConfig::new(alpha, beta)?;
    let report = train(task, data, &cfg, train_cfg)?;
    let oracle = optimal_policy(&task.reference, &task.reward, &cfg)?;
    Ok(EntropyPoint {
        mean_policy_entropy: mean_entropy(&report.final_policy, &task.prompt_weights),
        oracle_entropy: mean_entropy(&oracle.policy, &task.prompt_weights),
        oracle_tv: max_row_tv(&report.final_policy, &oracle.policy),
        steps_used: report.steps_used,
        converged: report.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaScan {
    pub min_tv: f64,
    pub argmin_beta: f64,
    /// `(beta', tv)` in grid order.
    pub per_beta: Vec<(f64, f64)>,
}

/// Distance between the optimal policy at `(alpha, beta)` and the plain
/// DPO optimum `(1, beta')` for each `beta'` in the grid.
pub fn beta_equivalence_scan(task: &SyntheticTask, alpha: f64, beta: f64, beta_grid: &[f64]) -> Result<BetaScan> {
    if alpha == 1.0 {
        return Err(Error::invalid("alpha", "the scan is vacuous at alpha = 1"));
    }
    if beta_grid.is_empty() {
        return Err(Error::Empty("beta grid"));
    }
    if let Some(b) = beta_grid.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return Err(Error::invalid("beta_grid", format!("{b} is not positive")));
    }
    let target = optimal_policy(&task.reference, &task.reward, &LossConfig::new(alpha, beta)?)?.policy;
    let per_beta = beta_grid
        .iter()
        .map(|&b| {
            let dpo = optimal_policy(&task.reference, &task.reward, &LossConfig::new(1.0, b)?)?.policy;
            Ok((b, max_row_tv(&target, &dpo)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (argmin_beta, min_tv) = per_beta
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, (b, tv)| if tv < best.1 { (b, tv) } else { best });
    Ok(BetaScan {
        min_tv,
        argmin_beta,
        per_beta,
    })
}
