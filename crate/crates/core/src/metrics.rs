//! Coverage and diversity metrics over sampled responses, and a first-order
//! toy language model to produce them.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::{apply_temperature, argmax};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// `n` samples of which `c` are correct, evaluated at budget `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassKInput {
    n: usize,
    c: usize,
    k: usize,
}

impl PassKInput {
    pub fn new(n: usize, c: usize, k: usize) -> Result<Self> {
        if c > n {
            return Err(Error::invalid("c", format!("{c} correct out of {n} samples")));
        }
        if k == 0 || k > n {
            return Err(Error::invalid("k", format!("{k} must lie in 1..={n}")));
        }
        Ok(Self { n, c, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Unbiased pass@k, `1 - C(n-c, k) / C(n, k)`, as a running product.
pub fn pass_at_k(inp: PassKInput) -> f64 {
    let PassKInput { n, c, k } = inp;
    if n - c < k {
        return 1.0;
    }
    let miss: f64 = (0..k).map(|i| (n - c - i) as f64 / (n - i) as f64).product();
    1.0 - miss
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub n: usize,
    pub c: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageRow {
    pub k: usize,
    pub mean_pass_at_k: f64,
}

/// Mean pass@k over problems, for each budget in `ks`.
pub fn coverage_report(problems: &[Problem], ks: &[usize]) -> Result<Vec<CoverageRow>> {
    if problems.is_empty() {
        return Err(Error::Empty("problem list"));
    }
    for (i, p) in problems.iter().enumerate() {
        if p.c > p.n {
            return Err(Error::invalid("problems", format!("problem {i} has c={} > n={}", p.c, p.n)));
        }
    }
    ks.iter()
        .map(|&k| {
            let mut total = 0.0;
            for (i, p) in problems.iter().enumerate() {
                if k > p.n {
                    return Err(Error::KExceedsSamples { problem: i, k, n: p.n });
                }
                total += pass_at_k(PassKInput::new(p.n, p.c, k)?);
            }
            Ok(CoverageRow {
                k,
                mean_pass_at_k: total / problems.len() as f64,
            })
        })
        .collect()
}

/// A sampled response and its natural-log probability under the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub tokens: Vec<u32>,
    pub log_prob: f64,
}

/// Responses grouped by prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Generation>>", into = "Vec<Vec<Generation>>")]
pub struct GenerationSet {
    prompts: Vec<Vec<Generation>>,
}

impl GenerationSet {
    pub fn new(prompts: Vec<Vec<Generation>>) -> Result<Self> {
        for (x, group) in prompts.iter().enumerate() {
            for (i, g) in group.iter().enumerate() {
                if g.tokens.is_empty() {
                    return Err(Error::invalid("generation", format!("prompt {x} response {i} is empty")));
                }
                if !(g.log_prob <= 0.0) {
                    return Err(Error::invalid("generation", format!("prompt {x} response {i} has log_prob {}", g.log_prob)));
                }
            }
        }
        Ok(Self { prompts })
    }

    pub fn prompts(&self) -> &[Vec<Generation>] {
        &self.prompts
    }

    pub fn responses(&self) -> impl Iterator<Item = &Generation> {
        self.prompts.iter().flatten()
    }
}

impl TryFrom<Vec<Vec<Generation>>> for GenerationSet {
    type Error = Error;

    fn try_from(prompts: Vec<Vec<Generation>>) -> Result<Self> {
        Self::new(prompts)
    }
}

impl From<GenerationSet> for Vec<Vec<Generation>> {
    fn from(gs: GenerationSet) -> Self {
        gs.prompts
    }
}

/// Mean over every response, pooled across prompts, of
/// `-log_prob / token_count`.
pub fn normalized_entropy(gs: &GenerationSet) -> Result<f64> {
    let (sum, count) = gs
        .responses()
        .fold((0.0, 0usize), |(s, n), g| (s - g.log_prob / g.tokens.len() as f64, n + 1));
    if count == 0 {
        return Err(Error::Empty("generation set"));
    }
    Ok(sum / count as f64)
}

/// Highest n-gram order used by [`self_bleu`].
pub const BLEU_MAX_ORDER: usize = 4;

type Counts<'a> = HashMap<&'a [u32], usize>;

/// Per-order n-gram counts of one sequence.
struct Profile<'a> {
    tokens: &'a [u32],
    counts: Vec<Counts<'a>>,
}

impl<'a> Profile<'a> {
    fn new(tokens: &'a [u32]) -> Self {
        let counts = (1..=BLEU_MAX_ORDER)
            .map(|n| {
                let mut c = HashMap::new();
                for w in tokens.windows(n) {
                    *c.entry(w).or_insert(0) += 1;
                }
                c
            })
            .collect();
        Self { tokens, counts }
    }
}

fn bleu(hyp: &Profile, refs: &[&Profile]) -> f64 {
    let c = hyp.tokens.len();
    if c == 0 || refs.is_empty() {
        return 0.0;
    }
    let order = BLEU_MAX_ORDER.min(c);
    let mut log_sum = 0.0;
    for n in 1..=order {
        let total = c + 1 - n;
        let matched: usize = hyp.counts[n - 1]
            .iter()
            .map(|(g, &k)| {
                let max_ref = refs.iter().map(|r| r.counts[n - 1].get(g).copied().unwrap_or(0)).max().unwrap_or(0);
                k.min(max_ref)
            })
            .sum();
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total + 1) as f64
        };
        log_sum += p.ln();
    }
    let r = refs
        .iter()
        .map(|r| r.tokens.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("non-empty references");
    let bp = if c > r { 0.0 } else { 1.0 - r as f64 / c as f64 };
    (bp + log_sum / order as f64).exp()
}

/// Sentence BLEU of `hyp` against `refs`.
///
/// Orders 1 to `min(4, |hyp|)` with uniform weights and clipped counts. An
/// order above one with no matches counts as `1 / (total + 1)`. The brevity
/// penalty uses the reference length closest to `|hyp|`, the shorter one on
/// ties.
pub fn sentence_bleu(hyp: &[u32], refs: &[&[u32]]) -> f64 {
    let profiles: Vec<Profile> = refs.iter().map(|r| Profile::new(r)).collect();
    let refs: Vec<&Profile> = profiles.iter().collect();
    bleu(&Profile::new(hyp), &refs)
}

/// Mean BLEU of each response against the other responses to the same
/// prompt. Prompts with fewer than two responses are skipped with a warning.
pub fn self_bleu(gs: &GenerationSet) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, group) in gs.prompts().iter().enumerate() {
        if group.len() < 2 {
            log::warn!("self-bleu: skipping prompt {x} with {} response(s)", group.len());
            continue;
        }
        let profiles: Vec<Profile> = group.iter().map(|g| Profile::new(&g.tokens)).collect();
        for (i, hyp) in profiles.iter().enumerate() {
            let refs: Vec<&Profile> = profiles.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p).collect();
            total += bleu(hyp, &refs);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("no prompt has two or more responses"));
    }
    Ok(total / count as f64)
}

/// Distinct n-grams over all n-gram occurrences, pooled across responses.
pub fn distinct_n(gs: &GenerationSet, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let mut seen = std::collections::HashSet::new();
    let mut total = 0usize;
    for g in gs.responses() {
        for w in g.tokens.windows(n) {
            seen.insert(w);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty("no response is long enough for a single n-gram"));
    }
    Ok(seen.len() as f64 / total as f64)
}

/// First-order language model over symbols `0..vocab_size`.
///
/// `transition_logits` is `(V + 1) x (V + 1)`: row `V` is the start state
/// and column `V` is the stop symbol. Stopping is not allowed from the
/// start state, so every sequence has at least one token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyLM {
    vocab_size: usize,
    transition_logits: Matrix,
}

impl ToyLM {
    pub fn new(vocab_size: usize, transition_logits: Matrix) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::invalid("vocab_size", "must be at least 2"));
        }
        if transition_logits.rows() != vocab_size + 1 || transition_logits.cols() != vocab_size + 1 {
            return Err(Error::invalid("transition_logits", format!("must be {0}x{0}", vocab_size + 1)));
        }
        if transition_logits.as_slice().iter().any(|z| !z.is_finite()) {
            return Err(Error::invalid("transition_logits", "must be finite"));
        }
        Ok(Self {
            vocab_size,
            transition_logits,
        })
    }

    /// Logits i.i.d. `N(0, scale^2)` with `stop_bias` added to the stop column.
    pub fn random(vocab_size: usize, scale: f64, stop_bias: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = Matrix::from_fn(vocab_size + 1, vocab_size + 1, |_, j| {
            let z: f64 = rng.sample(StandardNormal);
            scale * z + if j == vocab_size { stop_bias } else { 0.0 }
        });
        Self::new(vocab_size, logits)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn transition_logits(&self) -> &Matrix {
        &self.transition_logits
    }

    pub fn start(&self) -> usize {
        self.vocab_size
    }

    pub fn stop(&self) -> usize {
        self.vocab_size
    }

    /// Next-symbol logits after `prev`; the start row omits the stop column.
    pub fn row_logits(&self, prev: usize) -> &[f64] {
        let row = self.transition_logits.row(prev);
        if prev == self.start() {
            &row[..self.vocab_size]
        } else {
            row
        }
    }

    /// Next-symbol distribution after `prev` at temperature `t`.
    pub fn next_probs(&self, prev: usize, t: f64) -> Result<Vec<f64>> {
        Ok(apply_temperature(self.row_logits(prev), t)?.probs().to_vec())
    }

    /// Log probability of `tokens` under temperature `t`. A sequence shorter
    /// than `max_len` includes the stop transition.
    pub fn sequence_log_prob(&self, tokens: &[u32], t: f64, max_len: usize) -> Result<f64> {
        let mut prev = self.start();
        let mut lp = 0.0;
        for &tok in tokens {
            lp += self.next_probs(prev, t)?[tok as usize].ln();
            prev = tok as usize;
        }
        if tokens.len() < max_len {
            lp += self.next_probs(prev, t)?[self.stop()].ln();
        }
        Ok(lp)
    }

    /// Most likely next symbol at every step, up to `max_len` tokens.
    pub fn greedy(&self, max_len: usize) -> Vec<u32> {
        let mut out = Vec::new();
        let mut prev = self.start();
        while out.len() < max_len {
            let next = argmax(self.row_logits(prev));
            if next == self.stop() {
                break;
            }
            out.push(next as u32);
            prev = next;
        }
        out
    }
}

/// Draws `n_samples` sequences from `lm` at temperature `t`, stopping at the
/// stop symbol or after `max_len` tokens. Each log-probability is exact under
/// the temperature-`t` model and covers the stop transition when one was
/// drawn. The result has a single prompt group.
pub fn sample_toy_lm(lm: &ToyLM, t: f64, n_samples: usize, max_len: usize, seed: u64) -> Result<GenerationSet> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("temperature", format!("{t} must be positive")));
    }
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be at least 1"));
    }
    if max_len == 0 {
        return Err(Error::invalid("max_len", "must be at least 1"));
    }
    let mut tables = Vec::with_capacity(lm.vocab_size + 1);
    for prev in 0..=lm.vocab_size {
        let p = lm.next_probs(prev, t)?;
        let log_p: Vec<f64> = p.iter().map(|v| v.ln()).collect();
        let index = WeightedIndex::new(&p).map_err(|e| Error::invalid("transition_logits", e.to_string()))?;
        tables.push((index, log_p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n_samples)
        .map(|_| {
            let mut tokens = Vec::new();
            let mut log_prob = 0.0;
            let mut prev = lm.start();
            while tokens.len() < max_len {
                let (index, log_p) = &tables[prev];
                let next = index.sample(&mut rng);
                log_prob += log_p[next];
                if next == lm.stop() && prev != lm.start() {
                    break;
                }
                tokens.push(next as u32);
                prev = next;
            }
            Generation {
                tokens,
                log_prob: log_prob.min(0.0),
            }
        })
        .collect();
    GenerationSet::new(vec![samples])
}
