//! Tabular autoregressive categorical policy.
//!
//! Each prompt owns a table of logits indexed by `(position, previous token)`.
//! Position 0 is conditioned on a beginning-of-sequence context, encoded as
//! previous token `V`. A trajectory's answer is its final token.
//!
//! All distributions are tempered: `softmax(logits / temperature)`. Log-probs,
//! entropies and KL divergences are evaluated at the temperature the caller
//! supplies, which for training is the sampling temperature.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub num_prompts: usize,
    pub seq_len: usize,
    pub vocab_size: usize,
}

impl Shape {
    pub fn new(num_prompts: usize, seq_len: usize, vocab_size: usize) -> Result<Self> {
        if num_prompts == 0 || seq_len == 0 {
            return Err(Error::Config(format!(
                "num_prompts and seq_len must be positive (got {num_prompts}, {seq_len})"
            )));
        }
        if vocab_size < 2 {
            return Err(Error::Config(format!("vocab_size must be >= 2 (got {vocab_size})")));
        }
        Ok(Self {
            num_prompts,
            seq_len,
            vocab_size,
        })
    }

    /// Previous-token contexts per position: `V` tokens plus BOS.
    pub fn contexts(&self) -> usize {
        self.vocab_size + 1
    }

    /// The BOS context id.
    pub fn bos(&self) -> usize {
        self.vocab_size
    }

    pub fn num_logits(&self) -> usize {
        self.num_prompts * self.seq_len * self.contexts() * self.vocab_size
    }

    /// Offset of the first logit of row `(prompt, position, prev)`.
    pub fn row_offset(&self, prompt: usize, position: usize, prev: usize) -> usize {
        ((prompt * self.seq_len + position) * self.contexts() + prev) * self.vocab_size
    }

    /// Logits belonging to one prompt.
    pub fn prompt_span(&self, prompt: usize) -> std::ops::Range<usize> {
        let per_prompt = self.seq_len * self.contexts() * self.vocab_size;
        prompt * per_prompt..(prompt + 1) * per_prompt
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(prompts={}, len={}, vocab={})",
            self.num_prompts, self.seq_len, self.vocab_size
        )
    }
}

/// Which model generated a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Current,
    Momentum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub prompt_id: usize,
    pub tokens: Vec<usize>,
    /// Log-prob of each chosen token under the tempered generating distribution.
    pub step_logprobs: Vec<f64>,
    /// Entropy (nats) of the tempered distribution at each visited state.
    pub step_entropies: Vec<f64>,
    /// Mean of `step_entropies`.
    pub entropy: f64,
    pub origin: Origin,
}

impl Trajectory {
    /// The extracted answer: the final token.
    pub fn answer(&self) -> usize {
        *self.tokens.last().expect("trajectories are never empty")
    }

    pub fn logprob(&self) -> f64 {
        self.step_logprobs.iter().sum()
    }

    /// Previous-token context at each position.
    pub fn contexts(&self, bos: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(bos).chain(self.tokens.iter().copied()).take(self.tokens.len())
    }
}

/// How per-step entropies are reduced to one trajectory-level number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyAggregation {
    #[default]
    Mean,
    Sum,
}

impl EntropyAggregation {
    pub fn apply(self, trajectory: &Trajectory) -> f64 {
        match self {
            EntropyAggregation::Mean => trajectory.entropy,
            EntropyAggregation::Sum => trajectory.step_entropies.iter().sum(),
        }
    }
}

/// Writes `log softmax(row / temperature)` into `out`.
pub fn tempered_log_softmax(row: &[f64], temperature: f64, out: &mut [f64]) {
    debug_assert_eq!(row.len(), out.len());
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(row) {
        *o = (z - max) / temperature;
        sum += o.exp();
    }
    let log_norm = sum.ln();
    for o in out.iter_mut() {
        *o -= log_norm;
    }
}

/// Shannon entropy in nats given log-probabilities.
pub fn entropy_from_log_probs(log_probs: &[f64]) -> f64 {
    let h: f64 = log_probs
        .iter()
        .filter(|lp| lp.is_finite())
        .map(|&lp| -lp.exp() * lp)
        .sum();
    h.max(0.0)
}

/// `KL(p || q)` from log-probabilities.
pub fn kl_from_log_probs(log_p: &[f64], log_q: &[f64]) -> f64 {
    let kl: f64 = log_p
        .iter()
        .zip(log_q)
        .filter(|(lp, _)| lp.is_finite())
        .map(|(&lp, &lq)| lp.exp() * (lp - lq))
        .sum();
    kl.max(0.0)
}

pub(crate) fn check_temperature(temperature: f64) -> Result<()> {
    if temperature > 0.0 && temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "temperature",
            value: temperature,
            domain: "finite and > 0",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    shape: Shape,
    logits: Vec<f64>,
}

impl TabularPolicy {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            logits: vec![0.0; shape.num_logits()],
        }
    }

    pub fn from_logits(shape: Shape, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != shape.num_logits() {
            return Err(Error::Config(format!(
                "{} logits supplied for shape {shape} (needs {})",
                logits.len(),
                shape.num_logits()
            )));
        }
        check_finite("logit", &logits)?;
        Ok(Self { shape, logits })
    }

    /// I.i.d. Gaussian logits with the given standard deviation.
    pub fn gaussian<R: Rng + ?Sized>(shape: Shape, std_dev: f64, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, std_dev).map_err(|_| Error::Domain {
            name: "init_std",
            value: std_dev,
            domain: "finite and >= 0",
        })?;
        let logits = (0..shape.num_logits()).map(|_| normal.sample(rng)).collect();
        Ok(Self { shape, logits })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn into_logits(self) -> Vec<f64> {
        self.logits
    }

    pub fn row(&self, prompt: usize, position: usize, prev: usize) -> &[f64] {
        let start = self.shape.row_offset(prompt, position, prev);
        &self.logits[start..start + self.shape.vocab_size]
    }

    pub fn row_mut(&mut self, prompt: usize, position: usize, prev: usize) -> &mut [f64] {
        let start = self.shape.row_offset(prompt, position, prev);
        &mut self.logits[start..start + self.shape.vocab_size]
    }

    pub fn ensure_same_shape(&self, other: &TabularPolicy) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.shape,
                found: other.shape,
            })
        }
    }

    pub(crate) fn check_prompt(&self, prompt_id: usize) -> Result<()> {
        if prompt_id < self.shape.num_prompts {
            Ok(())
        } else {
            Err(Error::PromptOutOfRange {
                prompt_id,
                num_prompts: self.shape.num_prompts,
            })
        }
    }

    pub(crate) fn check_trajectory(&self, trajectory: &Trajectory) -> Result<()> {
        self.check_prompt(trajectory.prompt_id)?;
        if trajectory.tokens.len() != self.shape.seq_len {
            return Err(Error::LengthMismatch {
                expected: self.shape.seq_len,
                found: trajectory.tokens.len(),
            });
        }
        match trajectory
            .tokens
            .iter()
            .position(|&t| t >= self.shape.vocab_size)
        {
            Some(position) => Err(Error::TokenOutOfRange {
                token: trajectory.tokens[position],
                position,
                vocab_size: self.shape.vocab_size,
            }),
            None => Ok(()),
        }
    }

    /// Tempered log-probabilities at state `(prompt, position, prev)`.
    pub fn log_probs_at(&self, prompt: usize, position: usize, prev: usize, temperature: f64, out: &mut [f64]) {
        tempered_log_softmax(self.row(prompt, position, prev), temperature, out);
    }

    /// Draws one rollout for `prompt_id`, token by token.
    pub fn sample_trajectory<R: Rng + ?Sized>(
        &self,
        prompt_id: usize,
        temperature: f64,
        origin: Origin,
        rng: &mut R,
    ) -> Result<Trajectory> {
        self.check_prompt(prompt_id)?;
        check_temperature(temperature)?;
        let Shape {
            seq_len, vocab_size, ..
        } = self.shape;
        let mut log_probs = vec![0.0; vocab_size];
        let mut tokens = Vec::with_capacity(seq_len);
        let mut step_logprobs = Vec::with_capacity(seq_len);
        let mut step_entropies = Vec::with_capacity(seq_len);
        let mut prev = self.shape.bos();
        for position in 0..seq_len {
            self.log_probs_at(prompt_id, position, prev, temperature, &mut log_probs);
            let u: f64 = rng.random();
            let token = inverse_cdf(&log_probs, u);
            tokens.push(token);
            step_logprobs.push(log_probs[token]);
            step_entropies.push(entropy_from_log_probs(&log_probs));
            prev = token;
        }
        let entropy = step_entropies.iter().sum::<f64>() / seq_len as f64;
        Ok(Trajectory {
            prompt_id,
            tokens,
            step_logprobs,
            step_entropies,
            entropy,
            origin,
        })
    }

    /// `sum_t log pi(token_t | t, prev_t)` at `temperature`.
    pub fn trajectory_logprob(&self, trajectory: &Trajectory, temperature: f64) -> Result<f64> {
        self.check_trajectory(trajectory)?;
        check_temperature(temperature)?;
        let mut log_probs = vec![0.0; self.shape.vocab_size];
        let mut total = 0.0;
        for (position, (prev, &token)) in trajectory
            .contexts(self.shape.bos())
            .zip(&trajectory.tokens)
            .enumerate()
        {
            self.log_probs_at(trajectory.prompt_id, position, prev, temperature, &mut log_probs);
            total += log_probs[token];
        }
        Ok(total)
    }

    /// Mean per-step entropy along the trajectory's visited states.
    pub fn trajectory_entropy(&self, trajectory: &Trajectory, temperature: f64) -> Result<f64> {
        self.check_trajectory(trajectory)?;
        check_temperature(temperature)?;
        let mut log_probs = vec![0.0; self.shape.vocab_size];
        let mut total = 0.0;
        for (position, prev) in trajectory.contexts(self.shape.bos()).enumerate() {
            self.log_probs_at(trajectory.prompt_id, position, prev, temperature, &mut log_probs);
            total += entropy_from_log_probs(&log_probs);
        }
        Ok(total / self.shape.seq_len as f64)
    }

    /// Mean over the trajectory's visited states of `KL(self || reference)`.
    pub fn kl_to_reference(
        &self,
        reference: &TabularPolicy,
        trajectory: &Trajectory,
        temperature: f64,
    ) -> Result<f64> {
        self.ensure_same_shape(reference)?;
        self.check_trajectory(trajectory)?;
        check_temperature(temperature)?;
        let v = self.shape.vocab_size;
        let (mut log_p, mut log_q) = (vec![0.0; v], vec![0.0; v]);
        let mut total = 0.0;
        for (position, prev) in trajectory.contexts(self.shape.bos()).enumerate() {
            self.log_probs_at(trajectory.prompt_id, position, prev, temperature, &mut log_p);
            reference.log_probs_at(trajectory.prompt_id, position, prev, temperature, &mut log_q);
            total += kl_from_log_probs(&log_p, &log_q);
        }
        Ok(total / self.shape.seq_len as f64)
    }

    /// Exact distribution of the final token for one prompt, marginalizing
    /// over earlier tokens with a forward pass through the Markov chain.
    pub fn answer_distribution(&self, prompt_id: usize, temperature: f64) -> Result<Vec<f64>> {
        self.check_prompt(prompt_id)?;
        check_temperature(temperature)?;
        let v = self.shape.vocab_size;
        let mut log_probs = vec![0.0; v];
        // distribution over the previous-token context
        let mut context = vec![0.0; self.shape.contexts()];
        context[self.shape.bos()] = 1.0;
        for position in 0..self.shape.seq_len {
            let mut next = vec![0.0; self.shape.contexts()];
            for (prev, &weight) in context.iter().enumerate() {
                if weight == 0.0 {
                    continue;
                }
                self.log_probs_at(prompt_id, position, prev, temperature, &mut log_probs);
                for (token, lp) in log_probs.iter().enumerate() {
                    next[token] += weight * lp.exp();
                }
            }
            context = next;
        }
        context.truncate(v);
        Ok(context)
    }
}

fn inverse_cdf(log_probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (token, lp) in log_probs.iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            last_positive = token;
        }
        acc += p;
        if u < acc {
            return token;
        }
    }
    // rounding left the cumulative sum just below u
    last_positive
}

/// `m * momentum + (1 - m) * current`, elementwise.
pub fn ema_update(momentum: &TabularPolicy, current: &TabularPolicy, m: f64) -> Result<TabularPolicy> {
    let mut out = momentum.clone();
    ema_update_in_place(&mut out, current, m)?;
    Ok(out)
}

pub fn ema_update_in_place(momentum: &mut TabularPolicy, current: &TabularPolicy, m: f64) -> Result<()> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::Domain {
            name: "momentum",
            value: m,
            domain: "[0, 1)",
        });
    }
    momentum.ensure_same_shape(current)?;
    for (k, &q) in momentum.logits.iter_mut().zip(&current.logits) {
        *k = m * *k + (1.0 - m) * q;
    }
    Ok(())
}
