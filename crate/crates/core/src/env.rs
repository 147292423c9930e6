//! Synthetic self-supervision tasks with hidden ground truth.
//!
//! Each prompt has a true answer that never reaches the training reward path;
//! it is read only by [`evaluate_accuracy`]. The matched initial policy is a
//! small Gaussian perturbation of uniform plus planted final-position biases.
//!
//! Deceptive prompts can also carry a shortcut: a fixed token chain that is
//! entered from the first position with bias `shortcut_entry` and, once
//! entered, is followed with bias `shortcut_lock` all the way to the planted
//! answer. Chain tokens are made unreachable from off-chain contexts by the
//! same margin. Shortcut trajectories are therefore confident (low entropy)
//! and wrong.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{check_temperature, Origin, Shape, TabularPolicy};
use crate::rng::{SeedTree, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub num_prompts: usize,
    pub vocab_size: usize,
    pub seq_len: usize,
    /// Fraction of prompts whose initial policy favors a planted wrong answer.
    pub deceptive_fraction: f64,
    /// Logit bias on the planted wrong answer.
    pub bias_magnitude: f64,
    /// Logit bias on the true answer, on every prompt.
    pub truth_bias: f64,
    /// Standard deviation of the Gaussian logit initialization.
    pub init_std: f64,
    /// Deceptive prompts: bias at position 0 toward the shortcut token.
    pub shortcut_entry: f64,
    /// Deceptive prompts: bias locking the shortcut token in place and
    /// mapping it to the planted answer.
    pub shortcut_lock: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_prompts: 200,
            vocab_size: 8,
            seq_len: 4,
            deceptive_fraction: 0.3,
            bias_magnitude: 1.5,
            truth_bias: 0.0,
            init_std: 0.1,
            shortcut_entry: 0.0,
            shortcut_lock: 0.0,
        }
    }
}

impl EnvConfig {
    pub fn shape(&self) -> Result<Shape> {
        Shape::new(self.num_prompts, self.seq_len, self.vocab_size)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape()?;
        if !(0.0..=1.0).contains(&self.deceptive_fraction) {
            return Err(Error::Domain {
                name: "deceptive_fraction",
                value: self.deceptive_fraction,
                domain: "[0, 1]",
            });
        }
        for (name, value) in [
            ("bias_magnitude", self.bias_magnitude),
            ("truth_bias", self.truth_bias),
            ("init_std", self.init_std),
            ("shortcut_entry", self.shortcut_entry),
            ("shortcut_lock", self.shortcut_lock),
        ] {
            if !value.is_finite() {
                return Err(Error::Domain {
                    name,
                    value,
                    domain: "finite",
                });
            }
        }
        for (name, value) in [("init_std", self.init_std), ("shortcut_lock", self.shortcut_lock)] {
            if value < 0.0 {
                return Err(Error::Domain {
                    name,
                    value,
                    domain: ">= 0",
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub seed: u64,
    pub config: EnvConfig,
    true_answers: Vec<usize>,
    /// Planted wrong answer per prompt, if the prompt is deceptive.
    planted: Vec<Option<usize>>,
}

impl TaskSet {
    pub fn num_prompts(&self) -> usize {
        self.true_answers.len()
    }

    pub fn shape(&self) -> Shape {
        self.config.shape().expect("validated at construction")
    }

    pub fn true_answer(&self, prompt_id: usize) -> usize {
        self.true_answers[prompt_id]
    }

    pub fn planted_answer(&self, prompt_id: usize) -> Option<usize> {
        self.planted[prompt_id]
    }

    pub fn deceptive_prompts(&self) -> impl Iterator<Item = usize> + '_ {
        self.planted
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|_| i))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tasks: TaskSet = serde_json::from_str(text)?;
        tasks.config.validate()?;
        let shape = tasks.shape();
        let v = shape.vocab_size;
        if tasks.true_answers.len() != shape.num_prompts
            || tasks.planted.len() != shape.num_prompts
            || tasks.true_answers.iter().any(|&a| a >= v)
            || tasks
                .planted
                .iter()
                .zip(&tasks.true_answers)
                .any(|(p, &t)| matches!(p, Some(w) if *w >= v || *w == t))
        {
            return Err(Error::Config("task set is inconsistent with its shape".into()));
        }
        Ok(tasks)
    }
}

/// Samples a task set and its matched initial policy from `seed`.
pub fn generate_tasks(config: &EnvConfig, seed: u64) -> Result<(TaskSet, TabularPolicy)> {
    config.validate()?;
    let shape = config.shape()?;
    let tree = SeedTree::new(seed);
    let mut rng = tree.rng(Stream::Init, 0, 0);
    let v = shape.vocab_size;

    let true_answers: Vec<usize> = (0..shape.num_prompts).map(|_| rng.random_range(0..v)).collect();

    let num_deceptive = (config.deceptive_fraction * shape.num_prompts as f64).round() as usize;
    let mut order: Vec<usize> = (0..shape.num_prompts).collect();
    order.shuffle(&mut rng);
    let mut planted = vec![None; shape.num_prompts];
    for &prompt in &order[..num_deceptive] {
        // uniform over the V-1 wrong answers
        let mut wrong = rng.random_range(0..v - 1);
        if wrong >= true_answers[prompt] {
            wrong += 1;
        }
        planted[prompt] = Some(wrong);
    }

    let shortcut_paths: Vec<Vec<usize>> = (0..shape.num_prompts)
        .map(|_| (0..shape.seq_len - 1).map(|_| rng.random_range(0..v)).collect())
        .collect();
    let mut policy = TabularPolicy::gaussian(shape, config.init_std, &mut tree.rng(Stream::Init, 1, 0))?;
    let last = shape.seq_len - 1;
    for prompt in 0..shape.num_prompts {
        for prev in 0..shape.contexts() {
            let row = policy.row_mut(prompt, last, prev);
            row[true_answers[prompt]] += config.truth_bias;
            if let Some(wrong) = planted[prompt] {
                row[wrong] += config.bias_magnitude;
            }
        }
    }

    if config.shortcut_entry != 0.0 || config.shortcut_lock != 0.0 {
        for prompt in 0..shape.num_prompts {
            let Some(wrong) = planted[prompt] else { continue };
            let path = &shortcut_paths[prompt];
            policy.row_mut(prompt, 0, shape.bos())[path[0]] += config.shortcut_entry;
            for position in 1..shape.seq_len {
                let from = path[position - 1];
                for prev in 0..v {
                    let row = policy.row_mut(prompt, position, prev);
                    if prev == from {
                        row[if position == last { wrong } else { path[position] }] += config.shortcut_lock;
                    } else if position < last {
                        row[path[position]] -= config.shortcut_lock;
                    }
                }
            }
        }
    }

    let tasks = TaskSet {
        seed,
        config: config.clone(),
        true_answers,
        planted,
    };
    Ok((tasks, policy))
}

/// Fraction of sampled answers equal to the true answer.
///
/// Prompt `i` samples from the evaluation stream at coordinates
/// `(round, i)`, so results are reproducible and schedule-independent.
pub fn evaluate_accuracy(
    policy: &TabularPolicy,
    tasks: &TaskSet,
    temperature: f64,
    samples_per_prompt: usize,
    seeds: &SeedTree,
    round: u64,
) -> Result<f64> {
    check_temperature(temperature)?;
    if samples_per_prompt == 0 {
        return Err(Error::Config("samples_per_prompt must be >= 1".into()));
    }
    if policy.shape() != tasks.shape() {
        return Err(Error::ShapeMismatch {
            expected: tasks.shape(),
            found: policy.shape(),
        });
    }
    let correct: Vec<usize> = (0..tasks.num_prompts())
        .into_par_iter()
        .map(|prompt| -> Result<usize> {
            let mut rng = seeds.rng(Stream::Eval, round, prompt as u64);
            let truth = tasks.true_answer(prompt);
            let mut hits = 0;
            for _ in 0..samples_per_prompt {
                let t = policy.sample_trajectory(prompt, temperature, Origin::Current, &mut rng)?;
                hits += usize::from(t.answer() == truth);
            }
            Ok(hits)
        })
        .collect::<Result<_>>()?;
    let total = tasks.num_prompts() * samples_per_prompt;
    Ok(correct.iter().sum::<usize>() as f64 / total as f64)
}
