//! Brute-force reference implementations and a finite-difference gradient
//! checker, shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use mgrpo_core::policy::{Origin, Shape, TabularPolicy};
use mgrpo_core::selfreward::RolloutGroup;
use mgrpo_core::trainer::objective_and_gradient;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Most frequent answer, ties to the smallest id, by counting every
/// candidate against the whole list.
pub fn vote_oracle(answers: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for &candidate in answers {
        let count = answers.iter().filter(|&&a| a == candidate).count();
        best = match best {
            Some((b, c)) if c > count || (c == count && b < candidate) => Some((b, c)),
            _ => Some((candidate, count)),
        };
    }
    best.map(|(b, _)| b)
}

fn insertion_sorted(values: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        let pos = out.iter().position(|&x| x > v).unwrap_or(out.len());
        out.insert(pos, v);
    }
    out
}

/// Linear interpolation between the order statistics around `(n-1)q`.
pub fn quantile_oracle(values: &[f64], q: f64) -> f64 {
    let sorted = insertion_sorted(values);
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn keep_mask_oracle(entropies: &[f64], k: f64, min_pool: usize, enabled: bool) -> Vec<bool> {
    if !enabled || entropies.len() < min_pool.max(2) {
        return vec![true; entropies.len()];
    }
    let q1 = quantile_oracle(entropies, 0.25);
    let q3 = quantile_oracle(entropies, 0.75);
    entropies.iter().map(|&e| e >= q1 - k * (q3 - q1)).collect()
}

/// Standardized rewards via the `E[x^2] - E[x]^2` variance, or `None` for a
/// zero-spread group.
pub fn normalize_oracle(rewards: &[f64]) -> Option<Vec<f64>> {
    let first = *rewards.first()?;
    if rewards.iter().all(|&r| r == first) {
        return None;
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let mean_sq = rewards.iter().map(|r| r * r).sum::<f64>() / n;
    let std = (mean_sq - mean * mean).max(0.0).sqrt();
    Some(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// A random small objective instance: policy, reference and scored groups.
pub struct GradientInstance {
    pub current: TabularPolicy,
    pub reference: TabularPolicy,
    pub groups: Vec<RolloutGroup>,
    pub temperature: f64,
}

pub fn gradient_instance(seed: u64) -> GradientInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape::new(rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(2..=4)).unwrap();
    let current = TabularPolicy::gaussian(shape, 1.0, &mut rng).unwrap();
    let reference = TabularPolicy::gaussian(shape, 1.0, &mut rng).unwrap();
    let temperature = rng.random_range(0.6..1.6);
    let groups = (0..shape.num_prompts)
        .map(|prompt| {
            let n = rng.random_range(2..=6);
            let trajectories: Vec<_> = (0..n)
                .map(|i| {
                    let origin = if i == 0 || rng.random_bool(0.7) { Origin::Current } else { Origin::Momentum };
                    current.sample_trajectory(prompt, temperature, origin, &mut rng).unwrap()
                })
                .collect();
            let mut group = RolloutGroup::new(prompt, trajectories);
            group.keep_mask = (0..n).map(|i| i == 0 || rng.random_bool(0.8)).collect();
            group.score();
            // arbitrary advantages exercise the estimator beyond {0, 1} rewards
            group.advantages = group.scored.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
            group.degenerate = rng.random_bool(0.2);
            group
        })
        .collect();
    GradientInstance {
        current,
        reference,
        groups,
        temperature,
    }
}

/// Largest coordinate error of the analytic gradient against central
/// differences, relative to the largest gradient coordinate.
pub fn gradient_relative_error(instance: &GradientInstance, beta: f64) -> f64 {
    let objective = |policy: &TabularPolicy| {
        objective_and_gradient(policy, &instance.reference, &instance.groups, beta, instance.temperature)
            .unwrap()
    };
    let analytic = objective(&instance.current).gradient;
    let h = 1e-5;
    let mut max_err: f64 = 0.0;
    let mut scale: f64 = 1e-8;
    for i in 0..analytic.logits().len() {
        let mut plus = instance.current.clone();
        plus.logits_mut()[i] += h;
        let mut minus = instance.current.clone();
        minus.logits_mut()[i] -= h;
        let numeric = (objective(&plus).value - objective(&minus).value) / (2.0 * h);
        let a = analytic.logits()[i];
        max_err = max_err.max((a - numeric).abs());
        scale = scale.max(a.abs()).max(numeric.abs());
    }
    max_err / scale
}
