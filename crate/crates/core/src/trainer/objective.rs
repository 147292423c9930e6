//! Advantage-weighted log-likelihood with a KL penalty, and its exact gradient.
//!
//! ```text
//! J(θ) = (1/B) Σ_prompts Σ_{kept current i} A_i log π_θ(y_i | x)  -  β · mean_i KL_i
//! ```
//!
//! `KL_i` is the mean over the trajectory's visited states of
//! `KL(π_θ(·|s) || π_ref(·|s))`, averaged over every kept Current trajectory in
//! the batch. Degenerate groups are excluded from the first term but still
//! regularized. Trajectories and advantages are held fixed; the gradient is
//! taken through the tempered softmax at each visited state only.

use crate::error::Result;
use crate::policy::{kl_from_log_probs, TabularPolicy, Trajectory};
use crate::selfreward::RolloutGroup;

#[derive(Clone, Debug)]
pub struct ObjectiveOutput {
    pub value: f64,
    /// Same shape as the policy.
    pub gradient: TabularPolicy,
    /// Mean per-trajectory KL over the regularized trajectories (0 if none).
    pub mean_kl: f64,
    /// Trajectories that entered the policy-gradient term.
    pub pg_trajectories: usize,
}

pub fn objective_and_gradient(
    current: &TabularPolicy,
    reference: &TabularPolicy,
    groups: &[RolloutGroup],
    beta: f64,
    temperature: f64,
) -> Result<ObjectiveOutput> {
    current.ensure_same_shape(reference)?;
    let shape = current.shape();
    let v = shape.vocab_size;
    let inv_t = 1.0 / temperature;
    let mut gradient = TabularPolicy::zeros(shape);
    let mut value = 0.0;
    let mut log_p = vec![0.0; v];
    let mut log_q = vec![0.0; v];

    let regularized: usize = groups.iter().map(|g| g.scored.len()).sum();
    let batch_scale = if groups.is_empty() { 0.0 } else { 1.0 / groups.len() as f64 };
    // weight of one state's KL in the batch mean
    let kl_scale = if regularized == 0 {
        0.0
    } else {
        beta / (regularized as f64 * shape.seq_len as f64)
    };
    let mut kl_total = 0.0;
    let mut pg_trajectories = 0;

    for group in groups {
        for (slot, &index) in group.scored.iter().enumerate() {
            let trajectory: &Trajectory = &group.trajectories[index];
            current.check_trajectory(trajectory)?;
            let advantage = if group.degenerate { 0.0 } else { group.advantages[slot] };
            let pg_weight = batch_scale * advantage;
            if pg_weight != 0.0 {
                pg_trajectories += 1;
            }
            let mut traj_kl = 0.0;
            for (position, (prev, &token)) in trajectory
                .contexts(shape.bos())
                .zip(&trajectory.tokens)
                .enumerate()
            {
                current.log_probs_at(trajectory.prompt_id, position, prev, temperature, &mut log_p);
                let offset = shape.row_offset(trajectory.prompt_id, position, prev);
                let grad_row = &mut gradient.logits_mut()[offset..offset + v];

                // d/dz log softmax(z/T)[a] = (onehot(a) - p) / T
                if pg_weight != 0.0 {
                    value += pg_weight * log_p[token];
                    for (j, g) in grad_row.iter_mut().enumerate() {
                        let onehot = if j == token { 1.0 } else { 0.0 };
                        *g += pg_weight * (onehot - log_p[j].exp()) * inv_t;
                    }
                }

                // d/dz KL(p||q) = p_j (log p_j - log q_j - KL) / T
                if beta != 0.0 {
                    reference.log_probs_at(trajectory.prompt_id, position, prev, temperature, &mut log_q);
                    let kl = kl_from_log_probs(&log_p, &log_q);
                    traj_kl += kl;
                    for (j, g) in grad_row.iter_mut().enumerate() {
                        let p = log_p[j].exp();
                        if p > 0.0 {
                            *g -= kl_scale * p * (log_p[j] - log_q[j] - kl) * inv_t;
                        }
                    }
                }
            }
            kl_total += traj_kl / shape.seq_len as f64;
        }
    }

    let mean_kl = if regularized == 0 { 0.0 } else { kl_total / regularized as f64 };
    value -= beta * mean_kl;
    Ok(ObjectiveOutput {
        value,
        gradient,
        mean_kl,
        pg_trajectories,
    })
}

/// Clipped importance-weighted surrogate `min(r A, clip(r, 1-ε, 1+ε) A)` with
/// `r = exp(logprob - old_logprob)`.
///
/// Returns the surrogate and its derivative with respect to `logprob`. With
/// one update per batch of fresh rollouts the ratio is exactly 1, where this
/// reduces to `A` with derivative `A`.
pub fn clipped_surrogate(logprob: f64, old_logprob: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let ratio = (logprob - old_logprob).exp();
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
    let unclipped_value = ratio * advantage;
    let clipped_value = clipped * advantage;
    if unclipped_value <= clipped_value {
        (unclipped_value, unclipped_value)
    } else {
        // the clamp is active and flat in logprob
        (clipped_value, 0.0)
    }
}
