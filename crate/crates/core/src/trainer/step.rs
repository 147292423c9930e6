use rayon::prelude::*;

use crate::entropy_filter::{iqr_filter, FilterOutcome};
use crate::error::Result;
use crate::metrics::StepMetrics;
use crate::policy::{ema_update_in_place, Origin, TabularPolicy};
use crate::rng::{SeedTree, Stream};
use crate::selfreward::RolloutGroup;

use super::config::TrainConfig;
use super::objective::objective_and_gradient;
use super::optim::{lr_at, AdamWParams, OptimizerState};

/// Everything that evolves during training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub current: TabularPolicy,
    /// Absent in SRT_BASELINE.
    pub momentum: Option<TabularPolicy>,
    /// Frozen KL anchor (the initial policy).
    pub reference: TabularPolicy,
    pub optimizer: OptimizerState,
    /// Completed updates.
    pub step: usize,
}

impl TrainState {
    pub fn new(initial: TabularPolicy, config: &TrainConfig) -> Self {
        let num_params = initial.logits().len();
        Self {
            momentum: config.mode.uses_momentum().then(|| initial.clone()),
            reference: initial.clone(),
            current: initial,
            optimizer: OptimizerState::new(num_params),
            step: 0,
        }
    }
}

/// The rollout pool for one prompt after filtering and scoring.
#[derive(Clone, Debug)]
pub struct ScoredGroup {
    pub group: RolloutGroup,
    pub filter: FilterOutcome,
}

/// Samples, filters and scores the pool for `prompt_id` at update `step_index`.
///
/// Current and momentum rollouts come from separate streams, so the current
/// rollouts of a prompt are identical across modes under the same seed.
pub fn build_group(
    state: &TrainState,
    prompt_id: usize,
    step_index: usize,
    config: &TrainConfig,
    seeds: &SeedTree,
) -> Result<ScoredGroup> {
    let m = config.current_rollouts();
    let n = config.momentum_rollouts();
    let mut trajectories = Vec::with_capacity(m + n);

    let mut rng = seeds.rng(Stream::CurrentSampling, step_index as u64, prompt_id as u64);
    for _ in 0..m {
        trajectories.push(state.current.sample_trajectory(
            prompt_id,
            config.train_temperature,
            Origin::Current,
            &mut rng,
        )?);
    }
    if let (Some(momentum), true) = (&state.momentum, n > 0) {
        let mut rng = seeds.rng(Stream::MomentumSampling, step_index as u64, prompt_id as u64);
        for _ in 0..n {
            trajectories.push(momentum.sample_trajectory(
                prompt_id,
                config.momentum_temperature(),
                Origin::Momentum,
                &mut rng,
            )?);
        }
    }

    let entropies: Vec<f64> = trajectories
        .iter()
        .map(|t| config.entropy_aggregation.apply(t))
        .collect();
    let filter = iqr_filter(&entropies, &config.effective_filter())?;
    let mut group = RolloutGroup::new(prompt_id, trajectories);
    group.apply_filter(&filter);
    group.score();
    Ok(ScoredGroup { group, filter })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn summarize(groups: &[ScoredGroup]) -> StepMetrics {
    let pool = || groups.iter().flat_map(|g| g.group.trajectories.iter().zip(&g.group.keep_mask));
    let count = |origin: Origin| pool().filter(|(t, _)| t.origin == origin).count();
    let removed = |origin: Origin| pool().filter(|(t, &keep)| t.origin == origin && !keep).count();
    let (current, momentum) = (count(Origin::Current), count(Origin::Momentum));
    let (removed_current, removed_momentum) = (removed(Origin::Current), removed(Origin::Momentum));
    StepMetrics {
        mean_self_reward: mean(groups.iter().filter_map(|g| g.group.mean_reward())),
        mean_policy_entropy: mean(pool().filter(|(t, _)| t.origin == Origin::Current).map(|(t, _)| t.entropy)),
        filtered_fraction: ratio(removed_current + removed_momentum, current + momentum),
        filtered_fraction_current: ratio(removed_current, current),
        filtered_fraction_momentum: Some(ratio(removed_momentum, momentum).unwrap_or(0.0)),
        degenerate_group_fraction: ratio(groups.iter().filter(|g| g.group.degenerate).count(), groups.len()),
        ..StepMetrics::default()
    }
}

/// One update: rollouts, filter, vote, advantages, AdamW ascent, EMA.
///
/// Groups are reduced in batch order, so the result does not depend on how
/// rollout generation was scheduled across threads.
pub fn train_step(
    state: &mut TrainState,
    prompts: &[usize],
    config: &TrainConfig,
    seeds: &SeedTree,
) -> Result<StepMetrics> {
    let step_index = state.step + 1;
    let frozen: &TrainState = state;
    let groups: Vec<ScoredGroup> = prompts
        .par_iter()
        .map(|&prompt| build_group(frozen, prompt, step_index, config, seeds))
        .collect::<Result<_>>()?;

    let lr = lr_at(step_index, config);
    let mut metrics = summarize(&groups);
    metrics.step = step_index;
    metrics.learning_rate = lr;

    let rollout_groups: Vec<RolloutGroup> = groups.into_iter().map(|g| g.group).collect();
    if rollout_groups.iter().all(|g| g.scored.is_empty()) {
        metrics.skipped = true;
        state.step = step_index;
        return Ok(metrics);
    }

    let objective = objective_and_gradient(
        &state.current,
        &state.reference,
        &rollout_groups,
        config.kl_coefficient,
        config.train_temperature,
    )?;
    metrics.objective_value = Some(objective.value);
    metrics.mean_kl = Some(objective.mean_kl);

    state.optimizer.ascend(
        state.current.logits_mut(),
        objective.gradient.logits(),
        lr,
        &AdamWParams::from(config),
    )?;
    if let Some(momentum) = state.momentum.as_mut() {
        ema_update_in_place(momentum, &state.current, config.momentum)?;
    }
    state.step = step_index;
    Ok(metrics)
}
