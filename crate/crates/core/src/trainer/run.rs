use rand::seq::SliceRandom;

use crate::env::{evaluate_accuracy, TaskSet};
use crate::error::{Error, Result};
use crate::metrics::{MetricsLog, StepMetrics};
use crate::policy::TabularPolicy;
use crate::rng::{SeedTree, Stream};

use super::config::TrainConfig;
use super::optim::lr_at;
use super::step::{train_step, TrainState};

/// Shuffled epochs of fixed-size prompt batches.
///
/// Epoch `e` is a permutation drawn from the env stream at `(e, 0)`. A tail
/// shorter than the batch size is dropped; the next batch starts a new epoch.
#[derive(Clone, Debug)]
pub struct Batcher {
    num_prompts: usize,
    batch_size: usize,
    seeds: SeedTree,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl Batcher {
    pub fn new(num_prompts: usize, batch_size: usize, seeds: SeedTree) -> Self {
        let mut batcher = Self {
            num_prompts,
            batch_size: batch_size.min(num_prompts),
            seeds,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
        };
        batcher.reshuffle();
        batcher
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.num_prompts).collect();
        self.order.shuffle(&mut self.seeds.rng(Stream::Env, self.epoch, 0));
        self.cursor = 0;
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor + self.batch_size > self.order.len() {
            self.epoch += 1;
            self.reshuffle();
        }
        let batch = self.order[self.cursor..self.cursor + self.batch_size].to_vec();
        self.cursor += self.batch_size;
        batch
    }
}

/// Callbacks fired while a run progresses.
pub trait RunObserver {
    fn on_metrics(&mut self, _row: &StepMetrics) -> Result<()> {
        Ok(())
    }

    fn on_step_end(&mut self, _state: &TrainState) -> Result<()> {
        Ok(())
    }
}

impl RunObserver for () {}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub log: MetricsLog,
    pub state: TrainState,
}

pub fn evaluate(policy: &TabularPolicy, tasks: &TaskSet, config: &TrainConfig, seeds: &SeedTree, step: usize) -> Result<f64> {
    evaluate_accuracy(
        policy,
        tasks,
        config.eval_temperature,
        config.eval_samples_per_prompt,
        seeds,
        step as u64,
    )
}

/// Runs `total_steps` updates starting from `initial`.
///
/// The task set is consulted only for accuracy evaluation.
pub fn run_training(
    config: &TrainConfig,
    tasks: &TaskSet,
    initial: &TabularPolicy,
    observer: &mut dyn RunObserver,
) -> Result<RunOutput> {
    config.validate()?;
    if initial.shape() != tasks.shape() {
        return Err(Error::ShapeMismatch {
            expected: tasks.shape(),
            found: initial.shape(),
        });
    }
    let seeds = SeedTree::new(config.seed);
    let mut state = TrainState::new(initial.clone(), config);
    let mut log = MetricsLog::default();

    let initial_row = StepMetrics {
        step: 0,
        learning_rate: lr_at(0, config),
        true_accuracy: Some(evaluate(&state.current, tasks, config, &seeds, 0)?),
        ..StepMetrics::default()
    };
    observer.on_metrics(&initial_row)?;
    log.push(initial_row);

    let mut batcher = Batcher::new(tasks.num_prompts(), config.batch_size, seeds);
    for step in 1..=config.total_steps {
        let prompts = batcher.next_batch();
        let result = train_step(&mut state, &prompts, config, &seeds).and_then(|mut row| {
            if step % config.eval_interval == 0 || step == config.total_steps {
                row.true_accuracy = Some(evaluate(&state.current, tasks, config, &seeds, step)?);
            }
            Ok(row)
        });
        let row = result.map_err(|e| e.at_step(step))?;
        observer.on_metrics(&row).map_err(|e| e.at_step(step))?;
        log.push(row);
        observer.on_step_end(&state).map_err(|e| e.at_step(step))?;
    }
    Ok(RunOutput { log, state })
}
