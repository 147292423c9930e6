use mgrpo_core::env::{generate_tasks, EnvConfig, TaskSet};
use mgrpo_core::metrics::MetricsLog;
use mgrpo_core::policy::{Origin, TabularPolicy};
use mgrpo_core::rng::SeedTree;
use mgrpo_core::trainer::{build_group, run_training, train_step, Mode, TrainConfig, TrainState};

fn small_env() -> EnvConfig {
    EnvConfig {
        num_prompts: 24,
        vocab_size: 5,
        seq_len: 3,
        ..EnvConfig::default()
    }
}

fn setup(seed: u64) -> (TaskSet, TabularPolicy) {
    generate_tasks(&small_env(), seed).unwrap()
}

fn config(mode: Mode, steps: usize) -> TrainConfig {
    TrainConfig {
        mode,
        total_rollouts: 16,
        batch_size: 6,
        total_steps: steps,
        eval_interval: 5,
        eval_samples_per_prompt: 4,
        learning_rate: 0.1,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn jsonl(log: &MetricsLog) -> Vec<u8> {
    let mut buf = Vec::new();
    log.write_jsonl(&mut buf).unwrap();
    buf
}

#[test]
fn single_prompt_batch_is_degenerate_or_not_as_a_whole() {
    let (_, initial) = setup(1);
    let cfg = TrainConfig { batch_size: 1, ..config(Mode::MgrpoIqr, 1) };
    let seeds = SeedTree::new(cfg.seed);
    for prompt in 0..8 {
        let mut state = TrainState::new(initial.clone(), &cfg);
        let row = train_step(&mut state, &[prompt], &cfg, &seeds).unwrap();
        let group = build_group(&TrainState::new(initial.clone(), &cfg), prompt, 1, &cfg, &seeds).unwrap();
        let expected = if group.group.degenerate { 1.0 } else { 0.0 };
        assert_eq!(row.degenerate_group_fraction, Some(expected));
    }
}

#[test]
fn one_step_moves_momentum_by_one_percent() {
    let (_, initial) = setup(2);
    let cfg = TrainConfig { warmup_ratio: 0.0, ..config(Mode::MgrpoIqr, 100) };
    let seeds = SeedTree::new(cfg.seed);
    let mut state = TrainState::new(initial.clone(), &cfg);
    train_step(&mut state, &[0, 1, 2, 3, 4, 5], &cfg, &seeds).unwrap();
    let momentum = state.momentum.as_ref().unwrap();
    assert_ne!(state.current, initial);
    for ((k, old), new) in momentum.logits().iter().zip(initial.logits()).zip(state.current.logits()) {
        assert!((k - (0.99 * old + 0.01 * new)).abs() < 1e-12);
    }
}

#[test]
fn modes_share_their_current_rollout_prefix() {
    let (_, initial) = setup(3);
    let seeds = SeedTree::new(5);
    let iqr = config(Mode::MgrpoIqr, 1);
    let srt = config(Mode::SrtBaseline, 1);
    for prompt in 0..4 {
        let a = build_group(&TrainState::new(initial.clone(), &iqr), prompt, 1, &iqr, &seeds).unwrap();
        let b = build_group(&TrainState::new(initial.clone(), &srt), prompt, 1, &srt, &seeds).unwrap();
        let current: Vec<_> = a.group.trajectories.iter().filter(|t| t.origin == Origin::Current).collect();
        assert_eq!(current.len(), iqr.current_rollouts());
        assert!(b.group.trajectories.iter().all(|t| t.origin == Origin::Current));
        for (x, y) in current.iter().zip(&b.group.trajectories) {
            assert_eq!(x.tokens, y.tokens);
        }
    }
}

#[test]
fn nofilter_without_momentum_rollouts_reduces_to_self_training() {
    let (tasks, initial) = setup(4);
    let srt = config(Mode::SrtBaseline, 12);
    let nofilter = TrainConfig { mode: Mode::MgrpoNofilter, momentum_rollouts: Some(0), ..srt.clone() };
    let a = run_training(&srt, &tasks, &initial, &mut ()).unwrap();
    let b = run_training(&nofilter, &tasks, &initial, &mut ()).unwrap();
    assert_eq!(a.state.current, b.state.current);
    assert_eq!(a.log, b.log);
}

#[test]
fn momentum_trails_current_within_geometric_bound() {
    let (tasks, initial) = setup(5);
    let cfg = config(Mode::MgrpoIqr, 20);
    let seeds = SeedTree::new(cfg.seed);
    let mut state = TrainState::new(initial.clone(), &cfg);
    let mut batcher = mgrpo_core::trainer::Batcher::new(tasks.num_prompts(), cfg.batch_size, seeds);
    let mut bound = 0.0;
    for _ in 0..cfg.total_steps {
        let before = state.current.clone();
        train_step(&mut state, &batcher.next_batch(), &cfg, &seeds).unwrap();
        let moved = before
            .logits()
            .iter()
            .zip(state.current.logits())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // ||k_t - q_t|| <= m (||k_{t-1} - q_{t-1}|| + ||q_t - q_{t-1}||)
        bound = cfg.momentum * (bound + moved);
        let gap = state
            .momentum
            .as_ref()
            .unwrap()
            .logits()
            .iter()
            .zip(state.current.logits())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap <= bound + 1e-12, "gap {gap} exceeds bound {bound}");
    }
}

#[test]
fn zero_steps_logs_only_the_initial_evaluation() {
    let (tasks, initial) = setup(6);
    let out = run_training(&config(Mode::MgrpoIqr, 0), &tasks, &initial, &mut ()).unwrap();
    assert_eq!(out.log.rows.len(), 1);
    assert_eq!(out.log.rows[0].step, 0);
    assert!(out.log.rows[0].true_accuracy.is_some());
    assert_eq!(out.state.current, initial);
}

#[test]
fn runs_are_deterministic() {
    let (tasks, initial) = setup(7);
    for mode in Mode::ALL {
        let cfg = config(mode, 15);
        let a = run_training(&cfg, &tasks, &initial, &mut ()).unwrap();
        let b = run_training(&cfg, &tasks, &initial, &mut ()).unwrap();
        assert_eq!(jsonl(&a.log), jsonl(&b.log));
        assert_eq!(a.state, b.state);
        assert_eq!(a.log.rows.len(), 16);
        assert!(a.log.last().unwrap().true_accuracy.is_some());
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let (tasks, initial) = setup(8);
    let cfg = config(Mode::MgrpoIqr, 15);
    let run_with = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_training(&cfg, &tasks, &initial, &mut ()).unwrap())
    };
    let (serial, parallel) = (run_with(1), run_with(4));
    assert_eq!(jsonl(&serial.log), jsonl(&parallel.log));
    assert_eq!(serial.state, parallel.state);
}
