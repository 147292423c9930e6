//! Majority-vote pseudo-labels, binary agreement rewards and group-relative
//! advantages.

use crate::entropy_filter::FilterOutcome;
use crate::error::{Error, Result};
use crate::policy::{Origin, Trajectory};

/// The most frequent answer; ties go to the smallest token id.
pub fn majority_vote(answers: &[usize]) -> Result<usize> {
    let max_token = *answers.iter().max().ok_or(Error::EmptyVote)?;
    let mut counts = vec![0usize; max_token + 1];
    for &a in answers {
        counts[a] += 1;
    }
    let mut best = 0;
    for (token, &count) in counts.iter().enumerate() {
        // strict comparison keeps the earliest (smallest) token on ties
        if count > counts[best] {
            best = token;
        }
    }
    Ok(best)
}

/// `1.0` where the answer agrees with the pseudo-label, `0.0` otherwise.
pub fn binary_rewards(pseudo: usize, answers: &[usize]) -> Vec<f64> {
    answers
        .iter()
        .map(|&a| if a == pseudo { 1.0 } else { 0.0 })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Advantages {
    pub values: Vec<f64>,
    /// Zero reward variance: the group carries no learning signal.
    pub degenerate: bool,
}

/// Standardizes rewards with the population (1/n) standard deviation.
///
/// A group with zero spread gets all-zero advantages and is flagged
/// degenerate. An empty group is degenerate by definition.
pub fn normalize_advantages(rewards: &[f64]) -> Advantages {
    let n = rewards.len();
    if n == 0 {
        return Advantages {
            values: Vec::new(),
            degenerate: true,
        };
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std == 0.0 || rewards.iter().all(|&r| r == rewards[0]) {
        return Advantages {
            values: vec![0.0; n],
            degenerate: true,
        };
    }
    Advantages {
        values: rewards.iter().map(|r| (r - mean) / std).collect(),
        degenerate: false,
    }
}

/// One prompt's pool of rollouts together with everything derived from it.
#[derive(Clone, Debug)]
pub struct RolloutGroup {
    pub prompt_id: usize,
    pub trajectories: Vec<Trajectory>,
    pub keep_mask: Vec<bool>,
    pub pseudo_answer: Option<usize>,
    /// Indices into `trajectories` of the kept Current rollouts; `rewards`
    /// and `advantages` are aligned to this list.
    pub scored: Vec<usize>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub degenerate: bool,
}

impl RolloutGroup {
    pub fn new(prompt_id: usize, trajectories: Vec<Trajectory>) -> Self {
        let keep_mask = vec![true; trajectories.len()];
        Self {
            prompt_id,
            trajectories,
            keep_mask,
            pseudo_answer: None,
            scored: Vec::new(),
            rewards: Vec::new(),
            advantages: Vec::new(),
            degenerate: true,
        }
    }

    pub fn apply_filter(&mut self, outcome: &FilterOutcome) {
        assert_eq!(outcome.keep_mask.len(), self.trajectories.len());
        self.keep_mask.clone_from(&outcome.keep_mask);
    }

    pub fn kept(&self) -> impl Iterator<Item = &Trajectory> + '_ {
        self.trajectories
            .iter()
            .zip(&self.keep_mask)
            .filter_map(|(t, &keep)| keep.then_some(t))
    }

    /// Votes over every kept rollout, then rewards and normalizes the kept
    /// Current rollouts. Momentum rollouts only influence the vote.
    pub fn score(&mut self) {
        let answers: Vec<usize> = self.kept().map(Trajectory::answer).collect();
        self.pseudo_answer = majority_vote(&answers).ok();
        self.scored = (0..self.trajectories.len())
            .filter(|&i| self.keep_mask[i] && self.trajectories[i].origin == Origin::Current)
            .collect();
        let current_answers: Vec<usize> = self
            .scored
            .iter()
            .map(|&i| self.trajectories[i].answer())
            .collect();
        self.rewards = match self.pseudo_answer {
            Some(pseudo) => binary_rewards(pseudo, &current_answers),
            None => Vec::new(),
        };
        let advantages = normalize_advantages(&self.rewards);
        self.advantages = advantages.values;
        self.degenerate = advantages.degenerate;
    }

    pub fn mean_reward(&self) -> Option<f64> {
        (!self.rewards.is_empty()).then(|| self.rewards.iter().sum::<f64>() / self.rewards.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vote_examples() {
        assert_eq!(majority_vote(&[3, 3, 5]).unwrap(), 3);
        assert_eq!(majority_vote(&[2, 7, 7, 2]).unwrap(), 2);
        assert_eq!(majority_vote(&[4]).unwrap(), 4);
        assert!(matches!(majority_vote(&[]), Err(Error::EmptyVote)));
    }

    #[test]
    fn reward_examples() {
        assert_eq!(binary_rewards(3, &[3, 1, 3]), vec![1.0, 0.0, 1.0]);
        assert_eq!(binary_rewards(0, &[0, 0]), vec![1.0, 1.0]);
        assert!(binary_rewards(5, &[]).is_empty());
    }

    #[test]
    fn advantage_examples() {
        let a = normalize_advantages(&[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(a.values, vec![1.0, 1.0, -1.0, -1.0]);
        assert!(!a.degenerate);

        let a = normalize_advantages(&[1.0, 1.0, 1.0]);
        assert_eq!(a.values, vec![0.0; 3]);
        assert!(a.degenerate);

        let a = normalize_advantages(&[1.0, 0.0, 0.0, 0.0]);
        let expected = [1.7321, -0.5774, -0.5774, -0.5774];
        for (x, e) in a.values.iter().zip(expected) {
            assert!((x - e).abs() < 1e-4);
        }
    }

    #[test]
    fn advantages_ignore_reward_offset() {
        let rewards = [0.3, 1.7, -0.2, 0.9, 0.9];
        let shifted: Vec<f64> = rewards.iter().map(|r| r + 12.5).collect();
        let a = normalize_advantages(&rewards);
        let b = normalize_advantages(&shifted);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn single_reward_is_degenerate() {
        let a = normalize_advantages(&[1.0]);
        assert!(a.degenerate);
        assert_eq!(a.values, vec![0.0]);
        assert!(normalize_advantages(&[]).degenerate);
    }
}
