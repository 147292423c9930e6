use serde::{Deserialize, Serialize};

use crate::entropy_filter::FilterConfig;
use crate::error::{Error, Result};
use crate::policy::EntropyAggregation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    /// Momentum-anchored pool with IQR entropy filtering.
    MgrpoIqr,
    /// Momentum-anchored pool, no filtering.
    MgrpoNofilter,
    /// Plain self-training: current rollouts only, no momentum model.
    SrtBaseline,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::MgrpoIqr, Mode::MgrpoNofilter, Mode::SrtBaseline];

    pub fn name(self) -> &'static str {
        match self {
            Mode::MgrpoIqr => "MGRPO_IQR",
            Mode::MgrpoNofilter => "MGRPO_NOFILTER",
            Mode::SrtBaseline => "SRT_BASELINE",
        }
    }

    pub fn uses_momentum(self) -> bool {
        !matches!(self, Mode::SrtBaseline)
    }

    pub fn uses_filter(self) -> bool {
        matches!(self, Mode::MgrpoIqr)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown mode `{s}` (expected one of MGRPO_IQR, MGRPO_NOFILTER, SRT_BASELINE)"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    CosineWarmup,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Rollouts per prompt, G = M + N.
    pub total_rollouts: usize,
    /// N; `None` means G / 4. Ignored (forced to 0) in SRT_BASELINE.
    pub momentum_rollouts: Option<usize>,
    /// EMA coefficient m of the momentum model.
    pub momentum: f64,
    pub filter: FilterConfig,
    pub entropy_aggregation: EntropyAggregation,
    pub train_temperature: f64,
    /// Sampling temperature for momentum rollouts; `None` uses `train_temperature`.
    pub momentum_temperature: Option<f64>,
    pub eval_temperature: f64,
    pub eval_samples_per_prompt: usize,
    /// Evaluate true accuracy every this many steps (and at the last step).
    pub eval_interval: usize,
    /// Prompts per step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub schedule: Schedule,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub kl_coefficient: f64,
    pub total_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::MgrpoIqr,
            total_rollouts: 32,
            momentum_rollouts: None,
            momentum: 0.99,
            filter: FilterConfig::default(),
            entropy_aggregation: EntropyAggregation::Mean,
            train_temperature: 1.1,
            momentum_temperature: None,
            eval_temperature: 0.8,
            eval_samples_per_prompt: 8,
            eval_interval: 10,
            batch_size: 8,
            learning_rate: 0.05,
            warmup_ratio: 0.1,
            schedule: Schedule::CosineWarmup,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            kl_coefficient: 0.005,
            total_steps: 400,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// N, the momentum rollouts per prompt in this mode.
    pub fn momentum_rollouts(&self) -> usize {
        if self.mode.uses_momentum() {
            self.momentum_rollouts.unwrap_or(self.total_rollouts / 4)
        } else {
            0
        }
    }

    /// M, the current-policy rollouts per prompt in this mode.
    pub fn current_rollouts(&self) -> usize {
        self.total_rollouts - self.momentum_rollouts()
    }

    pub fn momentum_temperature(&self) -> f64 {
        self.momentum_temperature.unwrap_or(self.train_temperature)
    }

    /// Filter settings in effect for this mode.
    pub fn effective_filter(&self) -> FilterConfig {
        FilterConfig {
            enabled: self.filter.enabled && self.mode.uses_filter(),
            ..self.filter.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.total_rollouts == 0 {
            return fail("total_rollouts must be >= 1".into());
        }
        if self.momentum_rollouts() >= self.total_rollouts {
            return fail(format!(
                "momentum_rollouts ({}) must be < total_rollouts ({})",
                self.momentum_rollouts(),
                self.total_rollouts
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must be in [0, 1) (got {})", self.momentum));
        }
        self.filter.validate()?;
        for (name, t) in [
            ("train_temperature", self.train_temperature),
            ("momentum_temperature", self.momentum_temperature()),
            ("eval_temperature", self.eval_temperature),
        ] {
            if !(t > 0.0 && t.is_finite()) {
                return fail(format!("{name} must be finite and > 0 (got {t})"));
            }
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.eval_samples_per_prompt == 0 || self.eval_interval == 0 {
            return fail("eval_samples_per_prompt and eval_interval must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return fail(format!("warmup_ratio must be in [0, 1] (got {})", self.warmup_ratio));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be finite and >= 0 (got {})", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("adam betas must be in [0, 1)".into());
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return fail(format!("adam_eps must be > 0 (got {})", self.adam_eps));
        }
        if [self.weight_decay, self.kl_coefficient].iter().any(|x| x.is_nan() || *x < 0.0) {
            return fail("weight_decay and kl_coefficient must be >= 0".into());
        }
        Ok(())
    }
}
