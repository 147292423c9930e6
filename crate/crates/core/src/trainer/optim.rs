//! AdamW (ascent form) and the learning-rate schedule.

use std::f64::consts::PI;

use crate::error::{Error, Result};

use super::config::{Schedule, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl From<&TrainConfig> for AdamWParams {
    fn from(cfg: &TrainConfig) -> Self {
        Self {
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(num_params: usize) -> Self {
        Self {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step: 0,
        }
    }

    /// One AdamW step that *increases* the objective whose gradient is `grad`.
    ///
    /// Weight decay is decoupled and applied to the pre-update parameters.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64], lr: f64, hp: &AdamWParams) -> Result<()> {
        if params.len() != grad.len() || params.len() != self.first_moment.len() {
            return Err(Error::Config(format!(
                "optimizer sizes disagree: params {}, grad {}, state {}",
                params.len(),
                grad.len(),
                self.first_moment.len()
            )));
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient",
                index,
                value: grad[index],
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - hp.beta1.powi(t);
        let bias2 = 1.0 - hp.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
            *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p += lr * m_hat / (v_hat.sqrt() + hp.eps) - lr * hp.weight_decay * *p;
        }
        Ok(())
    }
}

/// Number of linear-warmup steps.
pub fn warmup_steps(cfg: &TrainConfig) -> usize {
    (cfg.warmup_ratio * cfg.total_steps as f64).round() as usize
}

/// Learning rate at `step` in `0..=total_steps`.
///
/// Linear warmup from 0 to the peak, then cosine decay to 0 at `total_steps`.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    let peak = cfg.learning_rate;
    match cfg.schedule {
        Schedule::Constant => peak,
        Schedule::CosineWarmup => {
            let warmup = warmup_steps(cfg);
            let step = step.min(cfg.total_steps);
            if step < warmup {
                peak * step as f64 / warmup as f64
            } else if cfg.total_steps == warmup {
                peak
            } else {
                let progress = (step - warmup) as f64 / (cfg.total_steps - warmup) as f64;
                peak * 0.5 * (1.0 + (PI * progress).cos())
            }
        }
    }
}
