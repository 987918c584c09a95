//! Two independent double-DQN learners sharing one vehicle: a cabin
//! climate agent choosing HVAC modes and an EMS agent choosing engine power
//! increments.

pub mod dqn;
pub mod obs;
pub mod replay;
pub mod reward;
pub mod rollout;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Hyperparameters of one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Gradient updates between target-network copies.
    pub target_sync: u64,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    /// Transitions stored before the first update.
    pub warmup: usize,
    /// Environment steps per gradient update.
    pub update_every: u64,
    /// Gradient-norm clip; non-positive disables clipping.
    pub grad_clip: f64,
    /// Multiplier applied to rewards before they enter the TD target.
    pub reward_scale: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 50_000,
            batch_size: 64,
            buffer_capacity: 100_000,
            target_sync: 500,
            learning_rate: 1e-3,
            hidden: vec![32, 32],
            warmup: 1000,
            update_every: 1,
            grad_clip: 10.0,
            reward_scale: 1.0,
            seed: 1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Validation(format!("gamma must lie in [0,1), got {}", self.gamma)));
        }
        for e in [self.eps_start, self.eps_end] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Validation(format!("epsilon must lie in [0,1], got {e}")));
            }
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(Error::Validation(
                "batch size must be positive and no larger than the buffer".into(),
            ));
        }
        if self.target_sync == 0 || self.update_every == 0 {
            return Err(Error::Validation("target_sync and update_every must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Validation("learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Linearly annealed exploration rate after `step` environment steps.
    pub fn epsilon(&self, step: u64) -> f64 {
        if self.eps_decay_steps == 0 || step >= self.eps_decay_steps {
            return self.eps_end;
        }
        let f = step as f64 / self.eps_decay_steps as f64;
        self.eps_start + (self.eps_end - self.eps_start) * f
    }
}

/// Reward coefficients and episode rules shared by both learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Cabin comfort weight, 1/°C².
    pub alpha1: f64,
    /// Cabin power weight, 1/W.
    pub alpha2: f64,
    /// Fuel weight, s/g.
    pub beta1: f64,
    /// Charge-sustaining weight.
    pub beta2: f64,
    pub soc_ref: f64,
    /// Added to both rewards on the step that violates a constraint.
    pub violation_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha1: 1.0,
            alpha2: 1e-3,
            beta1: 1.0,
            beta2: 350.0,
            soc_ref: 0.7,
            violation_penalty: -50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentsConfig {
    pub cabin: AgentConfig,
    pub ems: AgentConfig,
    pub rewards: RewardConfig,
    pub obs: obs::ObsRanges,
    /// Use independent heater and AC bits instead of three exclusive modes.
    pub cabin_two_bit: bool,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        AgentsConfig {
            cabin: AgentConfig {
                seed: 101,
                ..Default::default()
            },
            ems: AgentConfig {
                seed: 202,
                ..Default::default()
            },
            rewards: RewardConfig::default(),
            obs: obs::ObsRanges::default(),
            cabin_two_bit: false,
        }
    }
}

impl AgentsConfig {
    pub fn cabin_actions(&self) -> usize {
        if self.cabin_two_bit {
            4
        } else {
            3
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cabin.validate()?;
        self.ems.validate()?;
        let r = &self.rewards;
        if [r.alpha1, r.alpha2, r.beta1, r.beta2].iter().any(|c| *c < 0.0) {
            return Err(Error::Validation("reward coefficients must be non-negative".into()));
        }
        if r.violation_penalty > 0.0 {
            return Err(Error::Validation("violation penalty must be non-positive".into()));
        }
        Ok(())
    }
}

/// Heater and AC bits for a cabin action index.
pub fn cabin_modes(action: usize, two_bit: bool) -> (bool, bool) {
    match (action, two_bit) {
        (0, _) => (false, false),
        (1, _) => (true, false),
        (2, _) => (false, true),
        (3, true) => (true, true),
        _ => panic!("cabin action {action} out of range"),
    }
}
