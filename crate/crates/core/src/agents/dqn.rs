use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::obs::{Observation, OBS_DIM};
use super::replay::{ReplayBuffer, Transition};
use super::AgentConfig;
use crate::nn::{adam_step, argmax, AdamState, Gradients, Loss, Mlp, OutputActivation};
use crate::{Error, Result};

/// Epsilon-greedy choice: uniform with probability `eps`, else the greedy
/// action with ties going to the lowest index.
pub fn select_action(net: &Mlp, obs: &[f64], eps: f64, rng: &mut impl Rng) -> Result<usize> {
    if eps > 0.0 && rng.random::<f64>() < eps {
        return Ok(rng.random_range(0..net.output_size()));
    }
    Ok(argmax(&net.forward(obs)?))
}

/// One double-DQN step on `batch`; returns the mean squared TD error.
pub fn td_update(
    online: &mut Mlp,
    target: &Mlp,
    batch: &[Transition],
    gamma: f64,
    reward_scale: f64,
    grad_clip: f64,
    adam: &mut AdamState,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Argument("td_update needs a non-empty batch".into()));
    }
    let mut grads = Gradients::zeros_like(online);
    let mut loss = 0.0;
    for t in batch {
        let y = td_target(online, target, t, gamma, reward_scale)?;
        loss += online.accumulate_backward(&t.obs, Loss::SquaredError(&[(t.action, y)]), &mut grads)?;
    }
    let n = batch.len() as f64;
    loss /= n;
    grads.scale(1.0 / n);
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::Training(format!(
            "non-finite TD loss {loss} (gradient norm {})",
            grads.norm()
        )));
    }
    if grad_clip > 0.0 {
        let norm = grads.norm();
        if norm > grad_clip {
            grads.scale(grad_clip / norm);
        }
    }
    adam_step(online, &grads, adam);
    Ok(loss)
}

/// Double-Q bootstrap target: the online net picks, the target net values.
pub fn td_target(
    online: &Mlp,
    target: &Mlp,
    t: &Transition,
    gamma: f64,
    reward_scale: f64,
) -> Result<f64> {
    let r = reward_scale * t.reward;
    if t.terminal || gamma == 0.0 {
        return Ok(r);
    }
    let a_star = argmax(&online.forward(&t.next_obs)?);
    Ok(r + gamma * target.forward(&t.next_obs)?[a_star])
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub cfg: AgentConfig,
    pub online: Mlp,
    pub target: Mlp,
    pub adam: AdamState,
    pub buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    /// Transitions observed so far; drives the exploration schedule.
    pub steps: u64,
    pub updates: u64,
    pub last_loss: Option<f64>,
}

impl DqnAgent {
    pub fn new(cfg: &AgentConfig, n_actions: usize) -> Result<Self> {
        cfg.validate()?;
        let mut sizes = vec![OBS_DIM];
        sizes.extend(&cfg.hidden);
        sizes.push(n_actions);
        let online = Mlp::new(&sizes, OutputActivation::Identity, cfg.seed)?;
        Ok(DqnAgent {
            cfg: cfg.clone(),
            target: online.clone(),
            adam: AdamState::new(&online, cfg.learning_rate),
            online,
            buffer: ReplayBuffer::new(cfg.buffer_capacity, cfg.seed ^ 0x5eed_0001),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0002),
            steps: 0,
            updates: 0,
            last_loss: None,
        })
    }

    /// Wraps trained weights for evaluation.
    pub fn from_network(cfg: &AgentConfig, net: Mlp) -> Result<Self> {
        let mut a = Self::new(cfg, net.output_size())?;
        if net.input_size() != OBS_DIM {
            return Err(Error::Format(format!(
                "Q-network expects {} inputs, observations have {OBS_DIM}",
                net.input_size()
            )));
        }
        a.target = net.clone();
        a.online = net;
        Ok(a)
    }

    pub fn n_actions(&self) -> usize {
        self.online.output_size()
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.epsilon(self.steps)
    }

    /// Exploring action in training, greedy action otherwise.
    pub fn act(&mut self, obs: &Observation, explore: bool) -> Result<usize> {
        let eps = if explore { self.epsilon() } else { 0.0 };
        select_action(&self.online, obs, eps, &mut self.rng)
    }

    pub fn q_values(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.online.forward(obs)
    }

    /// Stores a transition and performs the scheduled update and target sync.
    pub fn observe(&mut self, t: Transition) -> Result<Option<f64>> {
        if t.action >= self.n_actions() {
            return Err(Error::Argument(format!(
                "action {} outside a space of {}",
                t.action,
                self.n_actions()
            )));
        }
        self.buffer.push(t);
        self.steps += 1;
        if self.buffer.len() < self.cfg.warmup.max(self.cfg.batch_size)
            || self.steps % self.cfg.update_every != 0
        {
            return Ok(None);
        }
        let batch = self.buffer.sample(self.cfg.batch_size);
        let loss = td_update(
            &mut self.online,
            &self.target,
            &batch,
            self.cfg.gamma,
            self.cfg.reward_scale,
            self.cfg.grad_clip,
            &mut self.adam,
        )?;
        self.updates += 1;
        if self.updates % self.cfg.target_sync == 0 {
            self.sync_target();
        }
        self.last_loss = Some(loss);
        Ok(Some(loss))
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }
}
