//! Round-robin training of both learners with periodic greedy evaluation.

use serde::{Deserialize, Serialize};

use super::dqn::DqnAgent;
use super::rollout::{rollout_episode, CabinPolicy, EmsPolicy, EpisodeMetrics, EpisodeSetup, Mode};
use super::AgentsConfig;
use crate::control::EMS_ACTIONS;
use crate::cycles::DriveCycle;
use crate::nn::Mlp;
use crate::plant::Plant;
use crate::report::AggregateConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Episodes between greedy evaluations on the validation cycle.
    pub eval_every: usize,
    /// A TD loss above this value at an evaluation counts toward divergence.
    pub divergence_loss: f64,
    pub divergence_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 90,
            eval_every: 5,
            divergence_loss: 1e6,
            divergence_patience: 3,
        }
    }
}

/// A cycle together with the condition label of every sample.
#[derive(Debug, Clone)]
pub struct LabeledCycle {
    pub cycle: DriveCycle,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub cycle: String,
    pub steps: usize,
    pub epsilon_cab: f64,
    pub epsilon_ems: f64,
    pub return_cab: f64,
    pub return_ems: f64,
    pub fuel_g: f64,
    pub tm_energy_wh: f64,
    pub soc_final: f64,
    pub loss_cab: f64,
    pub loss_ems: f64,
    /// Combined greedy return on the validation cycle, when evaluated.
    pub eval_return: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub cabin_final: Mlp,
    pub ems_final: Mlp,
    pub cabin_best: Mlp,
    pub ems_best: Mlp,
    pub best_episode: Option<usize>,
    pub best_eval_return: Option<f64>,
    pub curves: Vec<CurveRow>,
}

/// Greedy episode with fixed networks.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy(
    plant: &mut Plant,
    cfg: &AgentsConfig,
    cabin: &Mlp,
    ems: &Mlp,
    cycle: &LabeledCycle,
    dc_enabled: bool,
    agg: &AggregateConfig,
) -> Result<super::rollout::Episode> {
    let mut cab = DqnAgent::from_network(&cfg.cabin, cabin.clone())?;
    let mut em = DqnAgent::from_network(&cfg.ems, ems.clone())?;
    let setup = EpisodeSetup {
        cycle: &cycle.cycle,
        labels: &cycle.labels,
        dc_enabled,
        mode: Mode::Eval,
        rewards: &cfg.rewards,
        obs: &cfg.obs,
        cabin_two_bit: cfg.cabin_two_bit,
        aggregate: agg,
        keep_transitions: false,
    };
    rollout_episode(&setup, plant, CabinPolicy::Agent(&mut cab), EmsPolicy::Agent(&mut em))
}

fn score(m: &EpisodeMetrics) -> f64 {
    m.return_cab + m.return_ems
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    plant: &mut Plant,
    cfg: &AgentsConfig,
    tcfg: &TrainConfig,
    cycles: &[LabeledCycle],
    validation: Option<&LabeledCycle>,
    dc_enabled: bool,
    agg: &AggregateConfig,
    mut progress: impl FnMut(&CurveRow),
) -> Result<TrainOutcome> {
    if tcfg.episodes == 0 {
        return Err(Error::Argument("training needs at least one episode".into()));
    }
    if cycles.is_empty() {
        return Err(Error::Argument("training needs at least one cycle".into()));
    }
    cfg.validate()?;
    let mut cab = DqnAgent::new(&cfg.cabin, cfg.cabin_actions())?;
    let mut ems = DqnAgent::new(&cfg.ems, EMS_ACTIONS)?;
    let mut curves = Vec::with_capacity(tcfg.episodes);
    let mut best: Option<(f64, usize, Mlp, Mlp)> = None;
    let mut strikes = 0;

    for ep in 0..tcfg.episodes {
        let lc = &cycles[ep % cycles.len()];
        let setup = EpisodeSetup {
            cycle: &lc.cycle,
            labels: &lc.labels,
            dc_enabled,
            mode: Mode::Train,
            rewards: &cfg.rewards,
            obs: &cfg.obs,
            cabin_two_bit: cfg.cabin_two_bit,
            aggregate: agg,
            keep_transitions: false,
        };
        let episode =
            rollout_episode(&setup, plant, CabinPolicy::Agent(&mut cab), EmsPolicy::Agent(&mut ems))?;
        let m = &episode.metrics;
        let mut row = CurveRow {
            episode: ep,
            cycle: m.cycle.clone(),
            steps: m.steps,
            epsilon_cab: cab.epsilon(),
            epsilon_ems: ems.epsilon(),
            return_cab: m.return_cab,
            return_ems: m.return_ems,
            fuel_g: m.fuel_g,
            tm_energy_wh: m.tm_energy_wh,
            soc_final: m.soc_final,
            loss_cab: cab.last_loss.unwrap_or(f64::NAN),
            loss_ems: ems.last_loss.unwrap_or(f64::NAN),
            eval_return: None,
        };

        let due = tcfg.eval_every > 0 && ((ep + 1) % tcfg.eval_every == 0 || ep + 1 == tcfg.episodes);
        if due {
            let worst = row.loss_cab.max(row.loss_ems);
            if worst > tcfg.divergence_loss {
                strikes += 1;
                if strikes >= tcfg.divergence_patience {
                    return Err(Error::Training(format!(
                        "TD loss {worst:.3e} above {:.3e} at {strikes} consecutive evaluations \
                         (episode {ep}, cabin loss {:.3e}, EMS loss {:.3e})",
                        tcfg.divergence_loss, row.loss_cab, row.loss_ems
                    )));
                }
            } else {
                strikes = 0;
            }
            if let Some(val) = validation {
                let e = evaluate_policy(plant, cfg, &cab.online, &ems.online, val, dc_enabled, agg)?;
                let s = score(&e.metrics);
                row.eval_return = Some(s);
                if best.as_ref().is_none_or(|b| s > b.0) {
                    best = Some((s, ep, cab.online.clone(), ems.online.clone()));
                }
            }
        }
        progress(&row);
        curves.push(row);
    }

    let (best_eval_return, best_episode, cabin_best, ems_best) = match best {
        Some((s, ep, c, e)) => (Some(s), Some(ep), c, e),
        None => (None, None, cab.online.clone(), ems.online.clone()),
    };
    Ok(TrainOutcome {
        cabin_final: cab.online,
        ems_final: ems.online,
        cabin_best,
        ems_best,
        best_episode,
        best_eval_return,
        curves,
    })
}
