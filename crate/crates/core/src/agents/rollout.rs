//! One episode over a drive cycle with both learners (or rule-based
//! stand-ins) in the loop.

use serde::{Deserialize, Serialize};

use super::dqn::DqnAgent;
use super::obs::{build_obs_cab, build_obs_ems, ObsRanges, Observation};
use super::replay::Transition;
use super::reward::{reward_cab, reward_ems};
use super::{cabin_modes, RewardConfig};
use crate::control::{apply_ems_action, baseline_ems, BaselineEmsConfig, EmsLimits, EMS_ACTIONS, EMS_HOLD};
use crate::cycles::DriveCycle;
use crate::plant::{vehicle, Actions, Plant};
use crate::recognizer::SlidingRecognizer;
use crate::report::{aggregate, AggregateConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Explore, store transitions and update the networks.
    Train,
    /// Greedy actions, no learning.
    Eval,
}

pub enum CabinPolicy<'a> {
    Agent(&'a mut DqnAgent),
    /// Cool above the setpoint, heat more than 1 °C below it.
    Thermostat,
    Off,
}

pub enum EmsPolicy<'a> {
    Agent(&'a mut DqnAgent),
    Baseline(&'a BaselineEmsConfig),
    /// Engine always on, tracking the ring power demand plus the auxiliary load.
    Naive,
}

/// Per-step record; state columns are taken at the start of the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_s: f64,
    pub speed_mps: f64,
    pub accel_mps2: f64,
    pub label: usize,
    pub cab_action: i32,
    pub ems_action: i32,
    pub p_ice_w: f64,
    pub fuel_g_s: f64,
    pub fuel_cum_g: f64,
    pub p_tm_w: f64,
    pub p_hvac_w: f64,
    pub p_bat_w: f64,
    pub soc: f64,
    pub soh: f64,
    pub t_bat_c: f64,
    pub t_coolant_c: f64,
    pub t_cabin_c: f64,
    pub soc_end: f64,
    pub soh_end: f64,
    pub r_cab: f64,
    pub r_ems: f64,
    pub traction_violation: bool,
    pub power_limited: bool,
    pub hvac_conflict: bool,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub cycle: String,
    pub steps: usize,
    pub fuel_g: f64,
    pub tm_energy_wh: f64,
    pub soc_initial: f64,
    pub soc_final: f64,
    pub soh_loss: f64,
    pub mean_abs_cab_error_c: f64,
    pub comfort_fraction: f64,
    pub traction_violations: usize,
    pub power_limit_events: usize,
    pub hvac_conflicts: usize,
    pub terminated: bool,
    pub return_cab: f64,
    pub return_ems: f64,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub metrics: EpisodeMetrics,
    pub trace: Vec<TraceRow>,
    pub cab_transitions: Vec<Transition>,
    pub ems_transitions: Vec<Transition>,
}

/// Fixed inputs of an episode.
#[derive(Debug, Clone)]
pub struct EpisodeSetup<'a> {
    pub cycle: &'a DriveCycle,
    /// Driving-condition label per cycle sample.
    pub labels: &'a [usize],
    pub dc_enabled: bool,
    pub mode: Mode,
    pub rewards: &'a RewardConfig,
    pub obs: &'a ObsRanges,
    pub cabin_two_bit: bool,
    pub aggregate: &'a AggregateConfig,
    /// Keep every transition in the returned episode.
    pub keep_transitions: bool,
}

/// Labels the recognizer emits while the cycle streams past; all zero
/// without a recognizer.
pub fn label_sequence(recognizer: Option<&mut SlidingRecognizer>, cycle: &DriveCycle) -> Vec<usize> {
    match recognizer {
        Some(r) => {
            r.reset();
            cycle.speed.iter().map(|v| r.recognize_step(*v)).collect()
        }
        None => vec![0; cycle.len()],
    }
}

pub fn rollout_episode(
    setup: &EpisodeSetup<'_>,
    plant: &mut Plant,
    mut cabin: CabinPolicy<'_>,
    mut ems: EmsPolicy<'_>,
) -> Result<Episode> {
    let cycle = setup.cycle;
    let n = cycle.len();
    if n < 2 {
        return Err(Error::Argument(format!("cycle {} has fewer than 2 samples", cycle.name)));
    }
    if setup.labels.len() != n {
        return Err(Error::Argument(format!(
            "{} labels for a cycle of {n} samples",
            setup.labels.len()
        )));
    }
    let dt = cycle.dt;
    let train = setup.mode == Mode::Train;
    let limits = EmsLimits::from(&plant.params.powertrain.engine);
    let setpoint = plant.params.hvac.setpoint_c;
    plant.reset();
    let soc0 = plant.state.battery.soc;
    let mut last_ems = EMS_HOLD;

    let obs_at = |plant: &Plant, i: usize, last_ems: usize| -> (Observation, Observation) {
        let v = cycle.speed[i];
        let a = cycle.accel(i);
        let label = setup.labels[i];
        let s = &plant.state;
        (
            build_obs_cab(s.t_cabin_c, v, a, label, setup.dc_enabled, setup.obs),
            build_obs_ems(
                s.battery.soc,
                soc0,
                v,
                a,
                last_ems,
                EMS_ACTIONS,
                label,
                setup.dc_enabled,
                setup.obs,
            ),
        )
    };

    let mut trace = Vec::with_capacity(n - 1);
    let mut cab_transitions = Vec::new();
    let mut ems_transitions = Vec::new();
    let (mut obs_c, mut obs_e) = obs_at(plant, 0, last_ems);

    for i in 0..n - 1 {
        let v = cycle.speed[i];
        let a = cycle.accel(i);
        let v_mid = 0.5 * (v + cycle.speed[i + 1]);
        let grade = cycle.grade[i];
        let t_cab = plant.state.t_cabin_c;

        let cab_action: i32 = match &mut cabin {
            CabinPolicy::Agent(agent) => agent.act(&obs_c, train)? as i32,
            CabinPolicy::Thermostat => {
                if t_cab >= setpoint {
                    2
                } else if t_cab < setpoint - 1.0 {
                    1
                } else {
                    0
                }
            }
            CabinPolicy::Off => 0,
        };
        let (heat, cool) = cabin_modes(cab_action as usize, setup.cabin_two_bit);

        let p_prev = plant.state.p_ice_w;
        let (ems_action, p_ice): (i32, f64) = match &mut ems {
            EmsPolicy::Agent(agent) => {
                let act = agent.act(&obs_e, train)?;
                (act as i32, apply_ems_action(p_prev, act, &limits))
            }
            EmsPolicy::Baseline(cfg) => {
                let act = baseline_ems(plant.state.battery.soc, p_prev, cfg, &limits);
                (act as i32, apply_ems_action(p_prev, act, &limits))
            }
            EmsPolicy::Naive => {
                let d = vehicle::demand(v_mid, a, grade, &plant.params.vehicle);
                let p = d.ring_power_w + plant.params.powertrain.aux_power_w;
                (-1, p.clamp(limits.min_on_w, limits.max_w))
            }
        };

        let start = plant.state;
        let out = plant.step(v_mid, a, grade, Actions { p_ice_w: p_ice, heat, cool }, dt)?;
        let s = plant.state;

        let terminal = out.soc_violation;
        let penalty = if terminal { setup.rewards.violation_penalty } else { 0.0 };
        let r = setup.rewards;
        let r_cab = reward_cab(s.t_cabin_c - setpoint, out.hvac.electric_w(), r.alpha1, r.alpha2) + penalty;
        let r_ems = reward_ems(out.fuel_g_s, s.battery.soc, r.beta1, r.beta2, r.soc_ref) + penalty;

        if ems_action >= 0 {
            last_ems = ems_action as usize;
        }
        let (next_c, next_e) = obs_at(plant, i + 1, last_ems);
        let tc = Transition {
            obs: obs_c,
            action: cab_action as usize,
            reward: r_cab,
            next_obs: next_c,
            terminal,
        };
        let te = Transition {
            obs: obs_e,
            action: ems_action.max(0) as usize,
            reward: r_ems,
            next_obs: next_e,
            terminal,
        };
        if train {
            if let CabinPolicy::Agent(agent) = &mut cabin {
                agent.observe(tc)?;
            }
            if let EmsPolicy::Agent(agent) = &mut ems {
                agent.observe(te)?;
            }
        }
        if setup.keep_transitions {
            cab_transitions.push(tc);
            ems_transitions.push(te);
        }

        trace.push(TraceRow {
            t_s: i as f64 * dt,
            speed_mps: v,
            accel_mps2: a,
            label: setup.labels[i],
            cab_action,
            ems_action,
            p_ice_w: p_ice,
            fuel_g_s: out.fuel_g_s,
            fuel_cum_g: start.fuel_g,
            p_tm_w: out.p_tm_w,
            p_hvac_w: out.hvac.electric_w(),
            p_bat_w: out.bus.pack_w,
            soc: start.battery.soc,
            soh: start.battery.soh,
            t_bat_c: start.battery.temp_c,
            t_coolant_c: start.t_coolant_c,
            t_cabin_c: start.t_cabin_c,
            soc_end: s.battery.soc,
            soh_end: s.battery.soh,
            r_cab,
            r_ems,
            traction_violation: out.traction_violation(),
            power_limited: out.power_limited,
            hvac_conflict: out.hvac.conflict,
            terminal,
        });
        obs_c = next_c;
        obs_e = next_e;
        if terminal {
            break;
        }
    }

    let mut metrics = aggregate(&trace, dt, setpoint, setup.aggregate)?;
    metrics.cycle = cycle.name.clone();
    Ok(Episode {
        metrics,
        trace,
        cab_transitions,
        ems_transitions,
    })
}
