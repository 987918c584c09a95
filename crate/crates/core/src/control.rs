//! Low-level controllers supervised by the agents: PID cabin climate,
//! engine power increments, the battery cooling rule and a rule-based EMS.

use serde::{Deserialize, Serialize};

use crate::plant::params::{CabinThermalParams, EngineMap, EngineThermalParams};
use crate::plant::thermal::heater_core_available;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HvacParams {
    pub setpoint_c: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Bound on the integral accumulator, °C·s.
    pub integral_limit: f64,
}

impl Default for HvacParams {
    fn default() -> Self {
        HvacParams {
            setpoint_c: 22.0,
            kp: 400.0,
            ki: 10.0,
            kd: 0.0,
            integral_limit: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidController {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral: f64,
    pub integral_limit: f64,
    pub prev_error: Option<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl PidController {
    pub fn new(kp: f64, ki: f64, kd: f64, integral_limit: f64, lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "PID output limits out of order");
        PidController {
            kp,
            ki,
            kd,
            integral: 0.0,
            integral_limit: integral_limit.abs(),
            prev_error: None,
            lo,
            hi,
        }
    }

    /// Clamped integral plus conditional integration: the accumulator does
    /// not grow while the output is saturated in the direction of the error.
    pub fn step(&mut self, error: f64, dt: f64) -> f64 {
        let deriv = match self.prev_error {
            Some(prev) if dt > 0.0 => (error - prev) / dt,
            _ => 0.0,
        };
        self.prev_error = Some(error);
        let candidate =
            (self.integral + error * dt).clamp(-self.integral_limit, self.integral_limit);
        let out = self.kp * error + self.ki * candidate + self.kd * deriv;
        let pushing_high = out > self.hi && error > 0.0;
        let pushing_low = out < self.lo && error < 0.0;
        if !(pushing_high || pushing_low) {
            self.integral = candidate;
        }
        (self.kp * error + self.ki * self.integral + self.kd * deriv).clamp(self.lo, self.hi)
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = None;
    }
}

/// Heater and AC loops of the cabin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HvacPids {
    pub heater: PidController,
    pub ac: PidController,
}

impl HvacPids {
    pub fn new(h: &HvacParams, cabin: &CabinThermalParams, engine: &EngineThermalParams) -> Self {
        let heat_cap = engine.heater_core_max_w + cabin.electric_heater_max_w;
        HvacPids {
            heater: PidController::new(h.kp, h.ki, h.kd, h.integral_limit, 0.0, heat_cap),
            ac: PidController::new(h.kp, h.ki, h.kd, h.integral_limit, 0.0, cabin.ac_capacity_w),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HvacCommand {
    /// Heat into the cabin (negative when cooling).
    pub q_hvac_w: f64,
    /// Portion of the heating drawn from the engine coolant.
    pub q_core_w: f64,
    pub heater_electric_w: f64,
    pub ac_electric_w: f64,
    pub blower_w: f64,
    /// Both modes requested; the heater won.
    pub conflict: bool,
}

impl HvacCommand {
    pub fn electric_w(&self) -> f64 {
        self.heater_electric_w + self.ac_electric_w + self.blower_w
    }
}

/// Converts the binary heater and AC modes into heat flow and electric load.
/// The integral of an inactive loop is held.
#[allow(clippy::too_many_arguments)]
pub fn hvac_actuate(
    t_cab: f64,
    t_cl: f64,
    heat: bool,
    cool: bool,
    pids: &mut HvacPids,
    h: &HvacParams,
    cabin: &CabinThermalParams,
    engine: &EngineThermalParams,
    dt: f64,
) -> HvacCommand {
    let mut cmd = HvacCommand {
        conflict: heat && cool,
        ..Default::default()
    };
    if heat {
        let request = pids.heater.step(h.setpoint_c - t_cab, dt);
        let core = request.min(heater_core_available(t_cl, engine));
        let electric_heat = (request - core).min(cabin.electric_heater_max_w);
        cmd.q_core_w = core;
        cmd.q_hvac_w = core + electric_heat;
        cmd.heater_electric_w = electric_heat / cabin.electric_heater_eff;
        cmd.blower_w = cabin.blower_w;
    } else if cool {
        let q = pids.ac.step(t_cab - h.setpoint_c, dt);
        cmd.q_hvac_w = -q;
        cmd.ac_electric_w = q / cabin.ac_cop;
        cmd.blower_w = cabin.blower_w;
    }
    cmd
}

/// Engine power increments per EMS action, W; the last action turns the engine off.
pub const EMS_DELTAS: [f64; 8] = [10e3, 5e3, 1e3, 500.0, 0.0, -1e3, -5e3, f64::NAN];
pub const EMS_ACTIONS: usize = 8;
pub const EMS_HOLD: usize = 4;
pub const EMS_OFF: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmsLimits {
    pub min_on_w: f64,
    pub max_w: f64,
}

impl From<&EngineMap> for EmsLimits {
    fn from(m: &EngineMap) -> Self {
        EmsLimits {
            min_on_w: m.min_on_power_w,
            max_w: m.max_power_w,
        }
    }
}

/// Next engine power command after action `action` (0-based).
pub fn apply_ems_action(p_prev: f64, action: usize, limits: &EmsLimits) -> f64 {
    assert!(action < EMS_ACTIONS, "EMS action {action} out of range");
    if action == EMS_OFF {
        return 0.0;
    }
    let delta = EMS_DELTAS[action];
    if p_prev <= 0.0 {
        if delta > 0.0 {
            (limits.min_on_w + delta).clamp(limits.min_on_w, limits.max_w)
        } else {
            0.0
        }
    } else {
        (p_prev + delta).clamp(limits.min_on_w, limits.max_w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryTmThresholds {
    pub fan_on_c: f64,
    pub fan_off_c: f64,
    pub coolant_on_c: f64,
    pub coolant_off_c: f64,
}

impl Default for BatteryTmThresholds {
    fn default() -> Self {
        BatteryTmThresholds {
            fan_on_c: 35.0,
            fan_off_c: 32.0,
            coolant_on_c: 40.0,
            coolant_off_c: 37.0,
        }
    }
}

impl BatteryTmThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.fan_off_c < self.fan_on_c
            && self.coolant_off_c < self.coolant_on_c
            && self.fan_on_c < self.coolant_on_c)
        {
            return Err(Error::Validation(
                "battery cooling thresholds must satisfy off < on and fan_on < coolant_on".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BatteryTmCommand {
    pub fan: bool,
    pub coolant: bool,
}

fn hysteresis(t: f64, on: f64, off: f64, prev: bool) -> bool {
    if t >= on {
        true
    } else if t <= off {
        false
    } else {
        prev
    }
}

pub fn battery_tm_rule(
    t_bat: f64,
    prev: BatteryTmCommand,
    th: &BatteryTmThresholds,
) -> BatteryTmCommand {
    BatteryTmCommand {
        fan: hysteresis(t_bat, th.fan_on_c, th.fan_off_c, prev.fan),
        coolant: hysteresis(t_bat, th.coolant_on_c, th.coolant_off_c, prev.coolant),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineEmsConfig {
    pub soc_low: f64,
    pub soc_high: f64,
    pub target_power_w: f64,
}

impl Default for BaselineEmsConfig {
    fn default() -> Self {
        BaselineEmsConfig {
            soc_low: 0.6,
            soc_high: 0.7,
            target_power_w: 20e3,
        }
    }
}

/// Charge-sustaining thermostat: drive the engine toward the target power
/// below the band, switch it off above, hold inside.
pub fn baseline_ems(soc: f64, p_ice: f64, cfg: &BaselineEmsConfig, limits: &EmsLimits) -> usize {
    if soc > cfg.soc_high {
        return EMS_OFF;
    }
    if soc < cfg.soc_low {
        let mut best = EMS_HOLD;
        let mut best_gap = (p_ice - cfg.target_power_w).abs();
        for a in 0..EMS_OFF {
            let gap = (apply_ems_action(p_ice, a, limits) - cfg.target_power_w).abs();
            if gap < best_gap {
                best = a;
                best_gap = gap;
            }
        }
        return best;
    }
    EMS_HOLD
}
