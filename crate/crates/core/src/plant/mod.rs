//! Quasi-static power-split hybrid plant with battery, coolant and cabin
//! thermal states, stepped at a fixed control period with internal sub-steps.

pub mod battery;
pub mod interp;
pub mod params;
pub mod thermal;
pub mod vehicle;

use serde::{Deserialize, Serialize};

use crate::control::{battery_tm_rule, hvac_actuate, BatteryTmCommand, HvacCommand, HvacPids};
use crate::{Error, Result};
use battery::BatteryState;
use params::PlantParams;
use thermal::{CabinHeat, EngineHeat};
use vehicle::{BusPower, Demand, ShaftSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub battery: BatteryState,
    pub t_coolant_c: f64,
    pub t_cabin_c: f64,
    pub fuel_g: f64,
    pub p_ice_w: f64,
}

impl PlantState {
    pub fn initial(p: &PlantParams) -> Self {
        let c = &p.conditions;
        PlantState {
            battery: BatteryState::fresh(
                c.initial_soc,
                c.initial_battery_c.unwrap_or(c.ambient_c),
            ),
            t_coolant_c: c.initial_coolant_c.unwrap_or(c.ambient_c),
            t_cabin_c: c.initial_cabin_c.unwrap_or(c.ambient_c),
            fuel_g: 0.0,
            p_ice_w: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Actions {
    pub p_ice_w: f64,
    pub heat: bool,
    pub cool: bool,
}

/// Step results; rates and powers are averages over the control period.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepOutputs {
    pub demand: Option<Demand>,
    pub shafts: ShaftSet,
    pub fuel_g_s: f64,
    pub bus: BusPower,
    pub cell_current_a: f64,
    pub cell_heat_w: f64,
    /// Thermal-management electric power: HVAC, blower and battery cooling.
    pub p_tm_w: f64,
    pub hvac: HvacCommand,
    pub battery_tm: BatteryTmCommand,
    pub engine_heat: EngineHeat,
    pub cabin_heat: CabinHeat,
    pub power_limited: bool,
    pub soc_violation: bool,
}

impl StepOutputs {
    pub fn traction_violation(&self) -> bool {
        self.shafts.traction_deficit_nm > 1e-9
    }
}

/// One vehicle: parameters, physical state and the embedded low-level loops.
#[derive(Debug, Clone)]
pub struct Plant {
    pub params: PlantParams,
    pub state: PlantState,
    pub pids: HvacPids,
    pub battery_tm: BatteryTmCommand,
}

impl Plant {
    pub fn new(params: PlantParams) -> Result<Self> {
        params.validate()?;
        let state = PlantState::initial(&params);
        let pids = HvacPids::new(&params.hvac, &params.thermal.cabin, &params.thermal.engine);
        Ok(Plant {
            params,
            state,
            pids,
            battery_tm: BatteryTmCommand::default(),
        })
    }

    pub fn reset(&mut self) {
        self.state = PlantState::initial(&self.params);
        self.pids.heater.reset();
        self.pids.ac.reset();
        self.battery_tm = BatteryTmCommand::default();
    }

    /// Advances the plant by `dt` at speed `v`, acceleration `a` and grade
    /// `grade`. The mechanical split is held over the period while the
    /// electrical and thermal states are integrated in sub-steps.
    pub fn step(&mut self, v: f64, a: f64, grade: f64, act: Actions, dt: f64) -> Result<StepOutputs> {
        if !(dt > 0.0) {
            return Err(Error::Argument(format!("step dt must be positive, got {dt}")));
        }
        if v < 0.0 || !v.is_finite() || !a.is_finite() {
            return Err(Error::Argument(format!("invalid kinematics v={v}, a={a}")));
        }
        let p = &self.params;
        let n = p.sim.substeps;
        let h = dt / n as f64;
        let t_amb = p.conditions.ambient_c;
        let cooling = &p.thermal.battery_cooling;

        let d = vehicle::demand(v, a, grade, &p.vehicle);
        let shafts = vehicle::powersplit_solve(
            d.ring_torque_nm,
            v,
            act.p_ice_w.max(0.0),
            &p.powertrain,
            &p.vehicle,
        );
        self.state.p_ice_w = act.p_ice_w.max(0.0);

        let mut out = StepOutputs {
            demand: Some(d),
            shafts,
            ..Default::default()
        };
        let w = 1.0 / n as f64;
        for _ in 0..n {
            let s = &mut self.state;
            self.battery_tm = battery_tm_rule(s.battery.temp_c, self.battery_tm, &p.battery_tm);
            let tm = self.battery_tm;
            let hvac = hvac_actuate(
                s.t_cabin_c,
                s.t_coolant_c,
                act.heat,
                act.cool,
                &mut self.pids,
                &p.hvac,
                &p.thermal.cabin,
                &p.thermal.engine,
                h,
            );
            let mut cell_cooling = 0.0;
            let mut tm_electric = hvac.electric_w();
            if tm.fan {
                cell_cooling += cooling.fan_heat_w;
                tm_electric += cooling.fan_power_w;
            }
            if tm.coolant {
                cell_cooling += cooling.coolant_heat_w;
                tm_electric += cooling.coolant_power_w;
            }
            let bus =
                vehicle::electrical_balance(&shafts, &p.powertrain, tm_electric, p.battery.cells);
            let cell =
                battery::battery_step(&mut s.battery, bus.cell_w, cell_cooling, t_amb, h, &p.battery);

            let fuel = shafts.engine.fuel_g_s * p.powertrain.cold_fuel.factor(s.t_coolant_c);
            let (t_cl, eh) = thermal::engine_thermal_step(
                s.t_coolant_c,
                shafts.engine.power_w,
                fuel,
                hvac.q_core_w,
                t_amb,
                h,
                &p.thermal.engine,
            );
            let (t_cab, ch) =
                thermal::cabin_thermal_step(s.t_cabin_c, hvac.q_hvac_w, t_amb, h, &p.thermal.cabin);
            s.t_coolant_c = t_cl;
            s.t_cabin_c = t_cab;
            s.fuel_g += fuel * h;

            out.fuel_g_s += w * fuel;
            out.cell_current_a += w * cell.current_a;
            out.cell_heat_w += w * cell.heat_gen_w;
            out.p_tm_w += w * tm_electric;
            add_bus(&mut out.bus, &bus, w);
            add_hvac(&mut out.hvac, &hvac, w);
            add_engine_heat(&mut out.engine_heat, &eh, w);
            add_cabin_heat(&mut out.cabin_heat, &ch, w);
            out.battery_tm = tm;
            out.power_limited |= cell.power_limited;

            let soc = s.battery.soc;
            if soc < p.sim.soc_min || soc > p.sim.soc_max {
                out.soc_violation = true;
                break;
            }
        }
        Ok(out)
    }
}

fn add_bus(acc: &mut BusPower, b: &BusPower, w: f64) {
    acc.m1_dc_w += w * b.m1_dc_w;
    acc.m2_dc_w += w * b.m2_dc_w;
    acc.aux_w += w * b.aux_w;
    acc.tm_w += w * b.tm_w;
    acc.pack_w += w * b.pack_w;
    acc.cell_w += w * b.cell_w;
}

fn add_hvac(acc: &mut HvacCommand, c: &HvacCommand, w: f64) {
    acc.q_hvac_w += w * c.q_hvac_w;
    acc.q_core_w += w * c.q_core_w;
    acc.heater_electric_w += w * c.heater_electric_w;
    acc.ac_electric_w += w * c.ac_electric_w;
    acc.blower_w += w * c.blower_w;
    acc.conflict |= c.conflict;
}

fn add_engine_heat(acc: &mut EngineHeat, e: &EngineHeat, w: f64) {
    acc.fuel += w * e.fuel;
    acc.work += w * e.work;
    acc.exhaust += w * e.exhaust;
    acc.convection += w * e.convection;
    acc.radiator += w * e.radiator;
    acc.cabin += w * e.cabin;
    acc.storage_in += w * e.storage_in;
    acc.stored += w * e.stored;
}

fn add_cabin_heat(acc: &mut CabinHeat, c: &CabinHeat, w: f64) {
    acc.hvac += w * c.hvac;
    acc.sun += w * c.sun;
    acc.roof += w * c.roof;
    acc.window += w * c.window;
    acc.transmission += w * c.transmission;
}
