//! Physical parameters of the power-split hybrid. Defaults describe a
//! mid-size production power-split hybrid; all of them are configuration.

use serde::{Deserialize, Serialize};

use super::interp::{Table1, Table2};
use crate::control::{BatteryTmThresholds, HvacParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub mass_kg: f64,
    pub air_density: f64,
    pub drag_coeff: f64,
    pub frontal_area_m2: f64,
    pub rolling_coeff: f64,
    pub gravity: f64,
    pub wheel_radius_m: f64,
    /// Total drivetrain ratio between the power-split ring gears and the wheels.
    pub final_drive_ratio: f64,
    pub wheel_eff: f64,
    pub driveline_eff: f64,
    /// Ring-to-sun tooth ratio of the planetary gearset.
    pub planetary_ratio: f64,
    /// Reduction between the traction motor and the torque-coupler ring.
    pub coupler_ratio: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            mass_kg: 1530.0,
            air_density: 1.2,
            drag_coeff: 0.26,
            frontal_area_m2: 2.25,
            rolling_coeff: 0.009,
            gravity: 9.81,
            wheel_radius_m: 0.3,
            final_drive_ratio: 4.113,
            wheel_eff: 0.98,
            driveline_eff: 0.97,
            planetary_ratio: 2.6,
            coupler_ratio: 2.636,
        }
    }
}

/// Engine optimal operating line: power -> (speed, fuel rate). Below the
/// first node the engine is either off (exactly zero power) or held at the
/// minimum on-power by the EMS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineMap {
    pub power_w: Vec<f64>,
    pub speed_rad_s: Vec<f64>,
    pub fuel_g_s: Vec<f64>,
    pub min_on_power_w: f64,
    pub max_power_w: f64,
}

impl Default for EngineMap {
    fn default() -> Self {
        EngineMap {
            power_w: vec![
                2e3, 5e3, 10e3, 15e3, 20e3, 30e3, 40e3, 50e3, 60e3, 73e3,
            ],
            speed_rad_s: vec![
                104.72, 115.192, 130.9, 146.608, 167.552, 209.44, 261.799, 324.631, 408.407,
                544.543,
            ],
            // P / (eta * LHV) with eta rising from 0.20 at 2 kW to 0.385 at 40 kW
            fuel_g_s: vec![
                0.2326, 0.4307, 0.7502, 1.026, 1.292, 1.836, 2.4162, 3.06, 3.8229, 5.0677,
            ],
            min_on_power_w: 2e3,
            max_power_w: 73e3,
        }
    }
}

/// One engine operating point on the optimal line.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnginePoint {
    pub power_w: f64,
    pub speed_rad_s: f64,
    pub torque_nm: f64,
    pub fuel_g_s: f64,
}

impl EngineMap {
    pub fn validate(&self) -> Result<()> {
        let n = self.power_w.len();
        if n < 2 || self.speed_rad_s.len() != n || self.fuel_g_s.len() != n {
            return Err(Error::Validation(
                "engine map needs >= 2 nodes with matching speed and fuel columns".into(),
            ));
        }
        for w in 0..n - 1 {
            if !(self.power_w[w + 1] > self.power_w[w])
                || self.fuel_g_s[w + 1] < self.fuel_g_s[w]
                || self.speed_rad_s[w + 1] < self.speed_rad_s[w]
            {
                return Err(Error::Validation(
                    "engine optimal operating line must be monotone in power".into(),
                ));
            }
        }
        if !(self.min_on_power_w > 0.0 && self.max_power_w >= self.min_on_power_w) {
            return Err(Error::Validation("engine power limits are inconsistent".into()));
        }
        Ok(())
    }

    /// Operating point at `power_w`; zero power means the engine is off.
    pub fn operating_point(&self, power_w: f64) -> EnginePoint {
        if power_w <= 0.0 {
            return EnginePoint::default();
        }
        let p = power_w.min(self.max_power_w);
        let speed = Table1 {
            x: self.power_w.clone(),
            y: self.speed_rad_s.clone(),
        }
        .eval(p);
        let fuel = if p < self.power_w[0] {
            // below the first node fuel scales linearly toward the idle point
            self.fuel_g_s[0] * p / self.power_w[0]
        } else {
            Table1 {
                x: self.power_w.clone(),
                y: self.fuel_g_s.clone(),
            }
            .eval(p)
        };
        EnginePoint {
            power_w: p,
            speed_rad_s: speed,
            torque_nm: p / speed,
            fuel_g_s: fuel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotorParams {
    pub max_torque_nm: f64,
    pub max_power_w: f64,
    pub max_speed_rad_s: f64,
    /// Efficiency over (|T| / T_max, |w| / w_max).
    pub efficiency: Table2,
}

fn default_motor_efficiency() -> Table2 {
    Table2 {
        x: vec![0.0, 0.1, 0.25, 0.5, 0.75, 1.0],
        y: vec![0.0, 0.1, 0.25, 0.5, 0.75, 1.0],
        values: vec![
            0.70, 0.72, 0.75, 0.78, 0.78, 0.76, //
            0.72, 0.82, 0.87, 0.90, 0.90, 0.88, //
            0.74, 0.86, 0.91, 0.93, 0.93, 0.91, //
            0.74, 0.87, 0.92, 0.94, 0.94, 0.92, //
            0.72, 0.86, 0.91, 0.93, 0.93, 0.91, //
            0.70, 0.84, 0.89, 0.91, 0.91, 0.89,
        ],
    }
}

impl MotorParams {
    pub fn traction() -> Self {
        MotorParams {
            max_torque_nm: 207.0,
            max_power_w: 60e3,
            max_speed_rad_s: 1414.0,
            efficiency: default_motor_efficiency(),
        }
    }

    pub fn generator() -> Self {
        MotorParams {
            max_torque_nm: 100.0,
            max_power_w: 42e3,
            max_speed_rad_s: 1047.0,
            efficiency: default_motor_efficiency(),
        }
    }

    /// Torque magnitude available at shaft speed `speed`.
    pub fn torque_limit(&self, speed: f64) -> f64 {
        let w = speed.abs();
        if w * self.max_torque_nm <= self.max_power_w {
            self.max_torque_nm
        } else {
            self.max_power_w / w
        }
    }

    pub fn eff(&self, torque: f64, speed: f64) -> f64 {
        self.efficiency
            .eval(torque.abs() / self.max_torque_nm, speed.abs() / self.max_speed_rad_s)
    }
}

impl Default for MotorParams {
    fn default() -> Self {
        Self::traction()
    }
}

/// Fuel multiplier for a cold engine: linear ramp from `cold_factor` at
/// `cold_temp_c` to 1 at `warm_temp_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColdFuel {
    pub cold_temp_c: f64,
    pub cold_factor: f64,
    pub warm_temp_c: f64,
}

impl Default for ColdFuel {
    fn default() -> Self {
        ColdFuel {
            cold_temp_c: 20.0,
            cold_factor: 1.15,
            warm_temp_c: 70.0,
        }
    }
}

impl ColdFuel {
    pub fn factor(&self, t_cl: f64) -> f64 {
        if t_cl >= self.warm_temp_c {
            1.0
        } else if t_cl <= self.cold_temp_c {
            self.cold_factor
        } else {
            let f = (t_cl - self.cold_temp_c) / (self.warm_temp_c - self.cold_temp_c);
            self.cold_factor + (1.0 - self.cold_factor) * f
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowertrainMaps {
    pub engine: EngineMap,
    pub traction_motor: MotorParams,
    pub generator: MotorParams,
    pub aux_power_w: f64,
    pub cold_fuel: ColdFuel,
}

impl Default for PowertrainMaps {
    fn default() -> Self {
        PowertrainMaps {
            engine: EngineMap::default(),
            traction_motor: MotorParams::traction(),
            generator: MotorParams::generator(),
            aux_power_w: 300.0,
            cold_fuel: ColdFuel::default(),
        }
    }
}

/// Semi-empirical capacity-fade constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgingParams {
    /// Pre-exponential factor over C-rate.
    pub pre_exponential: Table1,
    pub activation_energy_j_mol: f64,
    pub gas_constant: f64,
    pub exponent_z: f64,
}

impl Default for AgingParams {
    fn default() -> Self {
        AgingParams {
            // LFP fit (B = 31630, 21681, 12934, 15512 at 0.5C, 2C, 6C, 10C) with the
            // 370.3 J/mol per C-rate activation correction folded in at 298.15 K
            pre_exponential: Table1 {
                x: vec![0.5, 2.0, 6.0, 10.0],
                y: vec![34083.0, 29230.4, 31695.5, 69094.2],
            },
            activation_energy_j_mol: 31700.0,
            gas_constant: 8.314,
            exponent_z: 0.55,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryParams {
    pub cells: f64,
    pub capacity_ah: f64,
    /// Open-circuit voltage over (SOC, T °C).
    pub ocv: Table2,
    pub r0: Table2,
    pub r1: Table2,
    pub c1: Table2,
    pub heat_capacity_j_kg_c: f64,
    pub convection_w_m2_c: f64,
    pub area_m2: f64,
    pub mass_kg: f64,
    /// Replaces `mass_kg * heat_capacity_j_kg_c` when set (J/°C).
    pub lumped_heat_capacity_j_c: Option<f64>,
    pub aging: AgingParams,
}

const SOC_GRID: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
const TEMP_GRID: [f64; 6] = [-10.0, 0.0, 10.0, 25.0, 40.0, 55.0];

fn resistance_table(base: f64) -> Table2 {
    let soc_mult = [1.5, 1.25, 1.1, 1.05, 1.0, 1.0, 1.0, 1.0, 1.02, 1.05, 1.1];
    let temp_mult = [3.0, 2.0, 1.4, 1.0, 0.85, 0.8];
    let values = soc_mult
        .iter()
        .flat_map(|s| temp_mult.iter().map(move |t| base * s * t))
        .collect();
    Table2 {
        x: SOC_GRID.to_vec(),
        y: TEMP_GRID.to_vec(),
        values,
    }
}

impl Default for BatteryParams {
    fn default() -> Self {
        let ocv = [
            3.00, 3.45, 3.55, 3.62, 3.67, 3.72, 3.80, 3.88, 3.96, 4.05, 4.15,
        ];
        let r1 = resistance_table(0.004);
        // RC time constant of 5 s at every node
        let c1 = r1.map_values(|r| 5.0 / r);
        BatteryParams {
            cells: 168.0,
            capacity_ah: 6.5,
            ocv: Table2::from_rows_constant_y(SOC_GRID.to_vec(), TEMP_GRID.to_vec(), &ocv),
            r0: resistance_table(0.008),
            r1,
            c1,
            heat_capacity_j_kg_c: 1350.0,
            convection_w_m2_c: 5.0,
            area_m2: 0.03,
            // 40 J/°C lumped cell heat capacity
            mass_kg: 40.0 / 1350.0,
            lumped_heat_capacity_j_c: None,
            aging: AgingParams::default(),
        }
    }
}

impl BatteryParams {
    pub fn heat_capacity(&self) -> f64 {
        self.lumped_heat_capacity_j_c
            .unwrap_or(self.mass_kg * self.heat_capacity_j_kg_c)
    }

    /// Time constant of passive cooling toward ambient.
    pub fn thermal_time_constant(&self) -> f64 {
        self.heat_capacity() / (self.convection_w_m2_c * self.area_m2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineThermalParams {
    pub specific_heat_j_kg_c: f64,
    pub mass_kg: f64,
    pub fuel_lhv_j_g: f64,
    pub exhaust_fraction: f64,
    pub convection_ua_w_c: f64,
    pub radiator_max_w: f64,
    pub thermostat_c: f64,
    pub heater_core_max_w: f64,
    pub heater_supply_min_c: f64,
    pub heat_storage_w: f64,
}

impl Default for EngineThermalParams {
    fn default() -> Self {
        EngineThermalParams {
            specific_heat_j_kg_c: 500.0,
            mass_kg: 120.0,
            fuel_lhv_j_g: 43000.0,
            exhaust_fraction: 0.3,
            convection_ua_w_c: 15.0,
            radiator_max_w: 25e3,
            thermostat_c: 90.0,
            heater_core_max_w: 6e3,
            heater_supply_min_c: 40.0,
            heat_storage_w: 0.0,
        }
    }
}

impl EngineThermalParams {
    pub fn heat_capacity(&self) -> f64 {
        self.specific_heat_j_kg_c * self.mass_kg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CabinThermalParams {
    pub air_mass_kg: f64,
    pub heat_capacity_j_kg_c: f64,
    pub solar_w: f64,
    pub roof_ua_w_c: f64,
    pub window_ua_w_c: f64,
    pub transmission_ua_w_c: f64,
    pub ac_capacity_w: f64,
    pub ac_cop: f64,
    pub electric_heater_max_w: f64,
    /// Heat delivered per electric watt by the backup heater.
    pub electric_heater_eff: f64,
    pub blower_w: f64,
}

impl Default for CabinThermalParams {
    fn default() -> Self {
        CabinThermalParams {
            air_mass_kg: 40.0,
            heat_capacity_j_kg_c: 1005.0,
            solar_w: 400.0,
            roof_ua_w_c: 12.0,
            window_ua_w_c: 18.0,
            transmission_ua_w_c: 8.0,
            ac_capacity_w: 3000.0,
            ac_cop: 2.5,
            electric_heater_max_w: 3000.0,
            electric_heater_eff: 1.0,
            blower_w: 100.0,
        }
    }
}

impl CabinThermalParams {
    pub fn heat_capacity(&self) -> f64 {
        self.air_mass_kg * self.heat_capacity_j_kg_c
    }

    pub fn total_ua(&self) -> f64 {
        self.roof_ua_w_c + self.window_ua_w_c + self.transmission_ua_w_c
    }
}

/// Battery cooling hardware; heat figures are per cell, electric power per pack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryCoolingParams {
    pub fan_heat_w: f64,
    pub fan_power_w: f64,
    pub coolant_heat_w: f64,
    pub coolant_power_w: f64,
}

impl Default for BatteryCoolingParams {
    fn default() -> Self {
        BatteryCoolingParams {
            fan_heat_w: 1.0,
            fan_power_w: 40.0,
            coolant_heat_w: 3.0,
            coolant_power_w: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ThermalParams {
    pub engine: EngineThermalParams,
    pub cabin: CabinThermalParams,
    pub battery_cooling: BatteryCoolingParams,
}

/// Ambient and initial conditions of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Conditions {
    pub ambient_c: f64,
    pub initial_soc: f64,
    /// Initial temperatures default to ambient when unset.
    pub initial_battery_c: Option<f64>,
    pub initial_coolant_c: Option<f64>,
    pub initial_cabin_c: Option<f64>,
}

impl Default for Conditions {
    fn default() -> Self {
        Conditions {
            ambient_c: 30.0,
            initial_soc: 0.65,
            initial_battery_c: None,
            initial_coolant_c: None,
            initial_cabin_c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Plant sub-steps per control step.
    pub substeps: usize,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            substeps: 10,
            soc_min: 0.0,
            soc_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    pub vehicle: VehicleParams,
    pub powertrain: PowertrainMaps,
    pub battery: BatteryParams,
    pub thermal: ThermalParams,
    pub hvac: HvacParams,
    pub battery_tm: BatteryTmThresholds,
    pub conditions: Conditions,
    pub sim: SimParams,
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let v = &self.vehicle;
        let positive = [
            ("mass_kg", v.mass_kg),
            ("air_density", v.air_density),
            ("drag_coeff", v.drag_coeff),
            ("frontal_area_m2", v.frontal_area_m2),
            ("gravity", v.gravity),
            ("wheel_radius_m", v.wheel_radius_m),
            ("final_drive_ratio", v.final_drive_ratio),
            ("planetary_ratio", v.planetary_ratio),
            ("coupler_ratio", v.coupler_ratio),
            ("battery.cells", self.battery.cells),
            ("battery.capacity_ah", self.battery.capacity_ah),
            ("battery heat capacity", self.battery.heat_capacity()),
            ("engine heat capacity", self.thermal.engine.heat_capacity()),
            ("cabin heat capacity", self.thermal.cabin.heat_capacity()),
            ("ac_cop", self.thermal.cabin.ac_cop),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Validation(format!("{name} must be positive, got {value}")));
            }
        }
        if v.rolling_coeff < 0.0 {
            return Err(Error::Validation("rolling_coeff must be non-negative".into()));
        }
        for (name, eta) in [("wheel_eff", v.wheel_eff), ("driveline_eff", v.driveline_eff)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Validation(format!("{name} must lie in (0,1], got {eta}")));
            }
        }
        let chi = self.thermal.engine.exhaust_fraction;
        if !(0.0..1.0).contains(&chi) {
            return Err(Error::Validation(format!("exhaust_fraction must lie in [0,1), got {chi}")));
        }
        self.powertrain.engine.validate()?;
        for t in [&self.battery.ocv, &self.battery.r0, &self.battery.r1, &self.battery.c1] {
            t.validate()?;
            if t.values.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::Validation("battery tables must be positive".into()));
            }
        }
        self.battery.aging.pre_exponential.validate()?;
        for m in [&self.powertrain.traction_motor, &self.powertrain.generator] {
            m.efficiency.validate()?;
            if m.efficiency.values.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
                return Err(Error::Validation("motor efficiencies must lie in (0,1]".into()));
            }
        }
        if self.sim.substeps == 0 {
            return Err(Error::Validation("substeps must be at least 1".into()));
        }
        self.battery_tm.validate()?;
        Ok(())
    }
}
