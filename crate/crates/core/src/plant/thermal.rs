use serde::{Deserialize, Serialize};

use super::params::{CabinThermalParams, EngineThermalParams};

/// Heat flows of the engine coolant loop, all in W.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EngineHeat {
    pub fuel: f64,
    pub work: f64,
    pub exhaust: f64,
    pub convection: f64,
    pub radiator: f64,
    pub cabin: f64,
    pub storage_in: f64,
    /// Rate of change of heat stored in the engine mass.
    pub stored: f64,
}

impl EngineHeat {
    /// Energy-balance residual; zero up to rounding.
    pub fn residual(&self) -> f64 {
        self.fuel + self.storage_in
            - (self.work + self.exhaust + self.convection + self.radiator + self.cabin + self.stored)
    }
}

/// Heat the heater core can deliver at coolant temperature `t_cl`.
pub fn heater_core_available(t_cl: f64, p: &EngineThermalParams) -> f64 {
    if t_cl >= p.heater_supply_min_c {
        p.heater_core_max_w
    } else {
        0.0
    }
}

pub fn engine_thermal_step(
    t_cl: f64,
    engine_power_w: f64,
    fuel_g_s: f64,
    heater_demand_w: f64,
    t_amb: f64,
    dt: f64,
    p: &EngineThermalParams,
) -> (f64, EngineHeat) {
    let fuel = fuel_g_s * p.fuel_lhv_j_g;
    let radiator = if t_cl > p.thermostat_c {
        p.radiator_max_w
    } else {
        0.0
    };
    let mut h = EngineHeat {
        fuel,
        work: engine_power_w,
        exhaust: p.exhaust_fraction * fuel,
        convection: p.convection_ua_w_c * (t_cl - t_amb),
        radiator,
        cabin: heater_demand_w.max(0.0).min(heater_core_available(t_cl, p)),
        storage_in: p.heat_storage_w,
        stored: 0.0,
    };
    h.stored = h.fuel - h.work - h.exhaust - h.convection - h.radiator - h.cabin + h.storage_in;
    (t_cl + dt * h.stored / p.heat_capacity(), h)
}

/// Heat flows into the cabin air, all in W.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CabinHeat {
    pub hvac: f64,
    pub sun: f64,
    pub roof: f64,
    pub window: f64,
    pub transmission: f64,
}

impl CabinHeat {
    pub fn net(&self) -> f64 {
        self.hvac + self.sun + self.roof + self.window + self.transmission
    }
}

pub fn cabin_thermal_step(
    t_cab: f64,
    q_hvac: f64,
    t_amb: f64,
    dt: f64,
    p: &CabinThermalParams,
) -> (f64, CabinHeat) {
    let dtemp = t_amb - t_cab;
    let h = CabinHeat {
        hvac: q_hvac,
        sun: p.solar_w,
        roof: p.roof_ua_w_c * dtemp,
        window: p.window_ua_w_c * dtemp,
        transmission: p.transmission_ua_w_c * dtemp,
    };
    (t_cab + dt * h.net() / p.heat_capacity(), h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cold_engine_at_ambient_is_stationary() {
        let p = EngineThermalParams::default();
        let (t, h) = engine_thermal_step(25.0, 0.0, 0.0, 0.0, 25.0, 0.1, &p);
        assert_eq!(t, 25.0);
        assert_eq!(h.stored, 0.0);
    }

    #[test]
    fn net_source_term_by_term() {
        let p = EngineThermalParams::default();
        let (_, h) = engine_thermal_step(25.0, 12e3, 1.0, 0.0, 25.0, 0.1, &p);
        assert!((h.fuel - h.work - h.exhaust - 18_100.0).abs() < 1e-9);
        assert!(h.residual().abs() < 1e-9);
    }

    #[test]
    fn radiator_cools_above_thermostat() {
        let p = EngineThermalParams {
            radiator_max_w: 1e6,
            ..Default::default()
        };
        let (t, _) = engine_thermal_step(95.0, 10e3, 0.8, 0.0, 25.0, 0.1, &p);
        assert!(t < 95.0);
    }

    #[test]
    fn heater_core_needs_warm_coolant() {
        let p = EngineThermalParams::default();
        let (_, h) = engine_thermal_step(30.0, 0.0, 0.0, 5e3, 25.0, 0.1, &p);
        assert_eq!(h.cabin, 0.0);
        let (_, h) = engine_thermal_step(60.0, 0.0, 0.0, 9e3, 25.0, 0.1, &p);
        assert_eq!(h.cabin, p.heater_core_max_w);
    }

    #[test]
    fn cabin_equilibrium_and_ac() {
        let p = CabinThermalParams {
            solar_w: 0.0,
            ..Default::default()
        };
        let (t, _) = cabin_thermal_step(25.0, 0.0, 25.0, 0.1, &p);
        assert_eq!(t, 25.0);
        let p = CabinThermalParams::default();
        let (t, _) = cabin_thermal_step(35.0, -3000.0, 30.0, 0.1, &p);
        assert!(t < 35.0);
    }
}
