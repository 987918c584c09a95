//! Longitudinal demand, the power-split kinematics and the electrical bus.

use serde::{Deserialize, Serialize};

use super::params::{EnginePoint, MotorParams, PowertrainMaps, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub aero_n: f64,
    pub rolling_n: f64,
    pub grade_n: f64,
    pub inertial_n: f64,
    /// Tractive force at the wheels.
    pub force_n: f64,
    /// Power at the wheels.
    pub power_w: f64,
    /// Torque required at the power-split ring gear.
    pub ring_torque_nm: f64,
    /// Power required at the power-split ring gear.
    pub ring_power_w: f64,
}

pub fn demand(v: f64, a: f64, grade: f64, p: &VehicleParams) -> Demand {
    let aero = 0.5 * p.air_density * p.drag_coeff * p.frontal_area_m2 * v * v;
    let rolling = p.mass_kg * p.gravity * p.rolling_coeff * grade.cos();
    let grade_n = p.mass_kg * p.gravity * grade.sin();
    let inertial = p.mass_kg * a;
    let force = aero + rolling + grade_n + inertial;
    let power = force * v;
    let eta = p.wheel_eff * p.driveline_eff;
    // efficiency divides when driving and multiplies when braking
    let eff_factor = if power > 0.0 {
        1.0 / eta
    } else if power < 0.0 {
        eta
    } else {
        1.0
    };
    Demand {
        aero_n: aero,
        rolling_n: rolling,
        grade_n,
        inertial_n: inertial,
        force_n: force,
        power_w: power,
        ring_torque_nm: force * p.wheel_radius_m / p.final_drive_ratio * eff_factor,
        ring_power_w: power * eff_factor,
    }
}

/// Speed of both ring gears for vehicle speed `v`.
pub fn ring_speed(v: f64, p: &VehicleParams) -> f64 {
    p.final_drive_ratio * v / p.wheel_radius_m
}

/// Torques and speeds of every shaft after the split has been resolved.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ShaftSet {
    pub engine: EnginePoint,
    pub t_e: f64,
    pub w_e: f64,
    pub t_m1: f64,
    pub w_m1: f64,
    pub t_m2: f64,
    pub w_m2: f64,
    pub w_ring: f64,
    /// Reaction torque of the planetary ring gear.
    pub t_ring_planetary: f64,
    /// Torque the coupler ring must supply.
    pub t_ring_coupler: f64,
    /// Braking power dissipated by the friction brakes.
    pub friction_brake_w: f64,
    /// Positive ring torque that could not be delivered.
    pub traction_deficit_nm: f64,
    pub saturated: bool,
}

/// Resolves the split for ring torque demand `t_ps` with the engine on its
/// optimal line at `p_ice` (zero means off).
pub fn powersplit_solve(
    t_ps: f64,
    v: f64,
    p_ice: f64,
    maps: &PowertrainMaps,
    p: &VehicleParams,
) -> ShaftSet {
    let rg = p.planetary_ratio;
    let w_ring = ring_speed(v, p);
    let mut engine = maps.engine.operating_point(p_ice);
    let mut saturated = false;

    let w_m2 = (1.0 + rg) * engine.speed_rad_s - rg * w_ring;
    let mut t_m2 = -engine.torque_nm / (1.0 + rg);
    let m2_limit = maps.generator.torque_limit(w_m2);
    if t_m2.abs() > m2_limit {
        // the generator cannot hold the reaction: engine torque falls back
        saturated = true;
        let scale = m2_limit / t_m2.abs();
        t_m2 = t_m2.signum() * m2_limit;
        engine.torque_nm *= scale;
        engine.power_w *= scale;
        engine.fuel_g_s *= scale;
    }
    let t_e = engine.torque_nm;
    let t_rg = -rg * t_e / (1.0 + rg);

    // the engine drives the ring with -t_rg; the coupler supplies the rest
    let t_rc = t_ps + t_rg;
    let w_m1 = p.coupler_ratio * w_ring;
    let mut t_m1 = t_rc / p.coupler_ratio;
    let m1_limit = maps.traction_motor.torque_limit(w_m1);
    let mut friction_brake_w = 0.0;
    let mut deficit = 0.0;
    if t_m1 > m1_limit {
        saturated = true;
        deficit = (t_m1 - m1_limit) * p.coupler_ratio;
        t_m1 = m1_limit;
    } else if t_m1 < -m1_limit {
        friction_brake_w = (-m1_limit - t_m1) * p.coupler_ratio * w_ring;
        t_m1 = -m1_limit;
    }

    ShaftSet {
        engine,
        t_e,
        w_e: engine.speed_rad_s,
        t_m1,
        w_m1,
        t_m2,
        w_m2,
        w_ring,
        t_ring_planetary: t_rg,
        t_ring_coupler: t_rc,
        friction_brake_w,
        traction_deficit_nm: deficit,
        saturated,
    }
}

/// DC-side power of a machine: losses add when motoring, subtract when generating.
pub fn motor_dc_power(torque: f64, speed: f64, eff: f64) -> f64 {
    let mech = torque * speed;
    if mech >= 0.0 {
        mech / eff
    } else {
        mech * eff
    }
}

pub fn machine_dc_power(m: &MotorParams, torque: f64, speed: f64) -> f64 {
    motor_dc_power(torque, speed, m.eff(torque, speed))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BusPower {
    pub m1_dc_w: f64,
    pub m2_dc_w: f64,
    pub aux_w: f64,
    pub tm_w: f64,
    pub pack_w: f64,
    pub cell_w: f64,
}

/// Pack and per-cell power with thermal-management loads folded into the
/// auxiliary term.
pub fn electrical_balance(
    shafts: &ShaftSet,
    maps: &PowertrainMaps,
    tm_electric_w: f64,
    cells: f64,
) -> BusPower {
    let m1 = machine_dc_power(&maps.traction_motor, shafts.t_m1, shafts.w_m1);
    let m2 = machine_dc_power(&maps.generator, shafts.t_m2, shafts.w_m2);
    let pack = m1 + m2 + maps.aux_power_w + tm_electric_w;
    BusPower {
        m1_dc_w: m1,
        m2_dc_w: m2,
        aux_w: maps.aux_power_w,
        tm_w: tm_electric_w,
        pack_w: pack,
        cell_w: pack / cells,
    }
}
