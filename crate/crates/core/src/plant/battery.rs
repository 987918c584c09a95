//! Cell equivalent circuit, lumped cell temperature and cycle aging.

use serde::{Deserialize, Serialize};

use super::params::{AgingParams, BatteryParams};
use crate::{Error, Result};

const KELVIN: f64 = 273.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub soc: f64,
    /// Polarization voltage of the RC branch.
    pub v1: f64,
    pub temp_c: f64,
    pub soh: f64,
    /// Discharged throughput, Ah.
    pub discharged_ah: f64,
    /// Capacity lost to aging, Ah.
    pub capacity_loss_ah: f64,
}

impl BatteryState {
    pub fn fresh(soc: f64, temp_c: f64) -> Self {
        BatteryState {
            soc,
            v1: 0.0,
            temp_c,
            soh: 1.0,
            discharged_ah: 0.0,
            capacity_loss_ah: 0.0,
        }
    }
}

/// Largest power a cell can deliver at the given open-circuit state.
pub fn max_cell_power(v_ocv: f64, v1: f64, r0: f64) -> f64 {
    let e = v_ocv - v1;
    e * e / (4.0 * r0)
}

/// Cell current drawing `p_cell` (positive on discharge).
pub fn cell_current(p_cell: f64, v_ocv: f64, v1: f64, r0: f64) -> Result<f64> {
    let e = v_ocv - v1;
    let disc = e * e - 4.0 * r0 * p_cell;
    if disc < 0.0 {
        return Err(Error::PowerLimit {
            requested: p_cell,
            max: max_cell_power(v_ocv, v1, r0),
        });
    }
    // rationalized root: identical to (e - sqrt(disc)) / (2 r0) without cancellation
    Ok(2.0 * p_cell / (e + disc.sqrt()))
}

/// Percentage capacity loss after `discharged_ah` at the given C-rate and temperature.
pub fn capacity_loss_pct(a: &AgingParams, c_rate: f64, temp_c: f64, discharged_ah: f64) -> f64 {
    let m = a.pre_exponential.eval(c_rate);
    let arrhenius = (-a.activation_energy_j_mol / ((temp_c + KELVIN) * a.gas_constant)).exp();
    m * arrhenius * discharged_ah.powf(a.exponent_z)
}

/// Throughput in Ah that produces end-of-life (20 % loss) under constant stress.
pub fn eol_throughput_ah(a: &AgingParams, c_rate: f64, temp_c: f64) -> f64 {
    let m = a.pre_exponential.eval(c_rate);
    let arrhenius = (-a.activation_energy_j_mol / (a.gas_constant * (temp_c + KELVIN))).exp();
    (20.0 / (m * arrhenius)).powf(1.0 / a.exponent_z)
}

/// Equivalent cycles to end-of-life.
pub fn cycles_to_eol(throughput_ah: f64, capacity_ah: f64) -> f64 {
    // 3600 * A_tol [As] / Q_n [As]
    3600.0 * throughput_ah / (3600.0 * capacity_ah)
}

/// SOH decrement for current `i` over `dt` seconds.
pub fn soh_decrement(a: &AgingParams, capacity_ah: f64, i: f64, temp_c: f64, dt: f64) -> f64 {
    if i == 0.0 {
        return 0.0;
    }
    let c_rate = i.abs() / capacity_ah;
    let n = cycles_to_eol(eol_throughput_ah(a, c_rate, temp_c), capacity_ah);
    (i.abs() * dt / 3600.0) / (2.0 * n * capacity_ah)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CellStep {
    pub current_a: f64,
    pub terminal_v: f64,
    pub ocv: f64,
    /// Power actually drawn from the cell.
    pub power_w: f64,
    pub power_limited: bool,
    pub heat_gen_w: f64,
    pub heat_conv_w: f64,
}

/// Advances one cell by `dt` under power `p_cell` with `cooling_w` removed by
/// active thermal management.
pub fn battery_step(
    s: &mut BatteryState,
    p_cell: f64,
    cooling_w: f64,
    t_amb: f64,
    dt: f64,
    bp: &BatteryParams,
) -> CellStep {
    let soc_q = s.soc.clamp(0.0, 1.0);
    let ocv = bp.ocv.eval(soc_q, s.temp_c);
    let r0 = bp.r0.eval(soc_q, s.temp_c);
    let r1 = bp.r1.eval(soc_q, s.temp_c);
    let c1 = bp.c1.eval(soc_q, s.temp_c);

    let (i, p, limited) = match cell_current(p_cell, ocv, s.v1, r0) {
        Ok(i) => (i, p_cell, false),
        Err(_) => {
            let p = max_cell_power(ocv, s.v1, r0);
            ((ocv - s.v1) / (2.0 * r0), p, true)
        }
    };
    let terminal = ocv - s.v1 - i * r0;
    let heat_gen = i * i * r0 + s.v1 * s.v1 / r1;
    let heat_conv = bp.convection_w_m2_c * bp.area_m2 * (s.temp_c - t_amb);

    let v1_dot = -s.v1 / (r1 * c1) + i / c1;
    let usable = bp.capacity_ah - s.capacity_loss_ah;
    let soc_dot = -i / (3600.0 * usable);
    let temp_dot = (heat_gen - cooling_w - heat_conv) / bp.heat_capacity();

    let d_soh = soh_decrement(&bp.aging, bp.capacity_ah, i, s.temp_c, dt);

    s.v1 += dt * v1_dot;
    s.soc += dt * soc_dot;
    s.temp_c += dt * temp_dot;
    s.soh = (s.soh - d_soh).max(0.0);
    if i > 0.0 {
        s.discharged_ah += i * dt / 3600.0;
    }
    // 20 % capacity loss at SOH = 0
    s.capacity_loss_ah = 0.2 * bp.capacity_ah * (1.0 - s.soh);

    CellStep {
        current_a: i,
        terminal_v: terminal,
        ocv,
        power_w: p,
        power_limited: limited,
        heat_gen_w: heat_gen,
        heat_conv_w: heat_conv,
    }
}
