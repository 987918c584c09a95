use item_core::cycles::DriveCycle;
use item_core::plant::battery::{
    battery_step, cell_current, cycles_to_eol, eol_throughput_ah, max_cell_power, soh_decrement,
    BatteryState,
};
use item_core::plant::params::{
    AgingParams, BatteryParams, CabinThermalParams, EngineThermalParams, PlantParams,
    VehicleParams,
};
use item_core::plant::thermal::{cabin_thermal_step, engine_thermal_step};
use item_core::plant::vehicle::{demand, motor_dc_power, powersplit_solve, ring_speed};
use item_core::plant::{Actions, Plant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn cell_current_reconstructs_power_over_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let ocv = rng.random_range(3.0..4.2);
        let v1 = rng.random_range(-0.05..0.1);
        let r0 = rng.random_range(1e-3..2e-2);
        let pmax = max_cell_power(ocv, v1, r0);
        let frac: f64 = rng.random_range(0.01..0.99);
        let p = if rng.random_bool(0.5) { frac * pmax } else { -2.0 * frac * pmax };
        let i = cell_current(p, ocv, v1, r0).unwrap();
        let back = i * (ocv - v1 - i * r0);
        worst = worst.max((back - p).abs() / p.abs());
    }
    assert!(worst < 1e-6, "worst relative reconstruction error {worst:e}");
}

#[test]
fn battery_temperature_relaxes_exponentially() {
    let bp = BatteryParams::default();
    let t_amb = 25.0;
    let tau = bp.heat_capacity() / (bp.convection_w_m2_c * bp.area_m2);
    let dt = 0.1;
    let n = (10.0 * tau / dt).ceil() as usize;
    let mut s = BatteryState::fresh(0.6, t_amb + 10.0);
    let mut worst: f64 = 0.0;
    for k in 1..=n {
        battery_step(&mut s, 0.0, 0.0, t_amb, dt, &bp);
        let exact = t_amb + 10.0 * (-(k as f64) * dt / tau).exp();
        worst = worst.max((s.temp_c - exact).abs() / 10.0);
    }
    assert!(worst < 1e-3, "worst deviation {worst:e} of the initial offset");
    assert_eq!(s.soc, 0.6);
}

#[test]
fn cabin_temperature_relaxes_exponentially() {
    let p = CabinThermalParams {
        solar_w: 0.0,
        ..CabinThermalParams::default()
    };
    let t_amb = 30.0;
    let tau = p.heat_capacity() / (p.roof_ua_w_c + p.window_ua_w_c + p.transmission_ua_w_c);
    let dt = 0.1;
    let n = (10.0 * tau / dt).ceil() as usize;
    let mut t = t_amb + 5.0;
    let mut worst: f64 = 0.0;
    for k in 1..=n {
        t = cabin_thermal_step(t, 0.0, t_amb, dt, &p).0;
        let exact = t_amb + 5.0 * (-(k as f64) * dt / tau).exp();
        worst = worst.max((t - exact).abs() / 5.0);
    }
    assert!(worst < 1e-3, "worst deviation {worst:e} of the initial offset");
}

#[test]
fn demand_matches_hand_values() {
    let p = VehicleParams {
        mass_kg: 1500.0,
        gravity: 9.81,
        rolling_coeff: 0.015,
        air_density: 1.2,
        drag_coeff: 0.3,
        frontal_area_m2: 2.25,
        ..VehicleParams::default()
    };
    let d = demand(20.0, 0.0, 0.0, &p);
    assert!(close(d.aero_n, 162.0, 1e-9));
    assert!(close(d.rolling_n, 220.725, 1e-9));
    assert!(close(d.force_n, 382.725, 1e-9));
    assert!(close(d.power_w, 7654.5, 1e-9));

    // braking: efficiencies multiply the negative power
    let b = demand(20.0, -2.0, 0.0, &p);
    let eta = p.wheel_eff * p.driveline_eff;
    assert!(b.power_w < 0.0);
    assert!(close(b.ring_power_w, b.power_w * eta, 1e-9));
    let t = demand(20.0, 1.0, 0.0, &p);
    assert!(close(t.ring_power_w, t.power_w / eta, 1e-9));
}

#[test]
fn planetary_and_machine_hand_values() {
    let p = VehicleParams {
        final_drive_ratio: 4.0,
        wheel_radius_m: 0.3,
        ..VehicleParams::default()
    };
    assert!(close(ring_speed(10.0, &p), 133.333_333_333, 1e-6));
    let rg: f64 = 2.6;
    assert!(close(-rg * 100.0 / (1.0 + rg), -72.222_222_222, 1e-6));
    assert!(close(-100.0 / (1.0 + rg), -27.777_777_778, 1e-6));
    assert!(close(motor_dc_power(90.0, 100.0, 0.9), 10_000.0, 1e-9));
    assert!(close(motor_dc_power(-90.0, 100.0, 0.9), -8_100.0, 1e-9));
}

/// Constant-acceleration ramps and stops, roughly the length of a dense urban test cycle.
fn urban_cycle() -> DriveCycle {
    let mut v = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    while v.len() < 598 {
        let peak: f64 = rng.random_range(4.0..14.0);
        let ramp = rng.random_range(6..16);
        for k in 0..ramp {
            v.push(peak * k as f64 / ramp as f64);
        }
        for _ in 0..rng.random_range(3..20) {
            v.push(peak);
        }
        for k in (0..ramp).rev() {
            v.push(peak * k as f64 / ramp as f64);
        }
        for _ in 0..rng.random_range(2..12) {
            v.push(0.0);
        }
    }
    v.truncate(598);
    DriveCycle::new("urban_synthetic", 1.0, v).unwrap()
}

#[test]
fn full_cycle_keeps_speed_constraint_and_energy_books() {
    let params = PlantParams::default();
    let rg = params.vehicle.planetary_ratio;
    let mut plant = Plant::new(params).unwrap();
    let cycle = urban_cycle();
    let mut soh_prev = plant.state.battery.soh;
    for i in 0..cycle.len() - 1 {
        let v_mid = 0.5 * (cycle.speed[i] + cycle.speed[i + 1]);
        let p_ice = if i % 40 < 20 { 15e3 } else { 0.0 };
        let out = plant
            .step(v_mid, cycle.accel(i), 0.0, Actions { p_ice_w: p_ice, heat: false, cool: true }, 1.0)
            .unwrap();
        let s = &out.shafts;
        let residual = (1.0 + rg) * s.w_e - s.w_m2 - rg * s.w_ring;
        assert!(residual.abs() < 1e-9, "speed constraint residual {residual:e} at step {i}");
        assert!(out.engine_heat.residual().abs() < 1.0, "coolant heat books off at step {i}");
        let soh = plant.state.battery.soh;
        assert!(soh <= soh_prev, "SOH rose at step {i}");
        soh_prev = soh;
    }
}

#[test]
fn coolant_source_term_hand_value() {
    let p = EngineThermalParams::default();
    let (_, h) = engine_thermal_step(p.thermostat_c - 10.0, 12e3, 1.0, 0.0, p.thermostat_c - 10.0, 1.0, &p);
    assert!(close(h.fuel - h.work - h.exhaust, 18_100.0, 1e-9));
    assert!(h.residual().abs() < 1e-9);
}

#[test]
fn steady_cruise_with_matched_engine_keeps_soc_flat() {
    let params = PlantParams::default();
    let v = 20.0;
    let run = |p_ice: f64| -> f64 {
        let mut plant = Plant::new(params.clone()).unwrap();
        plant.state.t_cabin_c = params.hvac.setpoint_c;
        let soc0 = plant.state.battery.soc;
        plant.step(v, 0.0, 0.0, Actions { p_ice_w: p_ice, ..Default::default() }, 1.0).unwrap();
        plant.state.battery.soc - soc0
    };
    // bisection on the engine power that zeroes the battery throughput
    let (mut lo, mut hi) = (params.powertrain.engine.min_on_power_w, 40e3);
    assert!(run(lo) < 0.0 && run(hi) > 0.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if run(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let d = demand(v, 0.0, 0.0, &params.vehicle);
    let p = 0.5 * (lo + hi);
    assert!(run(p).abs() < 1e-6);
    // the matching engine power covers road load plus machine and auxiliary losses
    assert!(p > d.ring_power_w && p < 1.5 * (d.ring_power_w + params.powertrain.aux_power_w));
}

#[test]
fn aging_matches_spreadsheet_evaluation() {
    let a = AgingParams::default();
    let q_n = 6.5;
    // hand-entered table row for C-rate 2 and the activation terms
    let m: f64 = 29_230.4;
    let (ea, r, z): (f64, f64, f64) = (31_700.0, 8.314, 0.55);
    for temp_c in [0.0, 25.0, 45.0] {
        let t_k = temp_c + 273.15;
        let a_tol = (20.0 / (m * (-ea / (r * t_k)).exp())).powf(1.0 / z);
        let n = a_tol / q_n;
        let got_a = eol_throughput_ah(&a, 2.0, temp_c);
        let got_n = cycles_to_eol(got_a, q_n);
        assert!(((got_a - a_tol) / a_tol).abs() < 1e-9, "A_tol at {temp_c} C");
        assert!(((got_n - n) / n).abs() < 1e-9, "N at {temp_c} C");
        let i = 2.0 * q_n;
        let d = soh_decrement(&a, q_n, i, temp_c, 1.0);
        let expected = (i / 3600.0) / (2.0 * n * q_n);
        assert!(((d - expected) / expected).abs() < 1e-9);
    }
    assert_eq!(soh_decrement(&a, q_n, 0.0, 25.0, 1.0), 0.0);
}

#[test]
fn soh_never_increases_under_mixed_load() {
    let bp = BatteryParams::default();
    let mut s = BatteryState::fresh(0.6, 25.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut prev = s.soh;
    for _ in 0..5000 {
        let p = rng.random_range(-60.0..60.0);
        battery_step(&mut s, p, 0.0, 25.0, 1.0, &bp);
        assert!(s.soh <= prev);
        prev = s.soh;
    }
    assert!(s.soh < 1.0);
}

#[test]
fn ring_torque_split_balances() {
    let params = PlantParams::default();
    let maps = &params.powertrain;
    let vp = &params.vehicle;
    for (t_ps, v, p_ice) in [(300.0, 10.0, 20e3), (-200.0, 15.0, 0.0), (50.0, 5.0, 8e3)] {
        let s = powersplit_solve(t_ps, v, p_ice, maps, vp);
        if !s.saturated && s.friction_brake_w == 0.0 {
            let delivered = s.t_m1 * vp.coupler_ratio - s.t_ring_planetary;
            assert!(close(delivered, t_ps, 1e-9));
        }
    }
}
