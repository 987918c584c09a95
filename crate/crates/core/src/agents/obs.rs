use serde::{Deserialize, Serialize};

/// Inputs per observation: four continuous features plus a one-hot driving
/// condition of three classes.
pub const OBS_DIM: usize = 7;
pub const CONDITION_CLASSES: usize = 3;

pub type Observation = [f64; OBS_DIM];

/// Min-max ranges mapped onto [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObsRanges {
    pub cabin_temp_c: (f64, f64),
    pub cabin_error_c: (f64, f64),
    pub speed_mps: (f64, f64),
    pub accel_mps2: (f64, f64),
    pub delta_soc: (f64, f64),
    pub setpoint_c: f64,
}

impl Default for ObsRanges {
    fn default() -> Self {
        ObsRanges {
            cabin_temp_c: (10.0, 45.0),
            cabin_error_c: (-12.0, 12.0),
            speed_mps: (0.0, 40.0),
            accel_mps2: (-4.0, 4.0),
            delta_soc: (-0.15, 0.15),
            setpoint_c: 22.0,
        }
    }
}

pub fn scale(x: f64, (lo, hi): (f64, f64)) -> f64 {
    (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
}

fn write_condition(obs: &mut Observation, label: usize, enabled: bool) {
    if enabled && label < CONDITION_CLASSES {
        obs[OBS_DIM - CONDITION_CLASSES + label] = 1.0;
    }
}

pub fn build_obs_cab(
    t_cab: f64,
    v: f64,
    a: f64,
    label: usize,
    enabled: bool,
    r: &ObsRanges,
) -> Observation {
    let mut o = [0.0; OBS_DIM];
    o[0] = scale(t_cab, r.cabin_temp_c);
    o[1] = scale(t_cab - r.setpoint_c, r.cabin_error_c);
    o[2] = scale(v, r.speed_mps);
    o[3] = scale(a, r.accel_mps2);
    write_condition(&mut o, label, enabled);
    o
}

#[allow(clippy::too_many_arguments)]
pub fn build_obs_ems(
    soc: f64,
    soc_initial: f64,
    v: f64,
    a: f64,
    last_action: usize,
    n_actions: usize,
    label: usize,
    enabled: bool,
    r: &ObsRanges,
) -> Observation {
    let mut o = [0.0; OBS_DIM];
    o[0] = scale(v, r.speed_mps);
    o[1] = scale(a, r.accel_mps2);
    o[2] = scale(soc - soc_initial, r.delta_soc);
    o[3] = scale(last_action as f64, (0.0, (n_actions - 1) as f64));
    write_condition(&mut o, label, enabled);
    o
}
