/// Cabin reward: squared comfort error plus weighted climate power.
pub fn reward_cab(e_cab: f64, p_cab: f64, alpha1: f64, alpha2: f64) -> f64 {
    -alpha1 * e_cab * e_cab - alpha2 * p_cab
}

/// EMS reward: weighted fuel rate plus squared SOC deviation from `soc_ref`.
pub fn reward_ems(fuel_g_s: f64, soc: f64, beta1: f64, beta2: f64, soc_ref: f64) -> f64 {
    let d = soc - soc_ref;
    -beta1 * fuel_g_s - beta2 * d * d
}
