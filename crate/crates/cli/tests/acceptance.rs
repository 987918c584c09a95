//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the lines are always shown. The process exits
//! non-zero on a failed criterion only when `ITEM_ACCEPTANCE_STRICT` is set.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use item_cli::checkpoint::Checkpoint;
use item_cli::pipeline::{evaluate_agents, label_cycle, resolve_cycle, run_rule, train_recognizer, training_cycles, RulePolicy};
use item_core::agents::dqn::DqnAgent;
use item_core::agents::obs::Observation;
use item_core::agents::replay::Transition;
use item_core::agents::reward::reward_ems;
use item_core::agents::rollout::TraceRow;
use item_core::agents::AgentConfig;
use item_core::clustering::{kmeans_fit, kmeans_fit_traced, sq_dist, ClusterModel, Point};
use item_core::config::Config;
use item_core::control::{apply_ems_action, EmsLimits, EMS_HOLD, EMS_OFF};
use item_core::cycles::{extract_features, segment, window_samples, DriveCycle, TripFeatures};
use item_core::manifest::RunManifest;
use item_core::nn::{Gradients, Loss, Mlp, OutputActivation};
use item_core::plant::battery::{
    battery_step, cell_current, cycles_to_eol, eol_throughput_ah, max_cell_power, BatteryState,
};
use item_core::plant::params::{AgingParams, BatteryParams, CabinThermalParams, PlantParams, VehicleParams};
use item_core::plant::thermal::cabin_thermal_step;
use item_core::plant::vehicle::demand;
use item_core::plant::{Actions, Plant};
use item_core::recognizer::{classify, train_classifier, ClassifierConfig, RecognitionDataset, SlidingRecognizer, UpdateMode};
use item_core::report::{read_json, ComparisonReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn config_file() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../config/default.toml")
}

fn config() -> Config {
    Config::load(config_file()).expect("bundled configuration")
}

// ---------------------------------------------------------------- physics

fn ac1_physics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut eq_worst: f64 = 0.0;
    for _ in 0..10_000 {
        let ocv = rng.random_range(3.0..4.2);
        let v1 = rng.random_range(-0.05..0.1);
        let r0 = rng.random_range(1e-3..2e-2);
        let frac: f64 = rng.random_range(0.01..0.99);
        let pmax = max_cell_power(ocv, v1, r0);
        let p = if rng.random_bool(0.5) { frac * pmax } else { -2.0 * frac * pmax };
        let i = cell_current(p, ocv, v1, r0).map_err(|e| e.to_string())?;
        eq_worst = eq_worst.max((i * (ocv - v1 - i * r0) - p).abs() / p.abs());
    }

    let dt = 0.1;
    let bp = BatteryParams::default();
    let tau_b = bp.heat_capacity() / (bp.convection_w_m2_c * bp.area_m2);
    let mut s = BatteryState::fresh(0.6, 35.0);
    let mut bat_worst: f64 = 0.0;
    for k in 1..=(10.0 * tau_b / dt).ceil() as usize {
        battery_step(&mut s, 0.0, 0.0, 25.0, dt, &bp);
        bat_worst = bat_worst.max((s.temp_c - 25.0 - 10.0 * (-(k as f64) * dt / tau_b).exp()).abs() / 10.0);
    }
    let cp = CabinThermalParams { solar_w: 0.0, ..CabinThermalParams::default() };
    let tau_c = cp.heat_capacity() / (cp.roof_ua_w_c + cp.window_ua_w_c + cp.transmission_ua_w_c);
    let mut t = 35.0;
    let mut cab_worst: f64 = 0.0;
    for k in 1..=(10.0 * tau_c / dt).ceil() as usize {
        t = cabin_thermal_step(t, 0.0, 30.0, dt, &cp).0;
        cab_worst = cab_worst.max((t - 30.0 - 5.0 * (-(k as f64) * dt / tau_c).exp()).abs() / 5.0);
    }

    let params = PlantParams::default();
    let rg = params.vehicle.planetary_ratio;
    let mut plant = Plant::new(params).map_err(|e| e.to_string())?;
    let cycle = urban_cycle(598);
    let mut speed_worst: f64 = 0.0;
    for i in 0..cycle.len() - 1 {
        let v_mid = 0.5 * (cycle.speed[i] + cycle.speed[i + 1]);
        let p_ice = if i % 40 < 20 { 15e3 } else { 0.0 };
        let out = plant
            .step(v_mid, cycle.accel(i), 0.0, Actions { p_ice_w: p_ice, heat: false, cool: true }, 1.0)
            .map_err(|e| e.to_string())?;
        let sh = &out.shafts;
        speed_worst = speed_worst.max(((1.0 + rg) * sh.w_e - sh.w_m2 - rg * sh.w_ring).abs());
    }

    let vp = VehicleParams {
        mass_kg: 1500.0,
        gravity: 9.81,
        rolling_coeff: 0.015,
        air_density: 1.2,
        drag_coeff: 0.3,
        frontal_area_m2: 2.25,
        ..VehicleParams::default()
    };
    let d = demand(20.0, 0.0, 0.0, &vp);
    let demand_err = [(d.aero_n, 162.0), (d.rolling_n, 220.725), (d.force_n, 382.725), (d.power_w, 7654.5)]
        .iter()
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    ensure(
        eq_worst < 1e-6 && bat_worst < 1e-3 && cab_worst < 1e-3 && speed_worst < 1e-9 && demand_err < 1e-9,
        format!(
            "current reconstruction {eq_worst:.1e}, battery/cabin relaxation {bat_worst:.1e}/{cab_worst:.1e}, \
             speed residual {speed_worst:.1e}, demand {demand_err:.1e}"
        ),
    )
}

fn urban_cycle(len: usize) -> DriveCycle {
    let mut v = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    while v.len() < len {
        let peak: f64 = rng.random_range(4.0..14.0);
        let ramp = rng.random_range(6..16);
        v.extend((0..ramp).map(|k| peak * k as f64 / ramp as f64));
        v.extend(std::iter::repeat_n(peak, rng.random_range(3..20)));
        v.extend((0..ramp).rev().map(|k| peak * k as f64 / ramp as f64));
        v.extend(std::iter::repeat_n(0.0, rng.random_range(2..12)));
    }
    v.truncate(len);
    DriveCycle::new("urban_synthetic", 1.0, v).expect("valid cycle")
}

// ---------------------------------------------------------------- aging

fn ac2_aging(episodes: &[(String, Vec<TraceRow>)]) -> Check {
    let a = AgingParams::default();
    let q_n = 6.5;
    let m: f64 = 29_230.4;
    let (ea, r, z): (f64, f64, f64) = (31_700.0, 8.314, 0.55);
    let mut worst: f64 = 0.0;
    for temp_c in [0.0, 25.0, 45.0] {
        let a_tol = (20.0 / (m * (-ea / (r * (temp_c + 273.15))).exp())).powf(1.0 / z);
        let got = eol_throughput_ah(&a, 2.0, temp_c);
        worst = worst.max(((got - a_tol) / a_tol).abs());
        worst = worst.max(((cycles_to_eol(got, q_n) - a_tol / q_n) / (a_tol / q_n)).abs());
    }
    let mut rising = Vec::new();
    for (name, trace) in episodes {
        if trace.iter().any(|r| r.soh_end > r.soh) || trace.windows(2).any(|w| w[1].soh > w[0].soh) {
            rising.push(name.clone());
        }
    }
    ensure(
        worst < 1e-9 && rising.is_empty(),
        format!(
            "A_tol/N worst relative error {worst:.1e}; SOH non-increasing over {} episodes{}",
            episodes.len(),
            if rising.is_empty() { String::new() } else { format!(", rose in {rising:?}") }
        ),
    )
}

// ---------------------------------------------------------------- clustering

fn brute_force_inertia(points: &[Point], k: usize) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    for code in 0..k.pow(n as u32) {
        let labels: Vec<usize> = (0..n).map(|i| code / k.pow(i as u32) % k).collect();
        let mut inertia = 0.0;
        let mut empty = false;
        for g in 0..k {
            let members: Vec<&Point> = points.iter().zip(&labels).filter(|(_, l)| **l == g).map(|(p, _)| p).collect();
            if members.is_empty() {
                empty = true;
                break;
            }
            let c = members.len() as f64;
            let centroid = [members.iter().map(|p| p[0]).sum::<f64>() / c, members.iter().map(|p| p[1]).sum::<f64>() / c];
            inertia += members.iter().map(|p| sq_dist(p, &centroid)).sum::<f64>();
        }
        if !empty {
            best = best.min(inertia);
        }
    }
    best
}

fn ac3_clustering() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut hits = 0;
    for seed in 0..100u64 {
        let pts: Vec<Point> = (0..6)
            .map(|i| {
                let g = (i / 2) as f64;
                [g * 4.0 + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0) + g]
            })
            .collect();
        let opt = brute_force_inertia(&pts, 3);
        let m = kmeans_fit(&pts, 3, seed, 100, 1e-12).map_err(|e| e.to_string())?;
        if (m.inertia - opt).abs() <= 1e-9 * opt.max(1.0) {
            hits += 1;
        }
    }

    let mut iterations = 0;
    let mut rises = 0;
    for seed in 0..50u64 {
        let n = rng.random_range(20..200);
        let pts: Vec<Point> = (0..n).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
        let (_, trace) = kmeans_fit_traced(&pts, rng.random_range(2..6), seed, 300, 0.0).map_err(|e| e.to_string())?;
        for w in trace.inertia_history.windows(2) {
            iterations += 1;
            if w[1] > w[0] * (1.0 + 1e-12) {
                rises += 1;
            }
        }
    }

    let feats = |rng: &mut ChaCha8Rng, n: usize| -> Vec<TripFeatures> {
        (0..n)
            .map(|_| TripFeatures { avg_speed: rng.random_range(0.0..30.0), max_accel: rng.random_range(-1.0..3.0) })
            .collect()
    };
    let model = ClusterModel::fit_features(&feats(&mut rng, 300), 3, 4, 300, 1e-10).map_err(|e| e.to_string())?;
    let queries = feats(&mut rng, 1000);
    let agree = queries
        .iter()
        .filter(|q| {
            let z = [(q.avg_speed - model.feat_mean[0]) / model.feat_scale[0], (q.max_accel - model.feat_mean[1]) / model.feat_scale[1]];
            let scan = (0..model.centers.len())
                .min_by(|&a, &b| sq_dist(&z, &model.centers[a]).total_cmp(&sq_dist(&z, &model.centers[b])))
                .unwrap();
            model.assign(q) == scan
        })
        .count();

    ensure(
        hits >= 95 && rises == 0 && agree == queries.len(),
        format!("optimal partition {hits}/100, inertia rises {rises}/{iterations}, assign agreement {agree}/{}", queries.len()),
    )
}

// ---------------------------------------------------------------- recognizer

fn ac4_recognizer(cfg: &Config) -> Check {
    let cycles = training_cycles(cfg).map_err(|e| e.to_string())?;
    let trained = train_recognizer(cfg, &cycles).map_err(|e| e.to_string())?;
    let roster_acc = trained.report.val_accuracy;

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let centres = [[-4.0, 0.0], [4.0, 0.0], [0.0, 5.0]];
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..200 {
            let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            inputs.push([centre[0] + a, centre[1] + b]);
            labels.push(c);
        }
    }
    let (val_idx, train_idx) = (0..inputs.len()).partition(|i| i % 5 == 0);
    let ds = RecognitionDataset { inputs, labels, classes: 3, train_idx, val_idx, seed: 0 };
    let (_, blobs) = train_classifier(&ds, &ClassifierConfig { epochs: 60, ..ClassifierConfig::default() }).map_err(|e| e.to_string())?;

    let b = &trained.bundle;
    let mut mismatches = 0;
    let mut checked = 0;
    for cycle in &cycles {
        let cap = window_samples(b.window_s, cycle.dt);
        let offline: Vec<usize> = segment(cycle, b.window_s)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|t| classify(&b.cluster, &b.net, &extract_features(t, cycle.dt).unwrap()).unwrap())
            .collect();
        for mode in [UpdateMode::Boundary, UpdateMode::Sliding] {
            let mut r = SlidingRecognizer::new(b.cluster.clone(), b.net.clone(), b.window_s, cycle.dt, mode).map_err(|e| e.to_string())?;
            let stream: Vec<usize> = cycle.speed.iter().map(|v| r.recognize_step(*v)).collect();
            for (j, label) in offline.iter().enumerate() {
                checked += 1;
                if stream[(j + 1) * cap - 1] != *label {
                    mismatches += 1;
                }
            }
        }
    }
    ensure(
        roster_acc >= 0.85 && blobs.val_accuracy >= 0.99 && mismatches == 0,
        format!(
            "roster held-out accuracy {roster_acc:.3}, synthetic {:.3}, streaming mismatches {mismatches}/{checked}",
            blobs.val_accuracy
        ),
    )
}

// ---------------------------------------------------------------- gradients

fn gradient_check(net: &Mlp, input: &[f64], loss: Loss<'_>, seed: u64) -> f64 {
    let (_, g) = net.backward(input, loss).unwrap();
    let flat: Vec<f64> = flatten(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let idx = rng.random_range(0..net.param_count());
        let p0 = *net.params().nth(idx).unwrap();
        let mut plus = net.clone();
        *plus.params_mut().nth(idx).unwrap() = p0 + h;
        let mut minus = net.clone();
        *minus.params_mut().nth(idx).unwrap() = p0 - h;
        let fd = (plus.backward(input, loss).unwrap().0 - minus.backward(input, loss).unwrap().0) / (2.0 * h);
        worst = worst.max((flat[idx] - fd).abs() / flat[idx].abs().max(fd.abs()).max(1e-6));
    }
    worst
}

fn flatten(g: &Gradients) -> Vec<f64> {
    g.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
}

fn ac5_gradients() -> Check {
    let a = Mlp::new(&[2, 8, 3], OutputActivation::Softmax, 4).map_err(|e| e.to_string())?;
    let wa = gradient_check(&a, &[0.7, -1.3], Loss::CrossEntropy(&[0.0, 1.0, 0.0]), 1);
    let b = Mlp::new(&[5, 64, 64, 8], OutputActivation::Identity, 9).map_err(|e| e.to_string())?;
    let wb = gradient_check(&b, &[0.3, -0.2, 0.9, -1.1, 0.05], Loss::SquaredError(&[(0, 0.5), (3, -1.0), (7, 2.0)]), 2);
    ensure(wa < 1e-4 && wb < 1e-4, format!("worst relative error {wa:.1e} (softmax head), {wb:.1e} (regression head)"))
}

// ---------------------------------------------------------------- RL

const MDP: [[(usize, f64); 2]; 2] = [[(0, 0.0), (1, 1.0)], [(0, 2.0), (1, 0.0)]];

fn one_hot(s: usize) -> Observation {
    let mut o = [0.0; 7];
    o[s] = 1.0;
    o
}

fn mdp_error() -> Result<f64, String> {
    let gamma = 0.5;
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..10_000 {
        let prev = q;
        for (s, row) in q.iter_mut().enumerate() {
            for (a, v) in row.iter_mut().enumerate() {
                let (s2, r) = MDP[s][a];
                *v = r + gamma * prev[s2][0].max(prev[s2][1]);
            }
        }
    }
    let cfg = AgentConfig {
        gamma,
        batch_size: 16,
        warmup: 64,
        target_sync: 100,
        hidden: vec![16],
        learning_rate: 3e-3,
        seed: 3,
        ..AgentConfig::default()
    };
    let mut agent = DqnAgent::new(&cfg, 2).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut s = 0;
    while agent.updates < 10_000 {
        let a = rng.random_range(0..2);
        let (s2, r) = MDP[s][a];
        agent
            .observe(Transition { obs: one_hot(s), action: a, reward: r, next_obs: one_hot(s2), terminal: false })
            .map_err(|e| e.to_string())?;
        s = s2;
    }
    let mut worst: f64 = 0.0;
    for (st, row) in q.iter().enumerate() {
        let learned = agent.q_values(&one_hot(st)).map_err(|e| e.to_string())?;
        for a in 0..2 {
            worst = worst.max((learned[a] - row[a]).abs());
        }
    }
    Ok(worst)
}

const TOY_ACTIONS: [usize; 3] = [EMS_OFF, EMS_HOLD, 1];
const TOY_STEPS: usize = 10;

struct ToyEms {
    plant: Plant,
    speed: Vec<f64>,
    limits: EmsLimits,
    soc0: f64,
}

impl ToyEms {
    fn new() -> Self {
        let mut params = PlantParams::default();
        params.conditions.initial_soc = 0.6;
        params.conditions.ambient_c = 22.0;
        let plant = Plant::new(params).unwrap();
        let limits = EmsLimits::from(&plant.params.powertrain.engine);
        let soc0 = plant.state.battery.soc;
        ToyEms { plant, speed: vec![0.0, 2.0, 4.0, 6.0, 8.0, 9.0, 9.0, 9.0, 8.0, 6.0, 4.0], limits, soc0 }
    }

    fn obs(&self, plant: &Plant, i: usize) -> Observation {
        let s = &plant.state;
        [
            i as f64 / TOY_STEPS as f64,
            s.p_ice_w / 20e3,
            (s.battery.soc - self.soc0) * 100.0,
            self.speed[i] / 10.0,
            (self.speed[i + 1] - self.speed[i]) / 2.0,
            0.0,
            0.0,
        ]
    }

    fn step(&self, plant: &mut Plant, i: usize, a: usize) -> f64 {
        let p_ice = apply_ems_action(plant.state.p_ice_w, TOY_ACTIONS[a], &self.limits);
        let v_mid = 0.5 * (self.speed[i] + self.speed[i + 1]);
        let out = plant
            .step(v_mid, self.speed[i + 1] - self.speed[i], 0.0, Actions { p_ice_w: p_ice, ..Default::default() }, 1.0)
            .unwrap();
        reward_ems(out.fuel_g_s, plant.state.battery.soc, 1.0, 5000.0, 0.7)
    }

    fn best_return(&self, plant: &Plant, i: usize) -> f64 {
        if i == TOY_STEPS {
            return 0.0;
        }
        (0..3)
            .map(|a| {
                let mut p = plant.clone();
                self.step(&mut p, i, a) + self.best_return(&p, i + 1)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn toy_gap() -> Result<(f64, f64), String> {
    let env = ToyEms::new();
    let optimum = env.best_return(&env.plant, 0);
    let cfg = AgentConfig {
        gamma: 0.99,
        eps_decay_steps: 15_000,
        batch_size: 32,
        warmup: 200,
        target_sync: 200,
        hidden: vec![32, 32],
        reward_scale: 0.1,
        seed: 9,
        ..AgentConfig::default()
    };
    let mut agent = DqnAgent::new(&cfg, 3).map_err(|e| e.to_string())?;
    for _ in 0..2500 {
        let mut plant = env.plant.clone();
        for i in 0..TOY_STEPS {
            let obs = env.obs(&plant, i);
            let a = agent.act(&obs, true).map_err(|e| e.to_string())?;
            let reward = env.step(&mut plant, i, a);
            let terminal = i + 1 == TOY_STEPS;
            let next_obs = if terminal { obs } else { env.obs(&plant, i + 1) };
            agent.observe(Transition { obs, action: a, reward, next_obs, terminal }).map_err(|e| e.to_string())?;
        }
    }
    let mut plant = env.plant.clone();
    let mut greedy = 0.0;
    for i in 0..TOY_STEPS {
        let a = agent.act(&env.obs(&plant, i), false).map_err(|e| e.to_string())?;
        greedy += env.step(&mut plant, i, a);
    }
    Ok((optimum, greedy))
}

fn ac6_rl() -> Check {
    let t0 = Instant::now();
    let mdp = mdp_error()?;
    let (optimum, greedy) = toy_gap()?;
    let gap = (optimum - greedy) / optimum.abs();
    let secs = t0.elapsed().as_secs_f64();
    ensure(
        mdp < 1e-2 && gap <= 0.05 && secs < 300.0,
        format!("MDP max |Q error| {mdp:.2e}; toy greedy {greedy:.3} vs optimum {optimum:.3} (gap {:.2}%); {secs:.1} s", 100.0 * gap),
    )
}

// ---------------------------------------------------------------- end to end

fn item(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_item"))
        .arg("--config")
        .arg(config_file())
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`item {}` exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

struct Trained {
    aware: PathBuf,
    blind: PathBuf,
    compare: PathBuf,
    train_secs: f64,
}

const SEEDS: &str = "3";

fn train_all(root: &Path) -> Result<Trained, String> {
    let aware = root.join("aware");
    let blind = root.join("blind");
    let compare = root.join("compare");
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let t0 = Instant::now();
    item(&["train-agents", "--seeds", SEEDS, "--out", &s(&aware)])?;
    let recognizer = aware.join("recognizer");
    item(&["train-agents", "--seeds", SEEDS, "--no-dc", "--recognizer", &s(&recognizer), "--out", &s(&blind)])?;
    let train_secs = t0.elapsed().as_secs_f64();
    item(&["compare", "--aware", &s(&aware), "--blind", &s(&blind), "--seeds", SEEDS, "--workers", "2", "--out", &s(&compare)])?;
    Ok(Trained { aware, blind, compare, train_secs })
}

fn ac7_end_to_end(cfg: &Config, run: &Trained, naive_fuel: f64) -> Check {
    let report: ComparisonReport = read_json(run.compare.join("report.json")).map_err(|e| e.to_string())?;
    let m = &report.rows.first().ok_or("empty report")?.aware;
    let soc0 = cfg.plant.conditions.initial_soc;
    let per_seed: Vec<String> = report.rows.iter().map(|r| format!("{:.4}", r.aware.soc_final)).collect();
    let ok = (m.soc_final - soc0).abs() <= 0.05
        && m.mean_abs_cab_error_c <= 3.0
        && m.fuel_g < naive_fuel
        && !m.terminated
        && cfg.data.training.len() >= 3
        && run.train_secs < 1800.0;
    ensure(
        ok,
        format!(
            "seed 0 on {}: final SOC {:.4} (initial {soc0}), mean |cabin error| {:.3} C, fuel {:.1} g vs naive {naive_fuel:.1} g; \
             aware final SOC by seed [{}]; training {:.0} s",
            report.cycle,
            m.soc_final,
            m.mean_abs_cab_error_c,
            m.fuel_g,
            per_seed.join(", "),
            run.train_secs
        ),
    )
}

fn ac8_ablation(run: &Trained) -> Check {
    let report: ComparisonReport = read_json(run.compare.join("report.json")).map_err(|e| e.to_string())?;
    let d = &report.mean_deltas;
    let pct = |x: Option<f64>| x.map_or("n/a".to_owned(), |v| format!("{v:+.2}%"));
    ensure(
        report.seeds.len() >= 3 && report.aware.fuel_g.mean <= report.blind.fuel_g.mean && report.aware.tm_energy_wh.mean <= report.blind.tm_energy_wh.mean,
        format!(
            "{} seeds: fuel {:.1} vs {:.1} g ({} reduction, reference {:+.2}%), TM energy {:.1} vs {:.1} Wh ({} reduction, reference {:+.2}%)",
            report.seeds.len(),
            report.aware.fuel_g.mean,
            report.blind.fuel_g.mean,
            pct(d.fuel_reduction_pct),
            report.reference.fuel_pct,
            report.aware.tm_energy_wh.mean,
            report.blind.tm_energy_wh.mean,
            pct(d.tm_energy_reduction_pct),
            report.reference.tm_energy_pct,
        ),
    )
}

fn ac9_determinism(run: &Trained, root: &Path) -> Check {
    let manifest: RunManifest = read_json(run.compare.join("manifest.json")).map_err(|e| e.to_string())?;
    let rerun = root.join("compare-rerun");
    let mut args: Vec<String> = Vec::new();
    let mut it = manifest.command.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--out" | "--workers" | "--config" => {
                it.next();
            }
            _ => args.push(a.clone()),
        }
    }
    args.extend(["--workers".into(), "1".into(), "--out".into(), rerun.to_str().unwrap().into()]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    item(&refs)?;
    let a = std::fs::read(run.compare.join("report.json")).map_err(|e| e.to_string())?;
    let b = std::fs::read(rerun.join("report.json")).map_err(|e| e.to_string())?;
    let ta = std::fs::read(run.compare.join("report.txt")).map_err(|e| e.to_string())?;
    let tb = std::fs::read(rerun.join("report.txt")).map_err(|e| e.to_string())?;
    ensure(
        a == b && ta == tb,
        format!("parallel run vs single-worker re-run: report.json {} bytes {}, report.txt {}", a.len(), if a == b { "identical" } else { "differ" }, if ta == tb { "identical" } else { "differs" }),
    )
}

// ---------------------------------------------------------------- driver

fn report_line(id: &str, title: &str, result: &Check, failures: &mut Vec<String>) {
    match result {
        Ok(detail) => println!("PASS {id} {title}: {detail}"),
        Err(detail) => {
            println!("FAIL {id} {title}: {detail}");
            failures.push(id.to_owned());
        }
    }
}

fn main() {
    // libtest-style flags such as --nocapture are accepted and ignored
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let cfg = config();
    let mut failures = Vec::new();
    let t0 = Instant::now();

    report_line("ac1", "physics oracles", &ac1_physics(), &mut failures);
    report_line("ac3", "clustering", &ac3_clustering(), &mut failures);
    report_line("ac4", "recognizer", &ac4_recognizer(&cfg), &mut failures);
    report_line("ac5", "gradient check", &ac5_gradients(), &mut failures);
    report_line("ac6", "RL correctness", &ac6_rl(), &mut failures);

    let root = tempfile::tempdir().expect("scratch directory");
    let run = train_all(root.path());
    let eval_cycle = resolve_cycle(&cfg, &cfg.data.evaluation).expect("evaluation cycle");
    let naive = run_rule(&cfg, &eval_cycle, RulePolicy::Naive).expect("naive run");
    let baseline = run_rule(&cfg, &eval_cycle, RulePolicy::Baseline).expect("baseline run");
    let mut episodes = vec![("naive".to_owned(), naive.trace.clone()), ("baseline".to_owned(), baseline.trace)];

    match &run {
        Ok(run) => {
            for dir in [&run.aware, &run.blind] {
                let ckpt = Checkpoint::open(dir).expect("checkpoint");
                let labeled = label_cycle(&eval_cycle, ckpt.recognizer.as_ref()).expect("labels");
                for &seed in &ckpt.info.seeds {
                    let (cab, ems) = ckpt.networks(seed, false).expect("networks");
                    let ep = evaluate_agents(&cfg, &cab, &ems, &labeled, ckpt.info.dc_enabled).expect("evaluation");
                    episodes.push((format!("{}-seed-{seed}", dir.file_name().unwrap().to_string_lossy()), ep.trace));
                }
            }
            report_line("ac2", "aging arithmetic and SOH", &ac2_aging(&episodes), &mut failures);
            report_line("ac7", "end-to-end training", &ac7_end_to_end(&cfg, run, naive.metrics.fuel_g), &mut failures);
            report_line("ac8", "ablation direction", &ac8_ablation(run), &mut failures);
            report_line("ac9", "determinism", &ac9_determinism(run, root.path()), &mut failures);
        }
        Err(e) => {
            report_line("ac2", "aging arithmetic and SOH", &ac2_aging(&episodes), &mut failures);
            for (id, title) in [("ac7", "end-to-end training"), ("ac8", "ablation direction"), ("ac9", "determinism")] {
                report_line(id, title, &Err(e.clone()), &mut failures);
            }
        }
    }

    println!(
        "acceptance: {}/9 criteria passed in {:.0} s{}",
        9 - failures.len(),
        t0.elapsed().as_secs_f64(),
        if failures.is_empty() { String::new() } else { format!(" (failed: {})", failures.join(", ")) }
    );
    if !failures.is_empty() && std::env::var_os("ITEM_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
