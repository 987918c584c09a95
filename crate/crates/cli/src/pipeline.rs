//! Pipeline stages shared by the subcommands.

use std::path::Path;

use anyhow::{bail, Context, Result};
use item_core::agents::rollout::{
    label_sequence, rollout_episode, CabinPolicy, Episode, EmsPolicy, EpisodeSetup, Mode,
};
use item_core::agents::train::{evaluate_policy, train, CurveRow, LabeledCycle, TrainOutcome};
use item_core::agents::AgentsConfig;
use item_core::clustering::ClusterModel;
use item_core::config::Config;
use item_core::cycles::{extract_features, load_cycle, segment, DriveCycle, MicroTrip, TripFeatures};
use item_core::nn::Mlp;
use item_core::plant::Plant;
use item_core::recognizer::{
    build_dataset, train_classifier, AccuracyReport, RecognizerBundle, SlidingRecognizer,
};

/// Loads a cycle given either a roster name or a file path.
pub fn resolve_cycle(cfg: &Config, name_or_path: &str) -> Result<DriveCycle> {
    let p = Path::new(name_or_path);
    let path = if p.extension().is_some() || p.components().count() > 1 {
        p.to_path_buf()
    } else {
        cfg.cycle_path(name_or_path)
    };
    load_cycle(&path).with_context(|| format!("loading cycle {}", path.display()))
}

pub fn training_cycles(cfg: &Config) -> Result<Vec<DriveCycle>> {
    if cfg.data.training.is_empty() {
        bail!("configuration lists no training cycles");
    }
    cfg.data.training.iter().map(|n| resolve_cycle(cfg, n)).collect()
}

pub struct Segmented {
    pub trips: Vec<MicroTrip>,
    pub features: Vec<TripFeatures>,
}

pub fn segment_all(cycles: &[DriveCycle], window_s: f64) -> Result<Segmented> {
    let mut trips = Vec::new();
    let mut features = Vec::new();
    for c in cycles {
        for t in segment(c, window_s)? {
            features.push(extract_features(&t, c.dt)?);
            trips.push(t);
        }
    }
    Ok(Segmented { trips, features })
}

pub struct Clustered {
    pub segmented: Segmented,
    pub model: ClusterModel,
    pub labels: Vec<usize>,
}

pub fn cluster(cfg: &Config, cycles: &[DriveCycle]) -> Result<Clustered> {
    let c = &cfg.clustering;
    let segmented = segment_all(cycles, c.window_s)?;
    let model = ClusterModel::fit_features(&segmented.features, c.k, c.seed, c.max_iter, c.tol)?;
    let labels = segmented.features.iter().map(|f| model.assign(f)).collect();
    Ok(Clustered {
        segmented,
        model,
        labels,
    })
}

pub struct TrainedRecognizer {
    pub clustered: Clustered,
    pub bundle: RecognizerBundle,
    pub report: AccuracyReport,
}

pub fn train_recognizer(cfg: &Config, cycles: &[DriveCycle]) -> Result<TrainedRecognizer> {
    let clustered = cluster(cfg, cycles)?;
    let r = &cfg.recognizer;
    let ds = build_dataset(
        &clustered.segmented.features,
        &clustered.labels,
        &clustered.model,
        r.val_fraction,
        r.split_seed,
    )?;
    let (net, report) = train_classifier(&ds, &r.classifier)?;
    let bundle = RecognizerBundle {
        cluster: clustered.model.clone(),
        net,
        window_s: cfg.clustering.window_s,
        mode: r.update_mode,
    };
    Ok(TrainedRecognizer {
        clustered,
        bundle,
        report,
    })
}

/// Attaches recognizer labels to a cycle; all zero without a bundle.
pub fn label_cycle(cycle: &DriveCycle, bundle: Option<&RecognizerBundle>) -> Result<LabeledCycle> {
    let labels = match bundle {
        Some(b) => {
            let mut r = SlidingRecognizer::from_bundle(b, cycle.dt)?;
            label_sequence(Some(&mut r), cycle)
        }
        None => label_sequence(None, cycle),
    };
    Ok(LabeledCycle {
        cycle: cycle.clone(),
        labels,
    })
}

/// Agent settings for one training seed: both learners get derived seeds.
pub fn seeded_agents(cfg: &AgentsConfig, seed: u64) -> AgentsConfig {
    let mut a = cfg.clone();
    a.cabin.seed = cfg.cabin.seed.wrapping_add(seed.wrapping_mul(1_000_003));
    a.ems.seed = cfg.ems.seed.wrapping_add(seed.wrapping_mul(1_000_033));
    a
}

pub fn train_agents(
    cfg: &Config,
    bundle: Option<&RecognizerBundle>,
    dc_enabled: bool,
    seed: u64,
    progress: impl FnMut(&CurveRow),
) -> Result<TrainOutcome> {
    let cycles = training_cycles(cfg)?;
    let labeled: Vec<LabeledCycle> = cycles
        .iter()
        .map(|c| label_cycle(c, bundle))
        .collect::<Result<_>>()?;
    let validation = if cfg.data.validation.is_empty() {
        None
    } else {
        Some(label_cycle(&resolve_cycle(cfg, &cfg.data.validation)?, bundle)?)
    };
    let agents = seeded_agents(&cfg.agents, seed);
    let mut plant = Plant::new(cfg.plant.clone())?;
    Ok(train(
        &mut plant,
        &agents,
        &cfg.training,
        &labeled,
        validation.as_ref(),
        dc_enabled,
        &cfg.report,
        progress,
    )?)
}

pub fn evaluate_agents(
    cfg: &Config,
    cabin: &Mlp,
    ems: &Mlp,
    cycle: &LabeledCycle,
    dc_enabled: bool,
) -> Result<Episode> {
    let mut plant = Plant::new(cfg.plant.clone())?;
    Ok(evaluate_policy(&mut plant, &cfg.agents, cabin, ems, cycle, dc_enabled, &cfg.report)?)
}

/// Rule-based reference runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RulePolicy {
    /// Engine always on tracking demand, thermostat climate control.
    Naive,
    /// SOC-band thermostat EMS, thermostat climate control.
    Baseline,
}

pub fn run_rule(cfg: &Config, cycle: &DriveCycle, policy: RulePolicy) -> Result<Episode> {
    let mut plant = Plant::new(cfg.plant.clone())?;
    let labels = vec![0; cycle.len()];
    let setup = EpisodeSetup {
        cycle,
        labels: &labels,
        dc_enabled: false,
        mode: Mode::Eval,
        rewards: &cfg.agents.rewards,
        obs: &cfg.agents.obs,
        cabin_two_bit: cfg.agents.cabin_two_bit,
        aggregate: &cfg.report,
        keep_transitions: false,
    };
    let ems = match policy {
        RulePolicy::Naive => EmsPolicy::Naive,
        RulePolicy::Baseline => EmsPolicy::Baseline(&cfg.baseline),
    };
    Ok(rollout_episode(&setup, &mut plant, CabinPolicy::Thermostat, ems)?)
}
