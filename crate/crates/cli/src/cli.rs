//! Argument parsing and subcommand dispatch.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use item_core::agents::rollout::Episode;
use item_core::config::Config;
use item_core::manifest::RunManifest;
use item_core::report::{
    compare, emit_plots, read_json, write_json, write_trace_csv, ComparisonReport, REPORT_FORMAT,
};

use crate::checkpoint::{save_info, save_seed, Checkpoint, CheckpointInfo, CHECKPOINT_FORMAT, RECOGNIZER_DIR};
use crate::pipeline::{
    cluster, evaluate_agents, label_cycle, resolve_cycle, run_rule, segment_all, train_agents,
    train_recognizer, training_cycles, RulePolicy,
};

/// Environment variable naming the directory that holds `default.toml`.
pub const CONFIG_ROOT_ENV: &str = "ITEM_CONFIG_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "item",
    version,
    about = "Driving-condition-aware thermal and energy management for a power-split hybrid"
)]
pub struct Cli {
    /// Configuration file. Defaults to $ITEM_CONFIG_ROOT/default.toml, then config/default.toml.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut cycles into fixed-length micro-trips and write their features.
    Segment(SegmentArgs),
    /// Fit the driving-condition clusters on the training roster.
    Cluster(OutArgs),
    /// Cluster, then train the condition classifier; writes a recognizer bundle.
    TrainRecognizer(OutArgs),
    /// Run a rule-based controller over one cycle.
    Simulate(SimulateArgs),
    /// Train the cabin and EMS agents.
    TrainAgents(TrainArgs),
    /// Run trained agents greedily over one cycle.
    Evaluate(EvaluateArgs),
    /// Compare recognition-aware and recognition-blind checkpoints.
    Compare(CompareArgs),
    /// Print a comparison summary and check the run's recorded digests.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Micro-trip length in seconds (default from the configuration).
    #[arg(long)]
    pub window: Option<f64>,
    /// Cycle names or CSV paths; defaults to the training roster.
    #[arg(long = "cycle")]
    pub cycles: Vec<String>,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Naive,
    Baseline,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Cycle name or CSV path; defaults to the evaluation cycle.
    #[arg(long)]
    pub cycle: Option<String>,
    #[arg(long, value_enum, default_value = "baseline")]
    pub policy: RuleArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Number of training seeds (0..N).
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Hide the driving-condition inputs from both agents.
    #[arg(long)]
    pub no_dc: bool,
    /// Override the configured episode count.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Reuse an existing recognizer bundle instead of training one.
    #[arg(long)]
    pub recognizer: Option<PathBuf>,
    /// Print one line per episode.
    #[arg(long)]
    pub verbose: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the last networks instead of the best-validation ones.
    #[arg(long = "final")]
    pub final_nets: bool,
    #[arg(long)]
    pub cycle: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub cycle: Option<String>,
    /// Checkpoint trained with driving-condition inputs.
    #[arg(long)]
    pub aware: PathBuf,
    /// Checkpoint trained without them.
    #[arg(long)]
    pub blind: PathBuf,
    /// Number of seeds (0..N) present in both checkpoints.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Parallel evaluation workers; results are merged in seed order.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Skip the rule-based baseline rows.
    #[arg(long)]
    pub no_baseline: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Comparison output directory.
    pub run: PathBuf,
}

pub fn config_path(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(CONFIG_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join("default.toml"),
        None => PathBuf::from("config/default.toml"),
    }
}

fn load_config(explicit: Option<&Path>) -> Result<(Config, PathBuf)> {
    let path = config_path(explicit);
    if !path.is_file() {
        bail!("configuration file not found: {}", path.display());
    }
    let cfg = Config::load(&path).with_context(|| format!("loading {}", path.display()))?;
    Ok((cfg, path))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Starts a manifest and writes the configuration snapshot into `out`.
fn begin_run(argv: &[String], cfg: &Config, out: &Path) -> Result<RunManifest> {
    create_dir(out)?;
    let text = cfg.to_toml_string()?;
    fs::write(out.join("config.toml"), &text)?;
    Ok(RunManifest::new(argv.to_vec(), cfg.hash()?, "config.toml".into()))
}

fn finish_run(mut m: RunManifest, out: &Path) -> Result<()> {
    m.add_tree(out)?;
    m.finish_and_write(out)?;
    Ok(())
}

/// Parses `argv` (program name first) and runs the selected subcommand.
pub fn run(cli: Cli, argv: &[String]) -> Result<()> {
    let argv = argv.get(1..).unwrap_or_default().to_vec();
    if let Command::Report(a) = cli.command {
        return cmd_report(a);
    }
    let (cfg, _) = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Segment(a) => cmd_segment(&cfg, &argv, a),
        Command::Cluster(a) => cmd_cluster(&cfg, &argv, a),
        Command::TrainRecognizer(a) => cmd_train_recognizer(&cfg, &argv, a),
        Command::Simulate(a) => cmd_simulate(&cfg, &argv, a),
        Command::TrainAgents(a) => cmd_train_agents(cfg, &argv, a),
        Command::Evaluate(a) => cmd_evaluate(&cfg, &argv, a),
        Command::Compare(a) => cmd_compare(&cfg, &argv, a),
        Command::Report(_) => unreachable!("handled above"),
    }
}

fn cmd_segment(cfg: &Config, argv: &[String], a: SegmentArgs) -> Result<()> {
    let window = a.window.unwrap_or(cfg.clustering.window_s);
    let cycles = if a.cycles.is_empty() {
        training_cycles(cfg)?
    } else {
        a.cycles.iter().map(|c| resolve_cycle(cfg, c)).collect::<Result<_>>()?
    };
    let seg = segment_all(&cycles, window)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let mut f = fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    writeln!(f, "cycle,start_index,avg_speed_mps,max_accel_mps2")?;
    for (t, feat) in seg.trips.iter().zip(&seg.features) {
        writeln!(f, "{},{},{},{}", t.parent, t.start_index, feat.avg_speed, feat.max_accel)?;
    }
    drop(f);
    println!("{} micro-trips of {window} s from {} cycle(s)", seg.trips.len(), cycles.len());
    let dir = a.out.parent().unwrap_or(Path::new(""));
    let mut m = RunManifest::new(argv.to_vec(), cfg.hash()?, String::new());
    m.cycles = cycles.iter().map(|c| c.name.clone()).collect();
    m.add_artifact(dir, &a.out)?;
    m.finished_unix_s = item_core::manifest::unix_now();
    write_json(&m, a.out.with_extension("manifest.json"))?;
    Ok(())
}

fn cmd_cluster(cfg: &Config, argv: &[String], a: OutArgs) -> Result<()> {
    let cycles = training_cycles(cfg)?;
    let mut m = begin_run(argv, cfg, &a.out)?;
    m.cycles = cycles.iter().map(|c| c.name.clone()).collect();
    let c = cluster(cfg, &cycles)?;
    c.model.save(a.out.join("cluster.txt"))?;
    let mut f = fs::File::create(a.out.join("labels.csv"))?;
    writeln!(f, "cycle,start_index,label")?;
    for (t, l) in c.segmented.trips.iter().zip(&c.labels) {
        writeln!(f, "{},{},{}", t.parent, t.start_index, l)?;
    }
    drop(f);
    let mut counts = vec![0usize; c.model.k];
    for &l in &c.labels {
        counts[l] += 1;
    }
    println!("{} micro-trips, cluster sizes {:?}, inertia {:.4}", c.labels.len(), counts, c.model.inertia);
    finish_run(m, &a.out)
}

fn cmd_train_recognizer(cfg: &Config, argv: &[String], a: OutArgs) -> Result<()> {
    let cycles = training_cycles(cfg)?;
    let mut m = begin_run(argv, cfg, &a.out)?;
    m.cycles = cycles.iter().map(|c| c.name.clone()).collect();
    let r = train_recognizer(cfg, &cycles)?;
    r.bundle.save(a.out.join(RECOGNIZER_DIR))?;
    write_json(&r.report, a.out.join("accuracy.json"))?;
    println!(
        "recognizer: train accuracy {:.3}, held-out accuracy {:.3}",
        r.report.train_accuracy, r.report.val_accuracy
    );
    finish_run(m, &a.out)
}

fn write_episode(ep: &Episode, dir: &Path, stem: &str) -> Result<()> {
    write_trace_csv(&ep.trace, dir.join(format!("{stem}.csv")))?;
    write_json(&ep.metrics, dir.join(format!("{stem}.json")))?;
    Ok(())
}

fn print_metrics(label: &str, ep: &Episode) {
    let m = &ep.metrics;
    println!(
        "{label}: fuel {:.2} g, TM energy {:.2} Wh, SOC {:.4} -> {:.4}, cabin |e| {:.3} C, comfort {:.3}",
        m.fuel_g, m.tm_energy_wh, m.soc_initial, m.soc_final, m.mean_abs_cab_error_c, m.comfort_fraction
    );
}

fn cmd_simulate(cfg: &Config, argv: &[String], a: SimulateArgs) -> Result<()> {
    let name = a.cycle.as_deref().unwrap_or(&cfg.data.evaluation);
    let cycle = resolve_cycle(cfg, name)?;
    let mut m = begin_run(argv, cfg, &a.out)?;
    m.cycles = vec![cycle.name.clone()];
    let policy = match a.policy {
        RuleArg::Naive => RulePolicy::Naive,
        RuleArg::Baseline => RulePolicy::Baseline,
    };
    let ep = run_rule(cfg, &cycle, policy)?;
    write_episode(&ep, &a.out, "trace")?;
    print_metrics(&format!("{:?}", a.policy).to_lowercase(), &ep);
    finish_run(m, &a.out)
}

fn cmd_train_agents(mut cfg: Config, argv: &[String], a: TrainArgs) -> Result<()> {
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    if let Some(n) = a.episodes {
        cfg.training.episodes = n;
    }
    let dc = !a.no_dc;
    let mut m = begin_run(argv, &cfg, &a.out)?;
    m.cycles = cfg.data.training.clone();
    m.cycles.push(cfg.data.validation.clone());
    let bundle = if !dc {
        None
    } else if let Some(dir) = &a.recognizer {
        Some(item_core::recognizer::RecognizerBundle::load(dir)?)
    } else {
        let r = train_recognizer(&cfg, &training_cycles(&cfg)?)?;
        eprintln!("recognizer held-out accuracy {:.3}", r.report.val_accuracy);
        Some(r.bundle)
    };
    if let Some(b) = &bundle {
        b.save(a.out.join(RECOGNIZER_DIR))?;
    }
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let mut best_episodes = Vec::new();
    for &seed in &seeds {
        let verbose = a.verbose;
        let outcome = train_agents(&cfg, bundle.as_ref(), dc, seed, |r| {
            if verbose || r.eval_return.is_some() {
                eprintln!(
                    "seed {seed} episode {:>4} {:<16} return cab {:>10.2} ems {:>9.2} fuel {:>8.2} g{}",
                    r.episode,
                    r.cycle,
                    r.return_cab,
                    r.return_ems,
                    r.fuel_g,
                    r.eval_return.map(|v| format!(" eval {v:.2}")).unwrap_or_default()
                );
            }
        })?;
        save_seed(&a.out, seed, &outcome)?;
        m.checkpoints.push(format!("seed-{seed}"));
        best_episodes.push(outcome.best_episode);
        println!(
            "seed {seed}: kept episode {:?} (validation return {:?})",
            outcome.best_episode, outcome.best_eval_return
        );
    }
    m.seeds = seeds.clone();
    save_info(
        &a.out,
        &CheckpointInfo {
            format: CHECKPOINT_FORMAT.into(),
            dc_enabled: dc,
            seeds,
            best_episodes,
        },
    )?;
    finish_run(m, &a.out)
}

fn cmd_evaluate(cfg: &Config, argv: &[String], a: EvaluateArgs) -> Result<()> {
    let ck = Checkpoint::open(&a.checkpoint)?;
    let name = a.cycle.as_deref().unwrap_or(&cfg.data.evaluation);
    let cycle = resolve_cycle(cfg, name)?;
    let (cabin, ems) = ck.networks(a.seed, a.final_nets)?;
    let mut m = begin_run(argv, cfg, &a.out)?;
    m.cycles = vec![cycle.name.clone()];
    m.seeds = vec![a.seed];
    m.checkpoints = vec![ck.dir.display().to_string()];
    let lc = label_cycle(&cycle, ck.recognizer.as_ref())?;
    let ep = evaluate_agents(cfg, &cabin, &ems, &lc, ck.info.dc_enabled)?;
    write_episode(&ep, &a.out, "trace")?;
    print_metrics("agents", &ep);
    finish_run(m, &a.out)
}

struct SeedResult {
    aware: Episode,
    blind: Episode,
}

fn eval_seed(cfg: &Config, aware: &Checkpoint, blind: &Checkpoint, cycle: &item_core::cycles::DriveCycle, seed: u64) -> Result<SeedResult> {
    let run = |ck: &Checkpoint| -> Result<Episode> {
        let (cabin, ems) = ck.networks(seed, false)?;
        let lc = label_cycle(cycle, ck.recognizer.as_ref())?;
        evaluate_agents(cfg, &cabin, &ems, &lc, ck.info.dc_enabled)
    };
    Ok(SeedResult {
        aware: run(aware)?,
        blind: run(blind)?,
    })
}

fn cmd_compare(cfg: &Config, argv: &[String], a: CompareArgs) -> Result<()> {
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let aware = Checkpoint::open(&a.aware)?;
    let blind = Checkpoint::open(&a.blind)?;
    if !aware.info.dc_enabled {
        bail!("{} was trained without driving-condition inputs", a.aware.display());
    }
    if blind.info.dc_enabled {
        bail!("{} was trained with driving-condition inputs", a.blind.display());
    }
    let name = a.cycle.as_deref().unwrap_or(&cfg.data.evaluation);
    let cycle = resolve_cycle(cfg, name)?;
    let seeds: Vec<u64> = (0..a.seeds).collect();

    let workers = a.workers.max(1);
    let mut results: Vec<Option<Result<SeedResult>>> = (0..seeds.len()).map(|_| None).collect();
    for (chunk_seeds, chunk_out) in seeds.chunks(workers).zip(results.chunks_mut(workers)) {
        if workers == 1 {
            chunk_out[0] = Some(eval_seed(cfg, &aware, &blind, &cycle, chunk_seeds[0]));
            continue;
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk_seeds
                .iter()
                .map(|&seed| {
                    let (aw, bl, cy) = (&aware, &blind, &cycle);
                    s.spawn(move || eval_seed(cfg, aw, bl, cy, seed))
                })
                .collect();
            for (slot, h) in chunk_out.iter_mut().zip(handles) {
                *slot = Some(h.join().unwrap_or_else(|_| Err(anyhow!("evaluation worker panicked"))));
            }
        });
    }
    let results: Vec<SeedResult> = results
        .into_iter()
        .map(|r| r.expect("every seed evaluated"))
        .collect::<Result<_>>()?;

    let mut m = begin_run(argv, cfg, &a.out)?;
    m.cycles = vec![cycle.name.clone()];
    m.seeds = seeds.clone();
    m.checkpoints = vec![aware.dir.display().to_string(), blind.dir.display().to_string()];
    let traces = a.out.join("traces");
    create_dir(&traces)?;
    for (seed, r) in seeds.iter().zip(&results) {
        write_trace_csv(&r.aware.trace, traces.join(format!("seed-{seed}-aware.csv")))?;
        write_trace_csv(&r.blind.trace, traces.join(format!("seed-{seed}-blind.csv")))?;
    }
    let baseline = if a.no_baseline {
        None
    } else {
        let ep = run_rule(cfg, &cycle, RulePolicy::Baseline)?;
        write_trace_csv(&ep.trace, traces.join("baseline.csv"))?;
        Some(vec![ep.metrics; seeds.len()])
    };
    let aware_m: Vec<_> = results.iter().map(|r| r.aware.metrics.clone()).collect();
    let blind_m: Vec<_> = results.iter().map(|r| r.blind.metrics.clone()).collect();
    let report = compare(&seeds, &aware_m, &blind_m, baseline.as_deref())?;
    write_json(&report, a.out.join("report.json"))?;
    fs::write(a.out.join("report.txt"), report.summary())?;
    emit_plots(&results[0].aware.trace, &results[0].blind.trace, a.out.join("plots"))?;
    print!("{}", report.summary());
    finish_run(m, &a.out)
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let dir = &a.run;
    let report: ComparisonReport = read_json(dir.join("report.json"))
        .with_context(|| format!("{} holds no comparison report", dir.display()))?;
    if report.format != REPORT_FORMAT {
        bail!("unsupported report format `{}`", report.format);
    }
    print!("{}", report.summary());
    for row in &report.rows {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:+.2}%"));
        println!(
            "  seed {}: fuel {} TM {} (aware {:.2} g / {:.2} Wh, blind {:.2} g / {:.2} Wh)",
            row.seed,
            pct(row.deltas.fuel_reduction_pct),
            pct(row.deltas.tm_energy_reduction_pct),
            row.aware.fuel_g,
            row.aware.tm_energy_wh,
            row.blind.fuel_g,
            row.blind.tm_energy_wh
        );
    }
    let manifest_path = dir.join(item_core::manifest::MANIFEST_FILE);
    if manifest_path.is_file() {
        let m = RunManifest::load(&manifest_path)?;
        m.verify(dir)?;
        println!("manifest: {} artifacts verified", m.artifacts.len());
    }
    Ok(())
}
