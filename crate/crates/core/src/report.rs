//! Episode aggregation, aware-versus-blind comparison and plot-ready CSV output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::rollout::{EpisodeMetrics, TraceRow};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregateConfig {
    /// Comfort statistics ignore steps before this time.
    pub warmup_s: f64,
    pub comfort_band_c: f64,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        AggregateConfig {
            warmup_s: 120.0,
            comfort_band_c: 2.0,
        }
    }
}

/// Streaming accumulator behind [`aggregate`]; chunks can be merged in order.
#[derive(Debug, Clone, Default)]
pub struct Aggregator {
    dt: f64,
    setpoint_c: f64,
    warmup_s: f64,
    band_c: f64,
    steps: usize,
    fuel_g: f64,
    tm_j: f64,
    post_steps: usize,
    abs_err_sum: f64,
    in_band: usize,
    traction: usize,
    limited: usize,
    conflicts: usize,
    terminated: bool,
    return_cab: f64,
    return_ems: f64,
    first: Option<TraceRow>,
    last: Option<TraceRow>,
}

impl Aggregator {
    pub fn new(dt: f64, setpoint_c: f64, cfg: &AggregateConfig) -> Self {
        Aggregator {
            dt,
            setpoint_c,
            warmup_s: cfg.warmup_s,
            band_c: cfg.comfort_band_c,
            ..Default::default()
        }
    }

    pub fn push(&mut self, r: &TraceRow) {
        self.steps += 1;
        self.fuel_g += r.fuel_g_s * self.dt;
        self.tm_j += r.p_tm_w * self.dt;
        if r.t_s >= self.warmup_s {
            let e = (r.t_cabin_c - self.setpoint_c).abs();
            self.post_steps += 1;
            self.abs_err_sum += e;
            if e <= self.band_c {
                self.in_band += 1;
            }
        }
        self.traction += r.traction_violation as usize;
        self.limited += r.power_limited as usize;
        self.conflicts += r.hvac_conflict as usize;
        self.terminated |= r.terminal;
        self.return_cab += r.r_cab;
        self.return_ems += r.r_ems;
        if self.first.is_none() {
            self.first = Some(*r);
        }
        self.last = Some(*r);
    }

    /// Appends a later chunk.
    pub fn merge(&mut self, o: &Aggregator) {
        self.steps += o.steps;
        self.fuel_g += o.fuel_g;
        self.tm_j += o.tm_j;
        self.post_steps += o.post_steps;
        self.abs_err_sum += o.abs_err_sum;
        self.in_band += o.in_band;
        self.traction += o.traction;
        self.limited += o.limited;
        self.conflicts += o.conflicts;
        self.terminated |= o.terminated;
        self.return_cab += o.return_cab;
        self.return_ems += o.return_ems;
        if self.first.is_none() {
            self.first = o.first;
        }
        if o.last.is_some() {
            self.last = o.last;
        }
    }

    pub fn finish(&self) -> Result<EpisodeMetrics> {
        let (Some(first), Some(last)) = (self.first, self.last) else {
            return Err(Error::Argument("cannot aggregate an empty trace".into()));
        };
        let (mean_err, comfort) = if self.post_steps > 0 {
            (
                self.abs_err_sum / self.post_steps as f64,
                self.in_band as f64 / self.post_steps as f64,
            )
        } else {
            (0.0, 1.0)
        };
        Ok(EpisodeMetrics {
            cycle: String::new(),
            steps: self.steps,
            fuel_g: self.fuel_g,
            tm_energy_wh: self.tm_j / 3600.0,
            soc_initial: first.soc,
            soc_final: last.soc_end,
            soh_loss: first.soh - last.soh_end,
            mean_abs_cab_error_c: mean_err,
            comfort_fraction: comfort,
            traction_violations: self.traction,
            power_limit_events: self.limited,
            hvac_conflicts: self.conflicts,
            terminated: self.terminated,
            return_cab: self.return_cab,
            return_ems: self.return_ems,
        })
    }
}

pub fn aggregate(
    trace: &[TraceRow],
    dt: f64,
    setpoint_c: f64,
    cfg: &AggregateConfig,
) -> Result<EpisodeMetrics> {
    let mut agg = Aggregator::new(dt, setpoint_c, cfg);
    trace.iter().for_each(|r| agg.push(r));
    agg.finish()
}

/// `100 * (blind - aware) / blind`; undefined for a zero blind value.
pub fn reduction_pct(blind: f64, aware: f64) -> Option<f64> {
    if blind == 0.0 {
        return if aware == 0.0 { Some(0.0) } else { None };
    }
    Some(100.0 * (blind - aware) / blind)
}

/// Aware-minus-blind differences. Cost reductions are positive when the
/// aware variant is cheaper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub fuel_reduction_pct: Option<f64>,
    pub tm_energy_reduction_pct: Option<f64>,
    pub fuel_g: f64,
    pub tm_energy_wh: f64,
    pub mean_abs_cab_error_c: f64,
    pub soc_final: f64,
    pub soh_loss: f64,
}

impl Deltas {
    pub fn between(aware: &EpisodeMetrics, blind: &EpisodeMetrics) -> Self {
        Deltas {
            fuel_reduction_pct: reduction_pct(blind.fuel_g, aware.fuel_g),
            tm_energy_reduction_pct: reduction_pct(blind.tm_energy_wh, aware.tm_energy_wh),
            fuel_g: aware.fuel_g - blind.fuel_g,
            tm_energy_wh: aware.tm_energy_wh - blind.tm_energy_wh,
            mean_abs_cab_error_c: aware.mean_abs_cab_error_c - blind.mean_abs_cab_error_c,
            soc_final: aware.soc_final - blind.soc_final,
            soh_loss: aware.soh_loss - blind.soh_loss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantStats {
    pub fuel_g: MeanStd,
    pub tm_energy_wh: MeanStd,
    pub mean_abs_cab_error_c: MeanStd,
    pub soc_final: MeanStd,
    pub soh_loss: MeanStd,
}

impl VariantStats {
    pub fn of(m: &[EpisodeMetrics]) -> Self {
        let col = |f: fn(&EpisodeMetrics) -> f64| MeanStd::of(&m.iter().map(f).collect::<Vec<_>>());
        VariantStats {
            fuel_g: col(|x| x.fuel_g),
            tm_energy_wh: col(|x| x.tm_energy_wh),
            mean_abs_cab_error_c: col(|x| x.mean_abs_cab_error_c),
            soc_final: col(|x| x.soc_final),
            soh_loss: col(|x| x.soh_loss),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub aware: EpisodeMetrics,
    pub blind: EpisodeMetrics,
    pub baseline: Option<EpisodeMetrics>,
    pub deltas: Deltas,
}

/// Reductions quoted for this comparison in earlier work, shown next to the
/// measured ones for context only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceReductions {
    pub fuel_pct: f64,
    pub tm_energy_pct: f64,
}

impl Default for ReferenceReductions {
    fn default() -> Self {
        ReferenceReductions {
            fuel_pct: 16.14,
            tm_energy_pct: 8.22,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub format: String,
    pub cycle: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<SeedRow>,
    pub aware: VariantStats,
    pub blind: VariantStats,
    pub baseline: Option<VariantStats>,
    /// Deltas between the per-variant means.
    pub mean_deltas: Deltas,
    pub reference: ReferenceReductions,
}

pub const REPORT_FORMAT: &str = "item-compare v1";

pub fn compare(
    seeds: &[u64],
    aware: &[EpisodeMetrics],
    blind: &[EpisodeMetrics],
    baseline: Option<&[EpisodeMetrics]>,
) -> Result<ComparisonReport> {
    if seeds.is_empty() {
        return Err(Error::Argument("comparison needs at least one seed".into()));
    }
    if aware.len() != seeds.len() || blind.len() != seeds.len() {
        return Err(Error::Argument(format!(
            "{} seeds but {} aware and {} blind episodes",
            seeds.len(),
            aware.len(),
            blind.len()
        )));
    }
    if let Some(b) = baseline {
        if b.len() != seeds.len() {
            return Err(Error::Argument("baseline episode count differs from seeds".into()));
        }
    }
    let cycle = aware[0].cycle.clone();
    let all = aware.iter().chain(blind).chain(baseline.unwrap_or(&[]));
    if let Some(m) = all.into_iter().find(|m| m.cycle != cycle) {
        return Err(Error::Argument(format!(
            "episodes from different cycles: {cycle} and {}",
            m.cycle
        )));
    }
    let rows = seeds
        .iter()
        .enumerate()
        .map(|(i, s)| SeedRow {
            seed: *s,
            aware: aware[i].clone(),
            blind: blind[i].clone(),
            baseline: baseline.map(|b| b[i].clone()),
            deltas: Deltas::between(&aware[i], &blind[i]),
        })
        .collect();
    let a = VariantStats::of(aware);
    let b = VariantStats::of(blind);
    let mean_deltas = Deltas {
        fuel_reduction_pct: reduction_pct(b.fuel_g.mean, a.fuel_g.mean),
        tm_energy_reduction_pct: reduction_pct(b.tm_energy_wh.mean, a.tm_energy_wh.mean),
        fuel_g: a.fuel_g.mean - b.fuel_g.mean,
        tm_energy_wh: a.tm_energy_wh.mean - b.tm_energy_wh.mean,
        mean_abs_cab_error_c: a.mean_abs_cab_error_c.mean - b.mean_abs_cab_error_c.mean,
        soc_final: a.soc_final.mean - b.soc_final.mean,
        soh_loss: a.soh_loss.mean - b.soh_loss.mean,
    };
    Ok(ComparisonReport {
        format: REPORT_FORMAT.into(),
        cycle,
        seeds: seeds.to_vec(),
        rows,
        aware: a,
        blind: b,
        baseline: baseline.map(VariantStats::of),
        mean_deltas,
        reference: ReferenceReductions::default(),
    })
}

impl ComparisonReport {
    /// Human-readable summary lines.
    pub fn summary(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:+.2}%"));
        let mut s = format!("cycle {} over {} seed(s)\n", self.cycle, self.seeds.len());
        s += &format!(
            "  fuel       aware {:.2} g  blind {:.2} g  reduction {} (reference {:.2}%)\n",
            self.aware.fuel_g.mean,
            self.blind.fuel_g.mean,
            pct(self.mean_deltas.fuel_reduction_pct),
            self.reference.fuel_pct
        );
        s += &format!(
            "  TM energy  aware {:.2} Wh blind {:.2} Wh reduction {} (reference {:.2}%)\n",
            self.aware.tm_energy_wh.mean,
            self.blind.tm_energy_wh.mean,
            pct(self.mean_deltas.tm_energy_reduction_pct),
            self.reference.tm_energy_pct
        );
        s += &format!(
            "  cabin |e|  aware {:.3} C  blind {:.3} C\n  final SOC  aware {:.4}  blind {:.4}\n",
            self.aware.mean_abs_cab_error_c.mean,
            self.blind.mean_abs_cab_error_c.mean,
            self.aware.soc_final.mean,
            self.blind.soc_final.mean
        );
        s
    }
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("JSON encoding failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_trace_csv(trace: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for r in trace {
        w.serialize(r)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Panels written by [`emit_plots`], with the trace column each one reads.
pub const PLOT_PANELS: [(&str, fn(&TraceRow) -> f64); 6] = [
    ("battery_temp", |r| r.t_bat_c),
    ("engine_temp", |r| r.t_coolant_c),
    ("cabin_temp", |r| r.t_cabin_c),
    ("soc", |r| r.soc),
    ("soh", |r| r.soh),
    ("fuel_cumulative", |r| r.fuel_cum_g),
];

/// One `time_s,aware,blind` CSV per panel. A shorter trace leaves empty cells.
pub fn emit_plots(aware: &[TraceRow], blind: &[TraceRow], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows = aware.len().max(blind.len());
    let mut written = Vec::new();
    for (name, column) in PLOT_PANELS {
        let path = dir.join(format!("{name}.csv"));
        let mut text = String::from("time_s,aware,blind\n");
        for i in 0..rows {
            let t = aware.get(i).or(blind.get(i)).map(|r| r.t_s).unwrap_or_default();
            let cell = |tr: &[TraceRow]| tr.get(i).map(|r| format!("{}", column(r))).unwrap_or_default();
            text += &format!("{t},{},{}\n", cell(aware), cell(blind));
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
