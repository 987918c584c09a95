//! Drive cycles, micro-trip segmentation and the two clustering features.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on consecutive timestamp deltas when checking uniform sampling.
const DT_TOLERANCE: f64 = 1e-6;

/// A uniformly sampled speed trace. Each sample covers `dt` seconds, so a
/// cycle of `n` samples lasts `n * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveCycle {
    pub name: String,
    pub dt: f64,
    pub speed: Vec<f64>,
    pub grade: Vec<f64>,
}

impl DriveCycle {
    /// Builds a flat-road cycle, validating `dt` and speeds.
    pub fn new(name: impl Into<String>, dt: f64, speed: Vec<f64>) -> Result<Self> {
        let grade = vec![0.0; speed.len()];
        Self::with_grade(name, dt, speed, grade)
    }

    pub fn with_grade(
        name: impl Into<String>,
        dt: f64,
        speed: Vec<f64>,
        grade: Vec<f64>,
    ) -> Result<Self> {
        let cycle = DriveCycle {
            name: name.into(),
            dt,
            speed,
            grade,
        };
        cycle.validate()?;
        Ok(cycle)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!(
                "cycle {}: dt must be positive, got {}",
                self.name, self.dt
            )));
        }
        if self.speed.is_empty() {
            return Err(Error::Validation(format!("cycle {} has no samples", self.name)));
        }
        if let Some((i, v)) = self
            .speed
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Validation(format!(
                "cycle {}: speed[{i}] = {v} is negative or non-finite",
                self.name
            )));
        }
        if self.grade.len() != self.speed.len() {
            return Err(Error::Validation(format!(
                "cycle {}: grade has {} samples, speed has {}",
                self.name,
                self.grade.len(),
                self.speed.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speed.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.speed.len() as f64 * self.dt
    }

    /// Forward-difference acceleration at sample `i`; zero at the last sample.
    pub fn accel(&self, i: usize) -> f64 {
        if i + 1 < self.speed.len() {
            (self.speed[i + 1] - self.speed[i]) / self.dt
        } else {
            0.0
        }
    }
}

/// One fixed-length window of a cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroTrip {
    pub parent: String,
    pub start_index: usize,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripFeatures {
    pub avg_speed: f64,
    pub max_accel: f64,
}

impl TripFeatures {
    pub fn as_array(&self) -> [f64; 2] {
        [self.avg_speed, self.max_accel]
    }
}

/// Reads a cycle CSV (`t_s,v_mps[,grade_rad]`, `#` comments). The cycle is
/// named after the file stem.
pub fn load_cycle(path: impl AsRef<Path>) -> Result<DriveCycle> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cycle".to_string());
    parse_cycle(&name, &path.display().to_string(), &text)
}

/// Parses cycle CSV text; `origin` is used in error messages.
pub fn parse_cycle(name: &str, origin: &str, text: &str) -> Result<DriveCycle> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let has_grade = match cols.as_slice() {
        ["t_s", "v_mps"] => false,
        ["t_s", "v_mps", "grade_rad"] => true,
        _ => {
            return Err(Error::Format(format!(
                "{origin}: expected header `t_s,v_mps[,grade_rad]`, found `{}`",
                cols.join(",")
            )))
        }
    };

    let mut times = Vec::new();
    let mut speed = Vec::new();
    let mut grade = Vec::new();
    for record in reader.records() {
        let record =
            record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != cols.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", cols.len(), record.len()),
            ));
        }
        let field = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|e| parse_err(line, format!("column {}: {e}", cols[i])))
        };
        let t = field(0)?;
        let v = field(1)?;
        if v < 0.0 {
            return Err(Error::Validation(format!(
                "{origin}: line {line}: negative speed {v}"
            )));
        }
        times.push(t);
        speed.push(v);
        grade.push(if has_grade { field(2)? } else { 0.0 });
    }

    if speed.is_empty() {
        return Err(Error::Validation(format!("{origin}: no data rows")));
    }
    let dt = if times.len() >= 2 {
        times[1] - times[0]
    } else {
        1.0
    };
    for (i, w) in times.windows(2).enumerate() {
        let delta = w[1] - w[0];
        if (delta - dt).abs() > DT_TOLERANCE {
            return Err(Error::Format(format!(
                "{origin}: non-uniform timestamps: step {i} has dt={delta}, expected {dt}"
            )));
        }
    }
    DriveCycle::with_grade(name, dt, speed, grade)
}

/// Writes a cycle in the same CSV format `load_cycle` reads.
pub fn write_cycle(cycle: &DriveCycle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let has_grade = cycle.grade.iter().any(|g| *g != 0.0);
    let mut out = String::new();
    out.push_str(if has_grade {
        "t_s,v_mps,grade_rad\n"
    } else {
        "t_s,v_mps\n"
    });
    for (i, v) in cycle.speed.iter().enumerate() {
        let t = i as f64 * cycle.dt;
        if has_grade {
            out.push_str(&format!("{t},{v},{}\n", cycle.grade[i]));
        } else {
            out.push_str(&format!("{t},{v}\n"));
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

fn interpolate(values: &[f64], dt: f64, t: f64) -> f64 {
    let x = t / dt;
    let i = x.floor() as usize;
    if i + 1 >= values.len() {
        return values[values.len() - 1];
    }
    let frac = x - i as f64;
    if frac == 0.0 {
        values[i]
    } else {
        values[i] + (values[i + 1] - values[i]) * frac
    }
}

/// Linear re-interpolation onto a uniform grid with period `dt_new` covering
/// the same sample span `[0, (n-1)*dt]`.
pub fn resample(cycle: &DriveCycle, dt_new: f64) -> Result<DriveCycle> {
    if !(dt_new > 0.0 && dt_new.is_finite()) {
        return Err(Error::Argument(format!(
            "resample period must be positive, got {dt_new}"
        )));
    }
    let span = (cycle.len() - 1) as f64 * cycle.dt;
    let count = (span / dt_new + 1e-9).floor() as usize + 1;
    let grid = |j: usize| j as f64 * dt_new;
    let speed = (0..count)
        .map(|j| interpolate(&cycle.speed, cycle.dt, grid(j)).max(0.0))
        .collect();
    let grade = (0..count)
        .map(|j| interpolate(&cycle.grade, cycle.dt, grid(j)))
        .collect();
    DriveCycle::with_grade(cycle.name.clone(), dt_new, speed, grade)
}

/// Number of samples in one window of `window_s` seconds.
pub fn window_samples(window_s: f64, dt: f64) -> usize {
    (window_s / dt + 1e-9).floor() as usize
}

/// Cuts the cycle into consecutive non-overlapping windows; the trailing
/// remainder shorter than a window is dropped.
pub fn segment(cycle: &DriveCycle, window_s: f64) -> Result<Vec<MicroTrip>> {
    let w = window_samples(window_s, cycle.dt);
    if w < 2 {
        return Err(Error::Argument(format!(
            "window of {window_s} s holds {w} samples at dt={}; need at least 2",
            cycle.dt
        )));
    }
    Ok(cycle
        .speed
        .chunks_exact(w)
        .enumerate()
        .map(|(k, chunk)| MicroTrip {
            parent: cycle.name.clone(),
            start_index: k * w,
            samples: chunk.to_vec(),
        })
        .collect())
}

/// Mean speed and maximum forward-difference acceleration of a sample window.
pub fn window_features(samples: &[f64], dt: f64) -> Result<TripFeatures> {
    if samples.len() < 2 {
        return Err(Error::Argument(format!(
            "feature extraction needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let avg_speed = samples.iter().sum::<f64>() / samples.len() as f64;
    let max_accel = samples
        .windows(2)
        .map(|w| (w[1] - w[0]) / dt)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(TripFeatures {
        avg_speed,
        max_accel,
    })
}

pub fn extract_features(trip: &MicroTrip, dt: f64) -> Result<TripFeatures> {
    window_features(&trip.samples, dt)
}
