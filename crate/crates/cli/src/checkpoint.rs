//! On-disk layout of trained agents.
//!
//! ```text
//! <dir>/checkpoint.json
//! <dir>/config.toml
//! <dir>/recognizer/          (recognition-aware runs only)
//! <dir>/seed-<k>/cabin.mlp, ems.mlp, cabin_final.mlp, ems_final.mlp, curves.csv
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use item_core::agents::train::{CurveRow, TrainOutcome};
use item_core::nn::Mlp;
use item_core::recognizer::RecognizerBundle;
use item_core::report::{read_json, write_json};
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_FORMAT: &str = "item-checkpoint v1";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const RECOGNIZER_DIR: &str = "recognizer";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub format: String,
    pub dc_enabled: bool,
    pub seeds: Vec<u64>,
    /// Episode of the kept checkpoint per seed; `None` when never evaluated.
    pub best_episodes: Vec<Option<usize>>,
}

pub fn seed_dir(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed-{seed}"))
}

pub fn write_curves(rows: &[CurveRow], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(
        f,
        "episode,cycle,steps,epsilon_cab,epsilon_ems,return_cab,return_ems,fuel_g,tm_energy_wh,soc_final,loss_cab,loss_ems,eval_return"
    )?;
    for r in rows {
        let eval = r.eval_return.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.episode,
            r.cycle,
            r.steps,
            r.epsilon_cab,
            r.epsilon_ems,
            r.return_cab,
            r.return_ems,
            r.fuel_g,
            r.tm_energy_wh,
            r.soc_final,
            r.loss_cab,
            r.loss_ems,
            eval
        )?;
    }
    Ok(())
}

pub fn save_seed(dir: &Path, seed: u64, outcome: &TrainOutcome) -> Result<()> {
    let d = seed_dir(dir, seed);
    fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    outcome.cabin_best.save(d.join("cabin.mlp"))?;
    outcome.ems_best.save(d.join("ems.mlp"))?;
    outcome.cabin_final.save(d.join("cabin_final.mlp"))?;
    outcome.ems_final.save(d.join("ems_final.mlp"))?;
    write_curves(&outcome.curves, &d.join("curves.csv"))
}

pub fn save_info(dir: &Path, info: &CheckpointInfo) -> Result<()> {
    Ok(write_json(info, dir.join(CHECKPOINT_FILE))?)
}

/// A loaded checkpoint directory.
pub struct Checkpoint {
    pub dir: PathBuf,
    pub info: CheckpointInfo,
    pub recognizer: Option<RecognizerBundle>,
}

impl Checkpoint {
    pub fn open(dir: &Path) -> Result<Self> {
        let info: CheckpointInfo = read_json(dir.join(CHECKPOINT_FILE))
            .with_context(|| format!("{} is not a checkpoint directory", dir.display()))?;
        if info.format != CHECKPOINT_FORMAT {
            bail!("{}: unsupported checkpoint format `{}`", dir.display(), info.format);
        }
        let recognizer = if info.dc_enabled {
            Some(RecognizerBundle::load(dir.join(RECOGNIZER_DIR))?)
        } else {
            None
        };
        Ok(Checkpoint {
            dir: dir.to_path_buf(),
            info,
            recognizer,
        })
    }

    /// Best-validation (or, with `final_nets`, last) cabin and EMS networks.
    pub fn networks(&self, seed: u64, final_nets: bool) -> Result<(Mlp, Mlp)> {
        if !self.info.seeds.contains(&seed) {
            bail!("checkpoint {} has no seed {seed}", self.dir.display());
        }
        let d = seed_dir(&self.dir, seed);
        let suffix = if final_nets { "_final" } else { "" };
        let cabin = Mlp::load(d.join(format!("cabin{suffix}.mlp")))?;
        let ems = Mlp::load(d.join(format!("ems{suffix}.mlp")))?;
        Ok((cabin, ems))
    }
}
