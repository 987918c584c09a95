//! Driving-condition classifier trained on k-means labels, and its streaming
//! form over a trailing speed window.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterModel, Point};
use crate::cycles::{window_features, window_samples, TripFeatures};
use crate::nn::{adam_step, argmax, AdamState, Gradients, Loss, Mlp, OutputActivation};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionDataset {
    /// Standardized feature pairs.
    pub inputs: Vec<Point>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub seed: u64,
}

/// Builds a stratified train/validation split. Inputs are standardized with
/// the cluster model's stored statistics.
pub fn build_dataset(
    features: &[TripFeatures],
    labels: &[usize],
    model: &ClusterModel,
    val_fraction: f64,
    seed: u64,
) -> Result<RecognitionDataset> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "validation fraction must lie in (0,1), got {val_fraction}"
        )));
    }
    if features.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if features.len() < 10 {
        return Err(Error::Validation(format!(
            "need at least 10 labelled trips, got {}",
            features.len()
        )));
    }
    let classes = model.k;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Validation(format!("label {l} out of range 0..{classes}")));
        }
        by_class[l].push(i);
    }
    if let Some(c) = by_class.iter().position(|v| v.is_empty()) {
        return Err(Error::Validation(format!("class {c} has no examples")));
    }

    // largest-remainder allocation keeps the total at round(n * fraction)
    let n = features.len();
    let total_val = ((n as f64) * val_fraction).round() as usize;
    let quotas: Vec<f64> = by_class.iter().map(|v| v.len() as f64 * val_fraction).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| {
        (quotas[b] - quotas[b].floor())
            .partial_cmp(&(quotas[a] - quotas[a].floor()))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut remaining = total_val.saturating_sub(alloc.iter().sum());
    for &c in order.iter().cycle().take(classes * 2) {
        if remaining == 0 {
            break;
        }
        if alloc[c] + 1 < by_class[c].len() {
            alloc[c] += 1;
            remaining -= 1;
        }
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() >= 2 {
            alloc[c] = alloc[c].clamp(1, members.len() - 1);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        val_idx.extend_from_slice(&shuffled[..alloc[c]]);
        train_idx.extend_from_slice(&shuffled[alloc[c]..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();

    Ok(RecognitionDataset {
        inputs: features.iter().map(|f| model.normalize_point(f)).collect(),
        labels: labels.to_vec(),
        classes,
        train_idx,
        val_idx,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: vec![16, 16],
            epochs: 300,
            batch: 32,
            lr: 1e-2,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub final_loss: f64,
    pub epochs: usize,
}

pub fn accuracy(net: &Mlp, inputs: &[Point], labels: &[usize], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for &i in idx {
        if argmax(&net.forward(&inputs[i])?) == labels[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / idx.len() as f64)
}

/// Mini-batch cross-entropy training with Adam.
pub fn train_classifier(
    ds: &RecognitionDataset,
    cfg: &ClassifierConfig,
) -> Result<(Mlp, AccuracyReport)> {
    if cfg.batch == 0 {
        return Err(Error::Argument("batch size must be positive".into()));
    }
    let mut sizes = vec![2];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(ds.classes);
    let mut net = Mlp::new(&sizes, OutputActivation::Softmax, cfg.seed)?;
    let mut adam = AdamState::new(&net, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order = ds.train_idx.clone();
    let mut final_loss = f64::NAN;
    let mut target = vec![0.0; ds.classes];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            let mut grads = Gradients::zeros_like(&net);
            for &i in batch {
                target.iter_mut().for_each(|t| *t = 0.0);
                target[ds.labels[i]] = 1.0;
                epoch_loss += net.accumulate_backward(
                    &ds.inputs[i],
                    Loss::CrossEntropy(&target),
                    &mut grads,
                )?;
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut net, &grads, &mut adam);
        }
        final_loss = epoch_loss / order.len().max(1) as f64;
        if !final_loss.is_finite() || !net.is_finite() {
            return Err(Error::Training(format!(
                "classifier loss became non-finite at epoch {epoch} (loss={final_loss})"
            )));
        }
    }

    let report = AccuracyReport {
        train_accuracy: accuracy(&net, &ds.inputs, &ds.labels, &ds.train_idx)?,
        val_accuracy: accuracy(&net, &ds.inputs, &ds.labels, &ds.val_idx)?,
        final_loss,
        epochs: cfg.epochs,
    };
    Ok((net, report))
}

/// Offline classification of a raw feature pair.
pub fn classify(model: &ClusterModel, net: &Mlp, features: &TripFeatures) -> Result<usize> {
    Ok(argmax(&net.forward(&model.normalize_point(features))?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Re-classify the trailing window at every step once the buffer is full.
    Sliding,
    /// Re-classify only when a whole new window has been collected.
    Boundary,
}

/// Real-time recognizer over a trailing window of speed samples.
#[derive(Debug, Clone)]
pub struct SlidingRecognizer {
    pub window_s: f64,
    pub dt: f64,
    pub mode: UpdateMode,
    pub cluster_model: ClusterModel,
    pub net: Mlp,
    capacity: usize,
    buffer: VecDeque<f64>,
    steps: usize,
    current_label: usize,
}

impl SlidingRecognizer {
    pub fn new(
        cluster_model: ClusterModel,
        net: Mlp,
        window_s: f64,
        dt: f64,
        mode: UpdateMode,
    ) -> Result<Self> {
        let capacity = window_samples(window_s, dt);
        if capacity < 2 {
            return Err(Error::Argument(format!(
                "recognition window {window_s} s at dt={dt} holds fewer than 2 samples"
            )));
        }
        if net.input_size() != 2 || net.output_size() != cluster_model.k {
            return Err(Error::Argument(format!(
                "classifier shape {:?} does not match 2 features / {} classes",
                net.layer_sizes, cluster_model.k
            )));
        }
        Ok(SlidingRecognizer {
            window_s,
            dt,
            mode,
            cluster_model,
            net,
            capacity,
            buffer: VecDeque::with_capacity(capacity),
            steps: 0,
            current_label: 0,
        })
    }

    pub fn from_bundle(bundle: &RecognizerBundle, dt: f64) -> Result<Self> {
        Self::new(
            bundle.cluster.clone(),
            bundle.net.clone(),
            bundle.window_s,
            dt,
            bundle.mode,
        )
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
        self.steps = 0;
        self.current_label = 0;
    }

    pub fn current_label(&self) -> usize {
        self.current_label
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a speed sample and returns the current condition label.
    pub fn recognize_step(&mut self, v: f64) -> usize {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(v);
        self.steps += 1;
        let full = self.buffer.len() == self.capacity;
        let due = match self.mode {
            UpdateMode::Sliding => full,
            UpdateMode::Boundary => full && self.steps % self.capacity == 0,
        };
        if due {
            let (a, b) = self.buffer.as_slices();
            let window: Vec<f64> = a.iter().chain(b).copied().collect();
            // window has >= 2 samples and the net shape was checked at construction
            let features = window_features(&window, self.dt).expect("full window");
            self.current_label =
                classify(&self.cluster_model, &self.net, &features).expect("shape checked");
        }
        self.current_label
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BundleManifest {
    format: String,
    window_s: f64,
    mode: UpdateMode,
    cluster_file: String,
    classifier_file: String,
}

/// Persisted recognizer: cluster model + classifier + manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognizerBundle {
    pub cluster: ClusterModel,
    pub net: Mlp,
    pub window_s: f64,
    pub mode: UpdateMode,
}

impl RecognizerBundle {
    pub const CLUSTER_FILE: &'static str = "cluster.txt";
    pub const CLASSIFIER_FILE: &'static str = "classifier.mlp";
    pub const MANIFEST_FILE: &'static str = "recognizer.json";

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.cluster.save(dir.join(Self::CLUSTER_FILE))?;
        self.net.save(dir.join(Self::CLASSIFIER_FILE))?;
        let manifest = BundleManifest {
            format: "item-recognizer v1".into(),
            window_s: self.window_s,
            mode: self.mode,
            cluster_file: Self::CLUSTER_FILE.into(),
            classifier_file: Self::CLASSIFIER_FILE.into(),
        };
        let path = dir.join(Self::MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(Self::MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BundleManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if manifest.format != "item-recognizer v1" {
            return Err(Error::Format(format!(
                "{}: unsupported format `{}`",
                path.display(),
                manifest.format
            )));
        }
        Ok(RecognizerBundle {
            cluster: ClusterModel::load(dir.join(&manifest.cluster_file))?,
            net: Mlp::load(dir.join(&manifest.classifier_file))?,
            window_s: manifest.window_s,
            mode: manifest.mode,
        })
    }
}
