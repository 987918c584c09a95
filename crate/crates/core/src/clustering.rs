//! K-means over standardized micro-trip features and minimum-distance
//! assignment.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cycles::TripFeatures;
use crate::{Error, Result};

pub type Point = [f64; 2];

const FORMAT_TAG: &str = "item-cluster-model";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    /// Centers in standardized feature space.
    pub centers: Vec<Point>,
    pub feat_mean: Point,
    pub feat_scale: Point,
    pub inertia: f64,
}

/// Per-iteration record of a Lloyd run.
#[derive(Debug, Clone, Default)]
pub struct FitTrace {
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub labels: Vec<usize>,
    pub iterations: usize,
}

pub fn sq_dist(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Index of the nearest center; ties go to the lowest index.
pub fn nearest(centers: &[Point], p: &Point) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Z-scores each feature column using the population standard deviation.
pub fn normalize(features: &[TripFeatures]) -> Result<(Vec<Point>, Point, Point)> {
    if features.len() < 2 {
        return Err(Error::Validation(format!(
            "normalization needs at least 2 samples, got {}",
            features.len()
        )));
    }
    let n = features.len() as f64;
    let raw: Vec<Point> = features.iter().map(|f| f.as_array()).collect();
    let mut mean = [0.0; 2];
    let mut scale = [0.0; 2];
    for d in 0..2 {
        mean[d] = raw.iter().map(|p| p[d]).sum::<f64>() / n;
        let var = raw.iter().map(|p| (p[d] - mean[d]).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::Validation(format!(
                "feature column {d} has zero variance"
            )));
        }
        scale[d] = var.sqrt();
    }
    let points = raw
        .iter()
        .map(|p| [(p[0] - mean[0]) / scale[0], (p[1] - mean[1]) / scale[1]])
        .collect();
    Ok((points, mean, scale))
}

fn kmeans_pp_init(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // rounding can exhaust target at a zero-weight tail
            if d2[chosen] <= 0.0 {
                chosen = d2
                    .iter()
                    .enumerate()
                    .rev()
                    .find(|(_, w)| **w > 0.0)
                    .map(|(i, _)| i)
                    .unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn distinct_count(points: &[Point], limit: usize) -> usize {
    let mut seen: Vec<Point> = Vec::new();
    for p in points {
        if !seen.contains(p) {
            seen.push(*p);
            if seen.len() >= limit {
                break;
            }
        }
    }
    seen.len()
}

/// Lloyd's algorithm with k-means++ seeding, returning the per-iteration trace.
pub fn kmeans_fit_traced(
    points: &[Point],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<(ClusterModel, FitTrace)> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::Argument(format!(
            "k-means with k={k} needs at least {k} points, got {}",
            points.len()
        )));
    }
    if distinct_count(points, k) < k {
        return Err(Error::Validation(format!(
            "fewer than {k} distinct points; centers cannot be distinct"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp_init(points, k, &mut rng);
    let mut labels = vec![0usize; points.len()];
    let mut trace = FitTrace::default();

    for iter in 0..max_iter.max(1) {
        let mut inertia = 0.0;
        for (l, p) in labels.iter_mut().zip(points) {
            *l = nearest(&centers, p);
            inertia += sq_dist(p, &centers[*l]);
        }
        trace.inertia_history.push(inertia);
        trace.iterations = iter + 1;

        let mut sums = vec![[0.0; 2]; k];
        let mut counts = vec![0usize; k];
        for (l, p) in labels.iter().zip(points) {
            sums[*l][0] += p[0];
            sums[*l][1] += p[1];
            counts[*l] += 1;
        }
        let mut shift: f64 = 0.0;
        let mut new_centers = centers.clone();
        for j in 0..k {
            if counts[j] > 0 {
                let c = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
                shift = shift.max(sq_dist(&c, &centers[j]).sqrt());
                new_centers[j] = c;
            }
        }
        // empty clusters restart at the point farthest from its own center
        for j in 0..k {
            if counts[j] == 0 {
                let (far, _) = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, &new_centers[labels[i]])))
                    .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
                new_centers[j] = points[far];
                shift = f64::INFINITY;
            }
        }
        centers = new_centers;
        if shift < tol {
            break;
        }
    }

    // final assignment against the converged centers
    let mut inertia = 0.0;
    for (l, p) in labels.iter_mut().zip(points) {
        *l = nearest(&centers, p);
        inertia += sq_dist(p, &centers[*l]);
    }
    trace.inertia_history.push(inertia);
    trace.labels = labels;

    let model = ClusterModel {
        k,
        centers,
        feat_mean: [0.0, 0.0],
        feat_scale: [1.0, 1.0],
        inertia,
    };
    Ok((model, trace))
}

pub fn kmeans_fit(
    points: &[Point],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel> {
    kmeans_fit_traced(points, k, seed, max_iter, tol).map(|(m, _)| m)
}

impl ClusterModel {
    /// Standardizes raw features, fits k-means and orders the clusters by
    /// ascending center average speed.
    pub fn fit_features(
        features: &[TripFeatures],
        k: usize,
        seed: u64,
        max_iter: usize,
        tol: f64,
    ) -> Result<Self> {
        let (points, mean, scale) = normalize(features)?;
        let mut model = kmeans_fit(&points, k, seed, max_iter, tol)?;
        model.feat_mean = mean;
        model.feat_scale = scale;
        model.sort_by_avg_speed();
        Ok(model)
    }

    pub fn sort_by_avg_speed(&mut self) {
        self.centers
            .sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap_or(std::cmp::Ordering::Equal));
    }

    pub fn normalize_point(&self, f: &TripFeatures) -> Point {
        [
            (f.avg_speed - self.feat_mean[0]) / self.feat_scale[0],
            (f.max_accel - self.feat_mean[1]) / self.feat_scale[1],
        ]
    }

    /// Minimum-distance label of a raw feature pair.
    pub fn assign(&self, feature: &TripFeatures) -> usize {
        nearest(&self.centers, &self.normalize_point(feature))
    }

    pub fn assign_normalized(&self, point: &Point) -> usize {
        nearest(&self.centers, point)
    }

    /// Centers mapped back to raw (m/s, m/s²) units.
    pub fn raw_centers(&self) -> Vec<Point> {
        self.centers
            .iter()
            .map(|c| {
                [
                    c[0] * self.feat_scale[0] + self.feat_mean[0],
                    c[1] * self.feat_scale[1] + self.feat_mean[1],
                ]
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{FORMAT_TAG} v{FORMAT_VERSION}\n");
        s.push_str(&format!("k {}\n", self.k));
        s.push_str(&format!("feat_mean {} {}\n", self.feat_mean[0], self.feat_mean[1]));
        s.push_str(&format!("feat_scale {} {}\n", self.feat_scale[0], self.feat_scale[1]));
        s.push_str(&format!("inertia {}\n", self.inertia));
        for c in &self.centers {
            s.push_str(&format!("center {} {}\n", c[0], c[1]));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fmt = |m: &str| Error::Format(format!("cluster model: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| fmt("empty file"))?;
        if header.trim() != format!("{FORMAT_TAG} v{FORMAT_VERSION}") {
            return Err(fmt(&format!("unsupported header `{header}`")));
        }
        let mut field = |key: &str, n: usize| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| fmt(&format!("missing `{key}`")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(fmt(&format!("expected `{key}`, found `{line}`")));
            }
            let vals = parts
                .map(|p| p.parse::<f64>().map_err(|e| fmt(&format!("{key}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != n {
                return Err(fmt(&format!("{key}: expected {n} values, found {}", vals.len())));
            }
            Ok(vals)
        };
        let k = field("k", 1)?[0];
        if k < 1.0 || k.fract() != 0.0 {
            return Err(fmt("k must be a positive integer"));
        }
        let k = k as usize;
        let mean = field("feat_mean", 2)?;
        let scale = field("feat_scale", 2)?;
        let inertia = field("inertia", 1)?[0];
        let mut centers = Vec::with_capacity(k);
        for _ in 0..k {
            let c = field("center", 2)?;
            centers.push([c[0], c[1]]);
        }
        if scale.iter().any(|s| !(*s > 0.0)) {
            return Err(fmt("feat_scale components must be positive"));
        }
        Ok(ClusterModel {
            k,
            centers,
            feat_mean: [mean[0], mean[1]],
            feat_scale: [scale[0], scale[1]],
            inertia,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(pts: &[(f64, f64)]) -> Vec<TripFeatures> {
        pts.iter()
            .map(|&(a, b)| TripFeatures {
                avg_speed: a,
                max_accel: b,
            })
            .collect()
    }

    #[test]
    fn normalize_two_points() {
        let (pts, mean, scale) = normalize(&feats(&[(0.0, 0.0), (2.0, 2.0)])).unwrap();
        assert_eq!(pts, vec![[-1.0, -1.0], [1.0, 1.0]]);
        assert_eq!(mean, [1.0, 1.0]);
        assert_eq!(scale, [1.0, 1.0]);
    }

    #[test]
    fn normalize_rejects_constant_column() {
        let err = normalize(&feats(&[(1.0, 0.0), (1.0, 2.0), (1.0, 3.0)])).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn normalize_is_idempotent_on_standardized_data() {
        let input = feats(&[(-1.0, 1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, -1.0)]);
        let (pts, _, _) = normalize(&input).unwrap();
        for (p, f) in pts.iter().zip(&input) {
            assert!((p[0] - f.avg_speed).abs() < 1e-12);
            assert!((p[1] - f.max_accel).abs() < 1e-12);
        }
    }

    #[test]
    fn k_equals_n_recovers_points() {
        let pts = vec![[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let m = kmeans_fit(&pts, 3, 7, 100, 1e-9).unwrap();
        assert_eq!(m.inertia, 0.0);
        let mut c = m.centers.clone();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut p = pts.clone();
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(c, p);
    }

    #[test]
    fn too_few_points_is_argument_error() {
        let err = kmeans_fit(&[[0.0, 0.0], [1.0, 1.0]], 3, 0, 10, 1e-6).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn assign_exact_center_and_ties() {
        let m = ClusterModel {
            k: 3,
            centers: vec![[-1.0, 0.0], [0.0, 5.0], [1.0, 0.0]],
            feat_mean: [0.0, 0.0],
            feat_scale: [1.0, 1.0],
            inertia: 0.0,
        };
        let at = |a, b| TripFeatures {
            avg_speed: a,
            max_accel: b,
        };
        assert_eq!(m.assign(&at(0.0, 5.0)), 1);
        assert_eq!(m.assign(&at(0.0, 0.0)), 0);
    }

    #[test]
    fn text_round_trip_and_errors() {
        let m = ClusterModel {
            k: 2,
            centers: vec![[0.1, -0.3], [1.0 / 3.0, 2.5e-17]],
            feat_mean: [7.25, 0.9],
            feat_scale: [4.0, 0.31],
            inertia: 12.5,
        };
        assert_eq!(ClusterModel::from_text(&m.to_text()).unwrap(), m);
        let truncated: String = m.to_text().lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(matches!(ClusterModel::from_text(&truncated), Err(Error::Format(_))));
        let wrong = m.to_text().replace("v1", "v9");
        assert!(matches!(ClusterModel::from_text(&wrong), Err(Error::Format(_))));
    }
}
