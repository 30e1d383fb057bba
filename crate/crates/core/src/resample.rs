//! Re-sampling baselines: voxel-grid averaging, farthest point sampling,
//! and geometrically stable sampling. These are the preprocessing
//! alternatives the adaptive weighting is compared against.

use std::collections::HashMap;

use nalgebra::{Matrix6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud};
use crate::spatial::estimate_normals;

/// Which re-sampler to run and its single tuning knob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ResampleSpec {
    /// One mean point per occupied voxel of the given side length (meters).
    Voxel { size: f64 },
    /// Keep this fraction of points, chosen by farthest point sampling.
    Fps { rate: f64 },
    /// Keep this fraction of points by stochastic-greedy constraint
    /// balancing over `candidate_pool` random candidates per step.
    Gss { rate: f64, candidate_pool: usize },
}

impl ResampleSpec {
    pub fn apply(&self, cloud: &PointCloud, seed: u64) -> Result<PointCloud> {
        match *self {
            ResampleSpec::Voxel { size } => voxel_grid(cloud, size),
            ResampleSpec::Fps { rate } => fps(cloud, rate, seed),
            ResampleSpec::Gss {
                rate,
                candidate_pool,
            } => gss(cloud, rate, candidate_pool, seed),
        }
    }
}

/// Buckets points on a grid anchored at the cloud's minimum corner and
/// returns one mean point per occupied voxel, ordered by lexicographic
/// voxel index. Normals and weights are dropped.
pub fn voxel_grid(cloud: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    if !(voxel_size > 0.0) {
        return Err(Error::InvalidConfig("voxel_size must be > 0".into()));
    }
    if cloud.is_empty() {
        return PointCloud::new(Vec::new());
    }
    let mut min_corner = Vector3::repeat(f64::INFINITY);
    for p in cloud.points() {
        min_corner = min_corner.inf(p);
    }
    let mut buckets: HashMap<(i64, i64, i64), (Vector3<f64>, usize)> = HashMap::new();
    for p in cloud.points() {
        let rel = (p - min_corner) / voxel_size;
        let key = (
            rel.x.floor() as i64,
            rel.y.floor() as i64,
            rel.z.floor() as i64,
        );
        let entry = buckets.entry(key).or_insert((Vector3::zeros(), 0));
        entry.0 += p;
        entry.1 += 1;
    }
    let mut keyed: Vec<((i64, i64, i64), (Vector3<f64>, usize))> = buckets.into_iter().collect();
    keyed.sort_unstable_by_key(|(k, _)| *k);
    let points = keyed
        .into_iter()
        .map(|(_, (sum, n))| sum / n as f64)
        .collect();
    PointCloud::new(points)
}

/// Farthest point sampling: a seeded random start, then each step keeps
/// the point maximizing the minimum distance to the selected set (ties by
/// lowest index). Keeps ceil(keep_fraction * N) points.
pub fn fps(cloud: &PointCloud, keep_fraction: f64, seed: u64) -> Result<PointCloud> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidConfig(
            "keep_fraction must be in (0, 1]".into(),
        ));
    }
    if cloud.is_empty() {
        return PointCloud::new(Vec::new());
    }
    let selected = fps_indices(cloud.points(), keep_fraction, seed);
    subset(cloud, &selected)
}

pub(crate) fn fps_indices(points: &[Point3], keep_fraction: f64, seed: u64) -> Vec<usize> {
    let n = points.len();
    let target = ((keep_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);

    let mut selected = Vec::with_capacity(target);
    let mut min_dist2 = vec![f64::INFINITY; n];
    let mut last = first;
    selected.push(first);
    while selected.len() < target {
        let anchor = points[last];
        let mut best = 0usize;
        let mut best_d = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let d = (p - anchor).norm_squared();
            if d < min_dist2[i] {
                min_dist2[i] = d;
            }
            if min_dist2[i] > best_d {
                best_d = min_dist2[i];
                best = i;
            }
        }
        selected.push(best);
        last = best;
    }
    selected
}

/// Geometrically stable sampling: greedy selection of the point whose
/// 6-DoF point-plane constraint vector best raises the smallest eigenvalue
/// of the accumulated constraint matrix. Each step scores `candidate_pool`
/// seeded random unselected points; a pool covering all points makes the
/// step fully greedy.
pub fn gss(
    cloud: &PointCloud,
    keep_fraction: f64,
    candidate_pool: usize,
    seed: u64,
) -> Result<PointCloud> {
    let (indices, _) = gss_indices(cloud, keep_fraction, candidate_pool, seed)?;
    subset(cloud, &indices)
}

/// As [`gss`], additionally returning the greedy score (smallest eigenvalue
/// of the constraint matrix) after each selection.
pub fn gss_indices(
    cloud: &PointCloud,
    keep_fraction: f64,
    candidate_pool: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidConfig(
            "keep_fraction must be in (0, 1]".into(),
        ));
    }
    if candidate_pool < 1 {
        return Err(Error::InvalidConfig("candidate_pool must be >= 1".into()));
    }
    let n = cloud.len();
    if n < 3 && cloud.normals().is_none() {
        return Err(Error::TooFewPoints { got: n, need: 3 });
    }
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let owned;
    let with_normals = if cloud.normals().is_some() {
        cloud
    } else {
        owned = estimate_normals(cloud, 10.min(n).max(3), None)?;
        &owned
    };
    let normals = with_normals.normals().expect("normals present");

    // Center and scale coordinates by the bounding-box radius so torque and
    // translation constraints are comparable.
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in cloud.points() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let center = (lo + hi) / 2.0;
    let radius = ((hi - lo).norm() / 2.0).max(1e-12);
    let constraints: Vec<Vector6<f64>> = cloud
        .points()
        .iter()
        .zip(normals)
        .map(|(p, nrm)| {
            let x = (p - center) / radius;
            let torque = x.cross(nrm);
            Vector6::new(torque.x, torque.y, torque.z, nrm.x, nrm.y, nrm.z)
        })
        .collect();

    let target = ((keep_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unselected: Vec<usize> = (0..n).collect();
    let mut selected = Vec::with_capacity(target);
    let mut scores = Vec::with_capacity(target);
    let mut m = Matrix6::<f64>::zeros();

    while selected.len() < target {
        let pool = candidate_pool.min(unselected.len());
        let draw = rand::seq::index::sample(&mut rng, unselected.len(), pool);
        let mut best_pos = usize::MAX;
        let mut best_index = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for pos in draw.iter() {
            let idx = unselected[pos];
            let c = &constraints[idx];
            let trial = m + c * c.transpose();
            let score = min_eigenvalue(&trial);
            if score > best_score || (score == best_score && idx < best_index) {
                best_score = score;
                best_index = idx;
                best_pos = pos;
            }
        }
        let c = &constraints[best_index];
        m += c * c.transpose();
        scores.push(min_eigenvalue(&m));
        selected.push(best_index);
        unselected.swap_remove(best_pos);
    }
    Ok((selected, scores))
}

fn min_eigenvalue(m: &Matrix6<f64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(*m);
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn subset(cloud: &PointCloud, indices: &[usize]) -> Result<PointCloud> {
    let points = indices.iter().map(|&i| cloud.points()[i]).collect();
    let mut out = PointCloud::new(points)?;
    if let Some(normals) = cloud.normals() {
        out.set_normals(indices.iter().map(|&i| normals[i]).collect())?;
    }
    if let Some(weights) = cloud.weights() {
        out.set_weights(indices.iter().map(|&i| weights[i]).collect())?;
    }
    Ok(out)
}
