//! Observation weights: per-point corrections for non-uniform acquisition
//! density. Three estimators are provided — uniform (no correction), a
//! sensor model for terrestrial Lidar range/incidence falloff, and an
//! empirical estimator from local PCA — plus the median-filter/clip
//! regularization applied before registration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::PointCloud;
use crate::spatial::{estimate_normals, local_stats, KdTree};

/// Default neighborhood size for normal estimation and regularization.
pub const DEFAULT_NEIGHBORS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMethod {
    /// All weights 1; reduces the pipeline to the unweighted baseline.
    Uniform,
    /// Range/incidence sensor model evaluated in the sensor frame.
    Sensor,
    /// Local PCA estimate, sigma1*sigma2 approximation.
    Empirical,
    /// Local PCA estimate including the tangent-plane exponential factor.
    EmpiricalFull,
}

impl std::fmt::Display for WeightMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            WeightMethod::Uniform => "uniform",
            WeightMethod::Sensor => "sensor",
            WeightMethod::Empirical => "empirical",
            WeightMethod::EmpiricalFull => "empirical_full",
        };
        f.write_str(s)
    }
}

/// Per-point observation weights, strictly positive, defined up to a global
/// scale per point set.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWeights {
    pub values: Vec<f64>,
    pub method: WeightMethod,
}

impl ObservationWeights {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Rescales so the values average exactly one. The weighting is defined
    /// only up to scale, so this is a pure conditioning step.
    pub fn normalized_mean_one(&self) -> ObservationWeights {
        let m = self.mean();
        if m <= 0.0 || !m.is_finite() {
            return self.clone();
        }
        ObservationWeights {
            values: self.values.iter().map(|v| v / m).collect(),
            method: self.method,
        }
    }
}

/// `n` unit weights.
pub fn uniform_weights(n: usize) -> ObservationWeights {
    ObservationWeights {
        values: vec![1.0; n],
        method: WeightMethod::Uniform,
    }
}

/// Sensor-model weights `||x||^2 / (gamma |n.x̂| + 1 - gamma)` with the
/// sensor at the origin of the cloud's frame. Normals are estimated on the
/// fly (L=10, oriented toward the origin) when the cloud has none and
/// `gamma > 0`. The normal enters through its absolute cosine so either
/// orientation convention works.
pub fn sensor_weights(cloud: &PointCloud, gamma: f64) -> Result<ObservationWeights> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidConfig(format!(
            "gamma must be in [0, 1], got {gamma}"
        )));
    }
    if let Some(i) = cloud.points().iter().position(|p| p.norm() < 1e-9) {
        return Err(Error::PointAtSensorOrigin(i));
    }
    if gamma == 0.0 {
        // Pure inverse-square model; normals are irrelevant.
        let values = cloud.points().iter().map(|p| p.norm_squared()).collect();
        return Ok(ObservationWeights {
            values,
            method: WeightMethod::Sensor,
        });
    }
    let owned;
    let with_normals = if cloud.normals().is_some() {
        cloud
    } else {
        owned = estimate_normals(cloud, DEFAULT_NEIGHBORS, Some(nalgebra::Vector3::zeros()))?;
        &owned
    };
    let normals = with_normals.normals().expect("normals present");
    let values = with_normals
        .points()
        .iter()
        .zip(normals)
        .map(|(p, n)| {
            let range2 = p.norm_squared();
            let cos_incidence = (n.dot(p) / p.norm()).abs();
            range2 / (gamma * cos_incidence + (1.0 - gamma))
        })
        .collect();
    Ok(ObservationWeights {
        values,
        method: WeightMethod::Sensor,
    })
}

/// Empirical weights from the local PCA of each point's L-neighborhood:
/// `sigma1 * sigma2`, optionally times the tangent-plane exponential factor
/// (`full = true`). Degenerate neighborhoods (a zero sigma) receive the
/// smallest positive weight in the cloud so values stay strictly positive.
pub fn empirical_weights(cloud: &PointCloud, neighbors: usize, full: bool) -> Result<ObservationWeights> {
    if neighbors < 3 {
        return Err(Error::DegenerateNeighborhood(neighbors));
    }
    if cloud.len() < neighbors {
        return Err(Error::TooFewPoints {
            got: cloud.len(),
            need: neighbors,
        });
    }
    let tree = KdTree::from_cloud(cloud);
    let mut values: Vec<f64> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let stats = local_stats(cloud, &tree, i, neighbors).expect("preconditions checked");
            let sigma1 = stats.eigvals[0].sqrt();
            let sigma2 = stats.eigvals[1].sqrt();
            if sigma1 == 0.0 || sigma2 == 0.0 {
                return 0.0;
            }
            let base = sigma1 * sigma2;
            if !full {
                return base;
            }
            let d = cloud.points()[i] - stats.mean;
            let in_plane = stats.eigvecs.column(0).dot(&d);
            let in_plane2 = stats.eigvecs.column(1).dot(&d);
            let exponent = 0.5
                * (in_plane * in_plane / stats.eigvals[0]
                    + in_plane2 * in_plane2 / stats.eigvals[1]);
            base * exponent.exp()
        })
        .collect();

    let min_positive = values
        .iter()
        .copied()
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold(f64::INFINITY, f64::min);
    let fill = if min_positive.is_finite() { min_positive } else { 1.0 };
    for v in &mut values {
        if *v <= 0.0 || !v.is_finite() {
            *v = fill;
        }
    }
    Ok(ObservationWeights {
        values,
        method: if full {
            WeightMethod::EmpiricalFull
        } else {
            WeightMethod::Empirical
        },
    })
}

/// Regularizes weights in two fixed steps: a median filter over each
/// point's L-neighborhood, then a cap at `clip_factor` times the mean of
/// the filtered values. The median of an even count takes the lower middle
/// element, which keeps the filter a pure selection.
pub fn regularize_weights(
    w: &ObservationWeights,
    cloud: &PointCloud,
    neighbors: usize,
    clip_factor: f64,
) -> Result<ObservationWeights> {
    if w.len() != cloud.len() {
        return Err(Error::InvalidConfig(format!(
            "{} weights for {} points",
            w.len(),
            cloud.len()
        )));
    }
    if neighbors < 1 {
        return Err(Error::InvalidConfig("neighbors must be >= 1".into()));
    }
    if clip_factor <= 0.0 {
        return Err(Error::InvalidConfig("clip_factor must be > 0".into()));
    }
    if w.is_empty() {
        return Ok(w.clone());
    }
    let k = neighbors.min(cloud.len());
    let tree = KdTree::from_cloud(cloud);
    let filtered: Vec<f64> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let nn = tree.knn(&cloud.points()[i], k).expect("non-empty tree");
            let mut vals: Vec<f64> = nn.iter().map(|&(j, _)| w.values[j]).collect();
            vals.sort_unstable_by(f64::total_cmp);
            vals[(vals.len() - 1) / 2]
        })
        .collect();

    let mean = filtered.iter().sum::<f64>() / filtered.len() as f64;
    let cap = clip_factor * mean;
    let values = filtered.into_iter().map(|v| v.min(cap)).collect();
    Ok(ObservationWeights {
        values,
        method: w.method,
    })
}

/// Computes raw (unregularized) weights for one point set.
pub fn compute_weights(
    cloud: &PointCloud,
    method: WeightMethod,
    gamma: f64,
    neighbors: usize,
) -> Result<ObservationWeights> {
    match method {
        WeightMethod::Uniform => Ok(uniform_weights(cloud.len())),
        WeightMethod::Sensor => sensor_weights(cloud, gamma),
        WeightMethod::Empirical => empirical_weights(cloud, neighbors, false),
        WeightMethod::EmpiricalFull => empirical_weights(cloud, neighbors, true),
    }
}
