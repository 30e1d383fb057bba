//! Experiment driver and metrics: per-trial error records, failure-rate
//! and inlier summaries, recall curves, and a point-to-point ICP baseline.

use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    geodesic_rotation_error_deg, nearest_rotation, translation_error, PointCloud, RigidTransform,
};
use crate::mixture::{register, RegistrationConfig};
use crate::resample::ResampleSpec;
use crate::spatial::KdTree;
use crate::synth::{derive_seed, make_pair, make_room_scene, PerturbSpec, ScanSpec, Thinning};

/// One registration attempt of one method on one trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub method: String,
    pub rotation_error_deg: f64,
    pub translation_error_m: f64,
    pub runtime_s: f64,
    pub seed: u64,
    pub input_hash: String,
}

/// Aggregated metrics for one method, mirroring the failure-rate /
/// inlier-error reporting convention.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub failure_rate: f64,
    pub mean_inlier_error: f64,
    pub inlier_error_std: f64,
    pub n_trials: usize,
    pub recall_curve: Vec<(f64, f64)>,
}

/// Failure rate (% of rotation errors above the threshold), inlier mean
/// and population std, and a recall curve sampled at 0.1 degree steps up
/// to twice the threshold.
pub fn summarize(records: &[TrialRecord], failure_threshold_deg: f64) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::EmptySummary);
    }
    let n = records.len();
    let failures = records
        .iter()
        .filter(|r| r.rotation_error_deg > failure_threshold_deg)
        .count();
    let inliers: Vec<f64> = records
        .iter()
        .filter(|r| r.rotation_error_deg <= failure_threshold_deg)
        .map(|r| r.rotation_error_deg)
        .collect();
    let (mean, std) = if inliers.is_empty() {
        (0.0, 0.0)
    } else {
        let m = inliers.iter().sum::<f64>() / inliers.len() as f64;
        let var = inliers.iter().map(|e| (e - m).powi(2)).sum::<f64>() / inliers.len() as f64;
        (m, var.sqrt())
    };

    let steps = (2.0 * failure_threshold_deg / 0.1).round() as usize;
    let recall_curve = (0..=steps)
        .map(|i| {
            let t = i as f64 * 0.1;
            let frac = records
                .iter()
                .filter(|r| r.rotation_error_deg <= t)
                .count() as f64
                / n as f64;
            (t, frac)
        })
        .collect();

    Ok(Summary {
        method: records[0].method.clone(),
        failure_rate: failures as f64 * 100.0 / n as f64,
        mean_inlier_error: mean,
        inlier_error_std: std,
        n_trials: n,
        recall_curve,
    })
}

/// Synthetic pairwise experiment setup: room scenes, inverse-square
/// thinning, seeded ground-truth perturbations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_trials: usize,
    pub seed: u64,
    pub points_per_scan: usize,
    pub min_distance: f64,
    /// Scale thinning by the incidence cosine; off reproduces pure
    /// distance-based removal.
    pub incidence: bool,
    pub max_angle_deg: f64,
    pub translation_sigma: f64,
    pub failure_threshold_deg: f64,
    /// Record wall-clock runtimes in the CSV. Off by default so identical
    /// seeds produce byte-identical output.
    pub measure_runtime: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_trials: 50,
            seed: 0,
            points_per_scan: 10_000,
            min_distance: 1.5,
            incidence: false,
            max_angle_deg: 90.0,
            translation_sigma: 1.0,
            failure_threshold_deg: 4.0,
            measure_runtime: false,
        }
    }
}

/// One registration method under evaluation: a name for reporting, its
/// configuration, and an optional re-sampling preprocessing step.
#[derive(Debug, Clone)]
pub struct MethodConfig {
    pub name: String,
    pub registration: RegistrationConfig,
    pub resample: Option<ResampleSpec>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<Summary>,
}

impl ExperimentOutput {
    /// Fixed-layout CSV, one row per (trial, method).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "trial_id,method,rot_err_deg,trans_err_m,runtime_s,seed,input_hash\n",
        );
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{:.9},{:.9},{:.6},{},{}\n",
                r.trial_id,
                r.method,
                r.rotation_error_deg,
                r.translation_error_m,
                r.runtime_s,
                r.seed,
                r.input_hash
            ));
        }
        out
    }
}

/// FNV-1a digest over the raw coordinates (and normals) of the trial
/// inputs; identical inputs hash identically, so the CSV shows at a glance
/// that every method saw the same data.
pub fn input_hash(clouds: &[PointCloud]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |v: f64| {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for c in clouds {
        for p in c.points() {
            eat(p.x);
            eat(p.y);
            eat(p.z);
        }
        if let Some(ns) = c.normals() {
            for n in ns {
                eat(n.x);
                eat(n.y);
                eat(n.z);
            }
        }
    }
    format!("{h:016x}")
}

fn random_sensor(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(1.0..crate::synth::ROOM_WIDTH - 1.0),
        rng.random_range(1.0..crate::synth::ROOM_DEPTH - 1.0),
        rng.random_range(1.0..2.0),
    )
}

fn run_trial(
    trial_id: usize,
    gen: &ExperimentConfig,
    methods: &[MethodConfig],
) -> Result<Vec<TrialRecord>> {
    let trial_seed = derive_seed(gen.seed, trial_id as u64);
    let mesh = make_room_scene(derive_seed(trial_seed, 1));

    let mut sensor_rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, 2));
    let sensor_a = random_sensor(&mut sensor_rng);
    let mut sensor_b = random_sensor(&mut sensor_rng);
    for _ in 0..64 {
        if (sensor_b - sensor_a).norm() >= 1.0 {
            break;
        }
        sensor_b = random_sensor(&mut sensor_rng);
    }

    let thinning = Thinning::InverseSquare {
        incidence: gen.incidence,
    };
    let spec_a = ScanSpec {
        sensor_position: sensor_a,
        n_points: gen.points_per_scan,
        min_distance: gen.min_distance,
        thinning,
    };
    let spec_b = ScanSpec {
        sensor_position: sensor_b,
        n_points: gen.points_per_scan,
        min_distance: gen.min_distance,
        thinning,
    };
    let perturb = PerturbSpec {
        max_angle_deg: gen.max_angle_deg,
        translation_sigma: gen.translation_sigma,
    };
    let (cloud_a, cloud_b, truth) =
        make_pair(&mesh, &spec_a, &spec_b, &perturb, derive_seed(trial_seed, 3))?;
    let inputs = [cloud_a, cloud_b];
    let hash = input_hash(&inputs);
    // One model-init seed per trial so every method starts from the same
    // component sample.
    let registration_seed = derive_seed(trial_seed, 4);

    let mut records = Vec::with_capacity(methods.len());
    for method in methods {
        let prepared: Vec<PointCloud> = match &method.resample {
            None => inputs.to_vec(),
            Some(spec) => inputs
                .iter()
                .enumerate()
                .map(|(i, c)| spec.apply(c, derive_seed(trial_seed, 16 + i as u64)))
                .collect::<Result<_>>()?,
        };
        let mut cfg = method.registration.clone();
        cfg.seed = registration_seed;
        let start = Instant::now();
        let result = register(&prepared, &cfg, None)?;
        let runtime = if gen.measure_runtime {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let rel = result.relative_transform(0, 1);
        records.push(TrialRecord {
            trial_id,
            method: method.name.clone(),
            rotation_error_deg: geodesic_rotation_error_deg(rel.rotation(), truth.rotation()),
            translation_error_m: translation_error(rel.translation(), truth.translation()),
            runtime_s: runtime,
            seed: trial_seed,
            input_hash: hash.clone(),
        });
    }
    Ok(records)
}

/// Runs every method on `n_trials` independently generated synthetic pairs
/// from identical inputs and identity initialization. Trials run in a
/// worker pool; record order is by trial id and method order regardless of
/// completion order. Deterministic given the seed.
pub fn run_experiment(
    gen: &ExperimentConfig,
    methods: &[MethodConfig],
) -> Result<ExperimentOutput> {
    if methods.is_empty() {
        return Err(Error::InvalidConfig("no methods to evaluate".into()));
    }
    let per_trial: Vec<Result<Vec<TrialRecord>>> = (0..gen.n_trials)
        .into_par_iter()
        .map(|t| run_trial(t, gen, methods))
        .collect();
    let mut records = Vec::with_capacity(gen.n_trials * methods.len());
    for r in per_trial {
        records.extend(r?);
    }
    let summaries = methods
        .iter()
        .map(|m| {
            let method_records: Vec<TrialRecord> = records
                .iter()
                .filter(|r| r.method == m.name)
                .cloned()
                .collect();
            summarize(&method_records, gen.failure_threshold_deg)
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentOutput { records, summaries })
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub rms_trace: Vec<f64>,
    pub iterations: usize,
}

/// Point-to-point ICP mapping `source` onto `target`: nearest-neighbor
/// correspondences against a kd-tree, a Procrustes update per iteration,
/// stopping when the RMS correspondence distance changes by less than
/// `tol` or after `max_iters`.
pub fn icp_register(
    source: &PointCloud,
    target: &PointCloud,
    max_iters: usize,
    tol: f64,
) -> Result<RigidTransform> {
    icp_register_detailed(source, target, max_iters, tol).map(|r| r.transform)
}

pub fn icp_register_detailed(
    source: &PointCloud,
    target: &PointCloud,
    max_iters: usize,
    tol: f64,
) -> Result<IcpResult> {
    if source.len() < 3 || target.len() < 3 {
        return Err(Error::TooFewPoints {
            got: source.len().min(target.len()),
            need: 3,
        });
    }
    let tree = KdTree::from_cloud(target);
    let mut transform = RigidTransform::identity();
    let mut rms_trace = Vec::new();
    let mut prev_rms = f64::INFINITY;

    for iteration in 0..max_iters {
        let moved: Vec<Vector3<f64>> = source
            .points()
            .iter()
            .map(|p| transform.apply_point(p))
            .collect();
        let correspondences: Vec<Vector3<f64>> = moved
            .par_iter()
            .with_min_len(256)
            .map(|p| {
                let nn = tree.knn(p, 1).expect("non-empty target");
                target.points()[nn[0].0]
            })
            .collect();

        transform = icp_update(source.points(), &correspondences)?;

        let mut sq = 0.0;
        for (p, q) in source.points().iter().zip(&correspondences) {
            sq += (transform.apply_point(p) - q).norm_squared();
        }
        let rms = (sq / source.len() as f64).sqrt();
        rms_trace.push(rms);
        if (prev_rms - rms).abs() < tol {
            return Ok(IcpResult {
                transform,
                rms_trace,
                iterations: iteration + 1,
            });
        }
        prev_rms = rms;
    }
    Ok(IcpResult {
        transform,
        rms_trace,
        iterations: max_iters,
    })
}

fn icp_update(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<RigidTransform> {
    let n = src.len() as f64;
    let src_centroid: Vector3<f64> = src.iter().sum::<Vector3<f64>>() / n;
    let dst_centroid: Vector3<f64> = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cross = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        cross += (s - src_centroid) * (d - dst_centroid).transpose();
    }
    let svd = cross.svd(false, false);
    let s_max = svd.singular_values[0];
    let s_min = svd.singular_values[2];
    if !(s_min > 1e-9 * s_max.max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateIcpUpdate);
    }
    let rotation = nearest_rotation(&cross.transpose());
    let translation = dst_centroid - rotation * src_centroid;
    Ok(RigidTransform::new(rotation, translation).expect("projected rotation"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::apply_transform;
    use crate::weights::WeightMethod;
    use approx::assert_abs_diff_eq;

    fn record(trial_id: usize, method: &str, err: f64) -> TrialRecord {
        TrialRecord {
            trial_id,
            method: method.into(),
            rotation_error_deg: err,
            translation_error_m: 0.0,
            runtime_s: 0.0,
            seed: 0,
            input_hash: "0".into(),
        }
    }

    #[test]
    fn summarize_hand_computed() {
        let records: Vec<TrialRecord> = [1.0, 2.0, 5.0]
            .iter()
            .enumerate()
            .map(|(i, &e)| record(i, "m", e))
            .collect();
        let s = summarize(&records, 4.0).unwrap();
        assert_abs_diff_eq!(s.failure_rate, 100.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mean_inlier_error, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.inlier_error_std, 0.5, epsilon = 1e-12);
        assert_eq!(s.n_trials, 3);
    }

    #[test]
    fn summarize_all_perfect() {
        let records: Vec<TrialRecord> = (0..5).map(|i| record(i, "m", 0.0)).collect();
        let s = summarize(&records, 4.0).unwrap();
        assert_eq!(s.failure_rate, 0.0);
        assert_eq!(s.mean_inlier_error, 0.0);
    }

    #[test]
    fn summarize_matches_reported_failure_shape() {
        // 904 failures among 1000 records reproduces a 90.4% failure rate.
        let mut records = Vec::new();
        for i in 0..904 {
            records.push(record(i, "m", 5.0));
        }
        for i in 904..1000 {
            records.push(record(i, "m", 1.0));
        }
        let s = summarize(&records, 4.0).unwrap();
        assert_abs_diff_eq!(s.failure_rate, 90.4, epsilon = 1e-12);
    }

    #[test]
    fn summarize_rejects_empty_and_builds_monotone_recall() {
        assert!(summarize(&[], 4.0).is_err());
        let records: Vec<TrialRecord> = [0.3, 1.2, 2.2, 7.9]
            .iter()
            .enumerate()
            .map(|(i, &e)| record(i, "m", e))
            .collect();
        let s = summarize(&records, 4.0).unwrap();
        assert_eq!(s.recall_curve.len(), 81);
        assert_eq!(s.recall_curve[0].0, 0.0);
        for w in s.recall_curve.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
        assert_eq!(s.recall_curve.last().unwrap().1, 1.0);
    }

    #[test]
    fn failure_rates_combine_linearly() {
        let a: Vec<TrialRecord> = (0..4).map(|i| record(i, "m", 10.0)).collect();
        let b: Vec<TrialRecord> = (0..6).map(|i| record(i, "m", 1.0)).collect();
        let sa = summarize(&a, 4.0).unwrap();
        let sb = summarize(&b, 4.0).unwrap();
        let combined: Vec<TrialRecord> = a.into_iter().chain(b).collect();
        let sc = summarize(&combined, 4.0).unwrap();
        let expected = (sa.failure_rate * 4.0 + sb.failure_rate * 6.0) / 10.0;
        assert_abs_diff_eq!(sc.failure_rate, expected, epsilon = 1e-12);
    }

    fn sample_cloud(seed: u64, n: usize) -> PointCloud {
        let mesh = make_room_scene(seed);
        let cloud = crate::synth::sample_uniform(&mesh, n, seed).unwrap();
        PointCloud::new(cloud.points().to_vec()).unwrap()
    }

    #[test]
    fn icp_on_identical_clouds_is_identity() {
        let cloud = sample_cloud(3, 500);
        let t = icp_register(&cloud, &cloud, 20, 1e-12).unwrap();
        assert!(
            geodesic_rotation_error_deg(t.rotation(), &Matrix3::identity()) < 1e-9
        );
        assert!(t.translation().norm() < 1e-9);
    }

    #[test]
    fn icp_recovers_small_rotation() {
        let cloud = sample_cloud(4, 800);
        let truth = RigidTransform::from_axis_angle(
            Vector3::new(0.2, 1.0, 0.1),
            5.0f64.to_radians(),
            Vector3::new(0.05, -0.02, 0.04),
        );
        let target = apply_transform(&truth, &cloud);
        let detail = icp_register_detailed(&cloud, &target, 60, 1e-10).unwrap();
        assert!(
            geodesic_rotation_error_deg(detail.transform.rotation(), truth.rotation()) < 0.1
        );
        for w in detail.rms_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "rms increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn icp_rejects_degenerate_geometry() {
        let line: Vec<Vector3<f64>> = (0..10)
            .map(|i| Vector3::new(i as f64, 0.0, 0.0))
            .collect();
        let cloud = PointCloud::new(line).unwrap();
        assert!(matches!(
            icp_register(&cloud, &cloud, 5, 1e-9),
            Err(Error::DegenerateIcpUpdate)
        ));
    }

    fn small_methods() -> Vec<MethodConfig> {
        let base = RegistrationConfig {
            components: 30,
            iterations: 8,
            ..RegistrationConfig::pairwise()
        };
        vec![
            MethodConfig {
                name: "uniform".into(),
                registration: RegistrationConfig {
                    weight_method: WeightMethod::Uniform,
                    ..base.clone()
                },
                resample: None,
            },
            MethodConfig {
                name: "empirical".into(),
                registration: RegistrationConfig {
                    weight_method: WeightMethod::Empirical,
                    ..base
                },
                resample: None,
            },
        ]
    }

    fn small_experiment() -> ExperimentConfig {
        ExperimentConfig {
            n_trials: 1,
            seed: 11,
            points_per_scan: 1500,
            max_angle_deg: 10.0,
            translation_sigma: 0.2,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn experiment_methods_share_inputs() {
        let out = run_experiment(&small_experiment(), &small_methods()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].input_hash, out.records[1].input_hash);
        assert_eq!(out.records[0].seed, out.records[1].seed);
        assert_eq!(out.summaries.len(), 2);
    }

    #[test]
    fn experiment_csv_is_deterministic() {
        let gen = small_experiment();
        let methods = small_methods();
        let a = run_experiment(&gen, &methods).unwrap().to_csv();
        let b = run_experiment(&gen, &methods).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("trial_id,method,"));
    }
}
