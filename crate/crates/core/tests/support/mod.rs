//! Shared test helpers: an independently coded unweighted EM registration
//! path (no observation-weight machinery anywhere) used as the reduction
//! oracle, plus synthetic-pair convenience wrappers.
#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};

use dare_core::geom::{Point3, PointCloud, RigidTransform};
use dare_core::mixture::{init_model, GmmModel, RegistrationConfig};
use dare_core::synth::{
    make_pair, make_room_scene, PerturbSpec, ScanSpec, Thinning,
};

const LN_TAU: f64 = 1.837877066409345483560659472811;

/// Plain unweighted EM registration, written without any reference to the
/// observation-weight code paths. Shares only the geometry types and the
/// seeded model initialization with the library.
pub fn reference_register(
    clouds: &[PointCloud],
    cfg: &RegistrationConfig,
) -> (Vec<RigidTransform>, GmmModel, Vec<f64>) {
    let mut transforms = vec![RigidTransform::identity(); clouds.len()];
    let mut model = init_model(clouds, &transforms, cfg).expect("valid instance");
    let mut trace = Vec::with_capacity(cfg.iterations);

    for _ in 0..cfg.iterations {
        let points_old = map_points(clouds, &transforms);
        let resp = ref_e_step(&points_old, &model);
        transforms = ref_m_transforms(clouds, &resp, &model, &transforms);
        let points_new = map_points(clouds, &transforms);
        model = ref_m_model(&points_new, &resp, cfg, &model);
        trace.push(ref_objective(&points_new, &resp, &model));
    }
    (transforms, model, trace)
}

fn map_points(clouds: &[PointCloud], transforms: &[RigidTransform]) -> Vec<Vec<Point3>> {
    clouds
        .iter()
        .zip(transforms)
        .map(|(c, t)| c.points().iter().map(|p| t.apply_point(p)).collect())
        .collect()
}

fn ref_e_step(points_t: &[Vec<Point3>], model: &GmmModel) -> Vec<Vec<Vec<f64>>> {
    let k = model.means.len();
    let ln_prior = model.component_prior.ln();
    let consts: Vec<f64> = model
        .variances
        .iter()
        .map(|v| ln_prior - 1.5 * (LN_TAU + v.ln()))
        .collect();
    let inv2var: Vec<f64> = model.variances.iter().map(|v| 0.5 / v).collect();
    let ln_outlier = (model.outlier_prior * model.outlier_density).ln();

    points_t
        .iter()
        .map(|pts| {
            pts.iter()
                .map(|v| {
                    let mut row = vec![0.0f64; k + 1];
                    let mut max_l = ln_outlier;
                    for kk in 0..k {
                        let d2 = (v - model.means[kk]).norm_squared();
                        let l = consts[kk] - d2 * inv2var[kk];
                        row[kk] = l;
                        if l > max_l {
                            max_l = l;
                        }
                    }
                    row[k] = ln_outlier;
                    let mut sum = 0.0;
                    for e in row.iter_mut() {
                        let x = (*e - max_l).exp();
                        *e = x;
                        sum += x;
                    }
                    let inv = 1.0 / sum;
                    for e in row.iter_mut() {
                        *e *= inv;
                    }
                    row
                })
                .collect()
        })
        .collect()
}

fn ref_m_transforms(
    clouds: &[PointCloud],
    resp: &[Vec<Vec<f64>>],
    model: &GmmModel,
    current: &[RigidTransform],
) -> Vec<RigidTransform> {
    let k = model.means.len();
    let inv_var: Vec<f64> = model.variances.iter().map(|v| 1.0 / v).collect();
    let mut out = Vec::with_capacity(clouds.len());
    for (i, cloud) in clouds.iter().enumerate() {
        let n = cloud.len();
        let mut lams = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for j in 0..n {
            let row = &resp[i][j];
            let mut lam = 0.0;
            let mut acc = Vector3::zeros();
            for kk in 0..k {
                let w = row[kk] * inv_var[kk];
                lam += w;
                acc += w * model.means[kk];
            }
            lams.push(lam);
            ys.push(if lam > 0.0 { acc / lam } else { Vector3::zeros() });
        }
        let total: f64 = lams.iter().sum();
        if !(total > 1e-12 * n as f64) {
            out.push(current[i]);
            continue;
        }
        out.push(ref_procrustes(cloud.points(), &ys, &lams, &current[i]));
    }
    out
}

fn ref_procrustes(
    src: &[Point3],
    dst: &[Point3],
    weights: &[f64],
    fallback: &RigidTransform,
) -> RigidTransform {
    let mut w_sum = 0.0;
    let mut src_acc = Vector3::zeros();
    let mut dst_acc = Vector3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        w_sum += w;
        src_acc += w * s;
        dst_acc += w * d;
    }
    if w_sum <= 0.0 {
        return *fallback;
    }
    let src_centroid = src_acc / w_sum;
    let dst_centroid = dst_acc / w_sum;
    let mut cross = Matrix3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        cross += w * (s - src_centroid) * (d - dst_centroid).transpose();
    }
    let rotation = if cross.norm() < 1e-300 {
        *fallback.rotation()
    } else {
        let svd = cross.svd(true, true);
        let u = svd.u.expect("u");
        let v_t = svd.v_t.expect("v_t");
        let v = v_t.transpose();
        let det = (v * u.transpose()).determinant();
        let sign = if det < 0.0 { -1.0 } else { 1.0 };
        v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * u.transpose()
    };
    let translation = dst_centroid - rotation * src_centroid;
    RigidTransform::new(rotation, translation).expect("proper rotation from svd")
}

fn ref_m_model(
    points_t: &[Vec<Point3>],
    resp: &[Vec<Vec<f64>>],
    cfg: &RegistrationConfig,
    previous: &GmmModel,
) -> GmmModel {
    let k = previous.means.len();
    let mut mass = vec![0.0f64; k];
    let mut acc = vec![Vector3::<f64>::zeros(); k];
    for (i, pts) in points_t.iter().enumerate() {
        let s = 1.0 / pts.len() as f64;
        for (j, v) in pts.iter().enumerate() {
            let row = &resp[i][j];
            for kk in 0..k {
                let w = s * row[kk];
                mass[kk] += w;
                acc[kk] += w * v;
            }
        }
    }
    let means: Vec<Point3> = (0..k)
        .map(|kk| {
            if mass[kk] < 1e-12 {
                previous.means[kk]
            } else {
                acc[kk] / mass[kk]
            }
        })
        .collect();

    let mut sq = vec![0.0f64; k];
    for (i, pts) in points_t.iter().enumerate() {
        let s = 1.0 / pts.len() as f64;
        for (j, v) in pts.iter().enumerate() {
            let row = &resp[i][j];
            for kk in 0..k {
                sq[kk] += s * row[kk] * (v - means[kk]).norm_squared();
            }
        }
    }
    let variances: Vec<f64> = (0..k)
        .map(|kk| {
            if mass[kk] < 1e-12 {
                previous.variances[kk]
            } else {
                (sq[kk] / (3.0 * mass[kk])).max(cfg.variance_floor)
            }
        })
        .collect();

    GmmModel {
        means,
        variances,
        component_prior: previous.component_prior,
        outlier_prior: previous.outlier_prior,
        outlier_density: previous.outlier_density,
    }
}

fn ref_objective(points_t: &[Vec<Point3>], resp: &[Vec<Vec<f64>>], model: &GmmModel) -> f64 {
    let k = model.means.len();
    let ln_prior = model.component_prior.ln();
    let consts: Vec<f64> = model
        .variances
        .iter()
        .map(|v| ln_prior - 1.5 * (LN_TAU + v.ln()))
        .collect();
    let inv2var: Vec<f64> = model.variances.iter().map(|v| 0.5 / v).collect();
    let ln_outlier = (model.outlier_prior * model.outlier_density).ln();

    let mut total = 0.0;
    for (i, pts) in points_t.iter().enumerate() {
        let rows: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let row = &resp[i][j];
                let mut sum = 0.0;
                for kk in 0..k {
                    let d2 = (v - model.means[kk]).norm_squared();
                    sum += row[kk] * (consts[kk] - d2 * inv2var[kk]);
                }
                let a_out = row[k];
                if a_out > 0.0 {
                    sum += a_out * ln_outlier;
                }
                sum
            })
            .collect();
        let set_sum: f64 = rows.iter().sum();
        total += set_sum / pts.len() as f64;
    }
    total
}

/// A thinned synthetic room pair in the density-variation protocol
/// (inverse-square distance removal, no incidence factor).
pub fn room_pair(
    seed: u64,
    points_per_scan: usize,
    max_angle_deg: f64,
    translation_sigma: f64,
) -> (PointCloud, PointCloud, RigidTransform) {
    let mesh = make_room_scene(seed);
    let thinning = Thinning::InverseSquare { incidence: false };
    let spec_a = ScanSpec {
        sensor_position: Vector3::new(2.5, 2.0, 1.5),
        n_points: points_per_scan,
        min_distance: 1.5,
        thinning,
    };
    let spec_b = ScanSpec {
        sensor_position: Vector3::new(5.5, 4.0, 1.2),
        n_points: points_per_scan,
        min_distance: 1.5,
        thinning,
    };
    let perturb = PerturbSpec {
        max_angle_deg,
        translation_sigma,
    };
    make_pair(&mesh, &spec_a, &spec_b, &perturb, seed).expect("pair generation")
}
