//! Joint multi-view registration: a shared Gaussian mixture scene model in
//! a reference frame, per-set rigid transforms, and a weighted EM driver.
//! Observation weights rescale each point's contribution in the M-step;
//! uniform weights reduce the machinery to the unweighted baseline.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{weighted_procrustes, Point3, PointCloud, RigidTransform};
use crate::weights::{compute_weights, regularize_weights, ObservationWeights, WeightMethod};

const LN_TAU: f64 = 1.837877066409345483560659472811; // ln(2*pi)

/// Component mass below which a component keeps its previous parameters.
const DEAD_COMPONENT_MASS: f64 = 1e-12;

/// Isotropic Gaussian mixture over the reference frame plus one uniform
/// outlier component. Spatial priors are shared and fixed.
#[derive(Debug, Clone)]
pub struct GmmModel {
    pub means: Vec<Point3>,
    pub variances: Vec<f64>,
    pub component_prior: f64,
    pub outlier_prior: f64,
    pub outlier_density: f64,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    /// Checks the mixture invariants: priors sum to one, variances and the
    /// outlier density positive.
    pub fn validate(&self) -> Result<()> {
        if self.means.len() != self.variances.len() {
            return Err(Error::InvalidConfig(format!(
                "{} means vs {} variances",
                self.means.len(),
                self.variances.len()
            )));
        }
        let total = self.k() as f64 * self.component_prior + self.outlier_prior;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "priors sum to {total}, expected 1"
            )));
        }
        if self.variances.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidConfig("non-positive variance".into()));
        }
        if !(self.outlier_density > 0.0) {
            return Err(Error::InvalidConfig("non-positive outlier density".into()));
        }
        Ok(())
    }
}

/// Posterior component assignments, one row per point, K+1 columns with
/// the outlier component last. Rows sum to one.
#[derive(Debug, Clone)]
pub struct RespMatrix {
    data: Vec<f64>,
    n_cols: usize,
}

impl RespMatrix {
    pub fn n_points(&self) -> usize {
        if self.n_cols == 0 {
            0
        } else {
            self.data.len() / self.n_cols
        }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_cols..(j + 1) * self.n_cols]
    }
}

#[derive(Debug, Clone)]
pub struct Responsibilities {
    pub per_set: Vec<RespMatrix>,
}

/// Parameters of a registration run. Defaults follow the pairwise setup:
/// K = 200 components, 50 EM iterations, outlier ratio 0.005, gamma 0.9,
/// L = 10 neighbors, clipping at 8x the mean weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistrationConfig {
    pub components: usize,
    pub iterations: usize,
    pub outlier_ratio: f64,
    pub gamma: f64,
    pub neighbors: usize,
    pub clip_factor: f64,
    pub weight_method: WeightMethod,
    pub seed: u64,
    pub variance_floor: f64,
    /// Optional relative objective-change stop; fixed iteration count when
    /// unset.
    pub convergence_tol: Option<f64>,
}

impl RegistrationConfig {
    pub fn pairwise() -> Self {
        Self {
            components: 200,
            iterations: 50,
            outlier_ratio: 0.005,
            gamma: 0.9,
            neighbors: 10,
            clip_factor: 8.0,
            weight_method: WeightMethod::Empirical,
            seed: 0,
            variance_floor: 1e-6,
            convergence_tol: None,
        }
    }

    /// Joint (M > 2) defaults: more components for larger scenes.
    pub fn joint() -> Self {
        Self {
            components: 300,
            ..Self::pairwise()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components < 1 {
            return Err(Error::InvalidConfig("components must be >= 1".into()));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_ratio) {
            return Err(Error::InvalidConfig(
                "outlier_ratio must be in [0, 1)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig("gamma must be in [0, 1]".into()));
        }
        if self.neighbors < 1 {
            return Err(Error::InvalidConfig("neighbors must be >= 1".into()));
        }
        if !(self.clip_factor > 0.0) {
            return Err(Error::InvalidConfig("clip_factor must be > 0".into()));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::InvalidConfig("variance_floor must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self::pairwise()
    }
}

/// Output of a registration run: per-set transforms into the common
/// reference frame, the fitted model, and the per-iteration objective.
#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub transforms: Vec<RigidTransform>,
    pub model: GmmModel,
    pub objective_trace: Vec<f64>,
    pub converged_iterations: usize,
    /// Sets whose transform update was skipped because the mixture captured
    /// essentially no mass for them (total outlier capture).
    pub degenerate_sets: Vec<usize>,
}

impl RegistrationResult {
    /// Transform mapping set `b`'s frame into set `a`'s frame.
    pub fn relative_transform(&self, a: usize, b: usize) -> RigidTransform {
        self.transforms[a].inverse().compose(&self.transforms[b])
    }
}

fn transform_points(clouds: &[PointCloud], transforms: &[RigidTransform]) -> Vec<Vec<Point3>> {
    clouds
        .iter()
        .zip(transforms)
        .map(|(c, t)| {
            c.points()
                .par_iter()
                .with_min_len(1024)
                .map(|p| t.apply_point(p))
                .collect()
        })
        .collect()
}

/// Draws the initial model from the pooled transformed points: K seeded
/// sample means, a shared variance from the pooled bounding-box diagonal,
/// and a uniform outlier density over the inflated bounding box.
pub fn init_model(
    clouds: &[PointCloud],
    transforms: &[RigidTransform],
    cfg: &RegistrationConfig,
) -> Result<GmmModel> {
    cfg.validate()?;
    if clouds.len() != transforms.len() {
        return Err(Error::InvalidConfig(format!(
            "{} clouds vs {} transforms",
            clouds.len(),
            transforms.len()
        )));
    }
    let pooled: Vec<Point3> = clouds
        .iter()
        .zip(transforms)
        .flat_map(|(c, t)| c.points().iter().map(|p| t.apply_point(p)))
        .collect();
    if pooled.len() < cfg.components {
        return Err(Error::TooFewPointsForComponents {
            points: pooled.len(),
            components: cfg.components,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let picks = rand::seq::index::sample(&mut rng, pooled.len(), cfg.components);
    let means: Vec<Point3> = picks.iter().map(|i| pooled[i]).collect();

    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in &pooled {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = hi - lo;
    let diagonal = extent.norm();
    let sigma2 = (diagonal / (cfg.components as f64).cbrt())
        .powi(2)
        .max(cfg.variance_floor);

    // 10% inflation on each side of the axis-aligned bounding box.
    let inflated = extent * 1.2;
    let volume = (inflated.x * inflated.y * inflated.z).max(1e-9);

    Ok(GmmModel {
        means,
        variances: vec![sigma2; cfg.components],
        component_prior: (1.0 - cfg.outlier_ratio) / cfg.components as f64,
        outlier_prior: cfg.outlier_ratio,
        outlier_density: 1.0 / volume,
    })
}

fn e_step_cached(points_t: &[Vec<Point3>], model: &GmmModel) -> Responsibilities {
    let k = model.k();
    let ln_prior = model.component_prior.ln();
    let consts: Vec<f64> = model
        .variances
        .iter()
        .map(|v| ln_prior - 1.5 * (LN_TAU + v.ln()))
        .collect();
    let inv2var: Vec<f64> = model.variances.iter().map(|v| 0.5 / v).collect();
    let ln_outlier = (model.outlier_prior * model.outlier_density).ln();
    let means = &model.means;

    let per_set = points_t
        .iter()
        .map(|pts| {
            let mut data = vec![0.0f64; pts.len() * (k + 1)];
            data.par_chunks_mut(k + 1)
                .zip(pts.par_iter())
                .with_min_len(64)
                .for_each(|(row, v)| {
                    let mut max_l = ln_outlier;
                    for ((slot, mu), (c, h)) in row[..k]
                        .iter_mut()
                        .zip(means)
                        .zip(consts.iter().zip(&inv2var))
                    {
                        let d2 = (v - mu).norm_squared();
                        let l = c - d2 * h;
                        *slot = l;
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
                });
            RespMatrix {
                data,
                n_cols: k + 1,
            }
        })
        .collect();
    Responsibilities { per_set }
}

/// Posterior responsibilities of every point under the current model.
/// Densities are evaluated in log-space with per-row max subtraction;
/// observation weights do not enter the posterior.
pub fn e_step(
    clouds: &[PointCloud],
    transforms: &[RigidTransform],
    model: &GmmModel,
) -> Responsibilities {
    e_step_cached(&transform_points(clouds, transforms), model)
}

/// First conditional maximization: re-estimates each set's rigid transform
/// against the fixed mixture by a weighted orthogonal Procrustes solve.
/// Returns the new transforms and the indices of sets whose update was
/// skipped for lack of inlier mass.
pub fn m_step_transforms(
    clouds: &[PointCloud],
    weights: &[ObservationWeights],
    resp: &Responsibilities,
    model: &GmmModel,
    current: &[RigidTransform],
) -> (Vec<RigidTransform>, Vec<usize>) {
    let k = model.k();
    let inv_var: Vec<f64> = model.variances.iter().map(|v| 1.0 / v).collect();
    let means = &model.means;

    let mut out = Vec::with_capacity(clouds.len());
    let mut degenerate = Vec::new();
    for (i, cloud) in clouds.iter().enumerate() {
        let f = &weights[i].values;
        let rm = &resp.per_set[i];
        let n = cloud.len();

        // Collapse the per-component terms into one weight and one virtual
        // target per point.
        let lam_y: Vec<(f64, Point3)> = (0..n)
            .into_par_iter()
            .with_min_len(256)
            .map(|j| {
                let row = rm.row(j);
                let mut lam = 0.0;
                let mut acc = Vector3::zeros();
                for ((a, mu), h) in row[..k].iter().zip(means).zip(&inv_var) {
                    let w = a * h;
                    lam += w;
                    acc += w * mu;
                }
                let fj = f[j];
                let lam_f = fj * lam;
                let y = if lam > 0.0 { acc / lam } else { Vector3::zeros() };
                (lam_f, y)
            })
            .collect();

        let total: f64 = lam_y.iter().map(|(l, _)| *l).sum();
        if !(total > 1e-12 * n as f64) {
            degenerate.push(i);
            out.push(current[i]);
            continue;
        }
        let lams: Vec<f64> = lam_y.iter().map(|(l, _)| *l).collect();
        let ys: Vec<Point3> = lam_y.iter().map(|(_, y)| *y).collect();
        out.push(weighted_procrustes(
            cloud.points(),
            &ys,
            &lams,
            &current[i],
        ));
    }
    (out, degenerate)
}

/// Second conditional maximization: re-estimates means and isotropic
/// variances from the weighted responsibilities under the just-updated
/// transforms. Mixture priors and the outlier density stay fixed; variances
/// are floored; components with negligible mass keep their previous
/// parameters. Each set contributes with a 1/N_i factor so differently
/// sized sets are balanced.
pub fn m_step_model(
    clouds: &[PointCloud],
    transforms: &[RigidTransform],
    weights: &[ObservationWeights],
    resp: &Responsibilities,
    cfg: &RegistrationConfig,
    previous: &GmmModel,
) -> GmmModel {
    let points_t = transform_points(clouds, transforms);
    m_step_model_cached(&points_t, weights, resp, cfg, previous)
}

fn m_step_model_cached(
    points_t: &[Vec<Point3>],
    weights: &[ObservationWeights],
    resp: &Responsibilities,
    cfg: &RegistrationConfig,
    previous: &GmmModel,
) -> GmmModel {
    let k = previous.k();
    let mut mass = vec![0.0f64; k];
    let mut acc = vec![Vector3::<f64>::zeros(); k];
    for (i, pts) in points_t.iter().enumerate() {
        let s = 1.0 / pts.len() as f64;
        let f = &weights[i].values;
        let rm = &resp.per_set[i];
        for (j, v) in pts.iter().enumerate() {
            let wf = s * f[j];
            let row = rm.row(j);
            for ((a, m), acc_k) in row[..k].iter().zip(mass.iter_mut()).zip(acc.iter_mut()) {
                let w = wf * a;
                *m += w;
                *acc_k += w * v;
            }
        }
    }

    let means: Vec<Point3> = mass
        .iter()
        .zip(&acc)
        .zip(&previous.means)
        .map(|((&m, a), prev)| if m < DEAD_COMPONENT_MASS { *prev } else { a / m })
        .collect();

    let mut sq = vec![0.0f64; k];
    for (i, pts) in points_t.iter().enumerate() {
        let s = 1.0 / pts.len() as f64;
        let f = &weights[i].values;
        let rm = &resp.per_set[i];
        for (j, v) in pts.iter().enumerate() {
            let wf = s * f[j];
            let row = rm.row(j);
            for ((a, mu), sq_k) in row[..k].iter().zip(&means).zip(sq.iter_mut()) {
                *sq_k += wf * a * (v - mu).norm_squared();
            }
        }
    }
    let variances: Vec<f64> = mass
        .iter()
        .zip(&sq)
        .zip(&previous.variances)
        .map(|((&m, &s2), prev)| {
            if m < DEAD_COMPONENT_MASS {
                *prev
            } else {
                (s2 / (3.0 * m)).max(cfg.variance_floor)
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

/// The weighted complete-data objective: per set, the 1/N_i average over
/// points of `f * sum_k alpha * log(prior * density)`, including the
/// outlier column. Pure evaluation; recorded once per EM iteration.
pub fn weighted_objective(
    clouds: &[PointCloud],
    transforms: &[RigidTransform],
    weights: &[ObservationWeights],
    resp: &Responsibilities,
    model: &GmmModel,
) -> f64 {
    let points_t = transform_points(clouds, transforms);
    weighted_objective_cached(&points_t, weights, resp, model)
}

fn weighted_objective_cached(
    points_t: &[Vec<Point3>],
    weights: &[ObservationWeights],
    resp: &Responsibilities,
    model: &GmmModel,
) -> f64 {
    let k = model.k();
    let ln_prior = model.component_prior.ln();
    let consts: Vec<f64> = model
        .variances
        .iter()
        .map(|v| ln_prior - 1.5 * (LN_TAU + v.ln()))
        .collect();
    let inv2var: Vec<f64> = model.variances.iter().map(|v| 0.5 / v).collect();
    let ln_outlier = (model.outlier_prior * model.outlier_density).ln();
    let means = &model.means;

    let mut total = 0.0;
    for (i, pts) in points_t.iter().enumerate() {
        let f = &weights[i].values;
        let rm = &resp.per_set[i];
        let rows: Vec<f64> = (0..pts.len())
            .into_par_iter()
            .with_min_len(256)
            .map(|j| {
                let v = pts[j];
                let row = rm.row(j);
                let mut sum = 0.0;
                for ((a, mu), (c, h)) in
                    row[..k].iter().zip(means).zip(consts.iter().zip(&inv2var))
                {
                    let d2 = (v - mu).norm_squared();
                    sum += a * (c - d2 * h);
                }
                let a_out = row[k];
                if a_out > 0.0 {
                    sum += a_out * ln_outlier;
                }
                f[j] * sum
            })
            .collect();
        let set_sum: f64 = rows.iter().sum();
        total += set_sum / pts.len() as f64;
    }
    total
}

fn prepare_weights(
    clouds: &[PointCloud],
    raw: &[ObservationWeights],
    cfg: &RegistrationConfig,
) -> Result<Vec<ObservationWeights>> {
    raw.iter()
        .zip(clouds)
        .map(|(w, c)| {
            let reg = regularize_weights(w, c, cfg.neighbors, cfg.clip_factor)?;
            Ok(reg.normalized_mean_one())
        })
        .collect()
}

/// Full registration: compute observation weights in each cloud's own
/// sensor frame, regularize and normalize them, then run the fixed number
/// of EM iterations. Deterministic given the config seed.
pub fn register(
    clouds: &[PointCloud],
    cfg: &RegistrationConfig,
    init: Option<&[RigidTransform]>,
) -> Result<RegistrationResult> {
    let raw: Vec<ObservationWeights> = clouds
        .iter()
        .map(|c| compute_weights(c, cfg.weight_method, cfg.gamma, cfg.neighbors))
        .collect::<Result<_>>()?;
    register_with_weights(clouds, &raw, cfg, init)
}

/// Registration from caller-supplied raw observation weights (one set per
/// cloud). The weights are regularized and rescaled to mean one per set, so
/// any per-set scaling of the input leaves the result unchanged.
pub fn register_with_weights(
    clouds: &[PointCloud],
    raw_weights: &[ObservationWeights],
    cfg: &RegistrationConfig,
    init: Option<&[RigidTransform]>,
) -> Result<RegistrationResult> {
    cfg.validate()?;
    if clouds.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 point sets, got {}",
            clouds.len()
        )));
    }
    for c in clouds {
        if c.len() < 3 {
            return Err(Error::TooFewPoints {
                got: c.len(),
                need: 3,
            });
        }
    }
    if raw_weights.len() != clouds.len() {
        return Err(Error::InvalidConfig(format!(
            "{} weight sets for {} clouds",
            raw_weights.len(),
            clouds.len()
        )));
    }
    let weights = prepare_weights(clouds, raw_weights, cfg)?;

    let mut transforms: Vec<RigidTransform> = match init {
        Some(t) => {
            if t.len() != clouds.len() {
                return Err(Error::InvalidConfig(format!(
                    "{} init transforms for {} clouds",
                    t.len(),
                    clouds.len()
                )));
            }
            t.to_vec()
        }
        None => vec![RigidTransform::identity(); clouds.len()],
    };

    let mut model = init_model(clouds, &transforms, cfg)?;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut degenerate = BTreeSet::new();
    let mut iterations_run = 0;

    for iter in 0..cfg.iterations {
        let points_old = transform_points(clouds, &transforms);
        let resp = e_step_cached(&points_old, &model);

        let (new_transforms, degen) =
            m_step_transforms(clouds, &weights, &resp, &model, &transforms);
        transforms = new_transforms;
        degenerate.extend(degen);

        let points_new = transform_points(clouds, &transforms);
        model = m_step_model_cached(&points_new, &weights, &resp, cfg, &model);

        trace.push(weighted_objective_cached(
            &points_new,
            &weights,
            &resp,
            &model,
        ));
        iterations_run = iter + 1;

        if let Some(tol) = cfg.convergence_tol {
            if iter > 0 {
                let prev = trace[iter - 1];
                let rel = (trace[iter] - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
                if rel < tol {
                    break;
                }
            }
        }
    }

    Ok(RegistrationResult {
        transforms,
        model,
        objective_trace: trace,
        converged_iterations: iterations_run,
        degenerate_sets: degenerate.into_iter().collect(),
    })
}
