//! Density-adaptive probabilistic registration of multiple 3D point sets.
//!
//! A shared Gaussian mixture models the scene in a reference frame while
//! per-set rigid transforms are estimated by expectation maximization.
//! Non-uniform acquisition density (range falloff, grazing incidence) is
//! corrected by per-point observation weights in the M-step: a sensor
//! model, an empirical local-PCA estimate, or uniform weights for the
//! plain baseline. The crate also ships the re-sampling baselines the
//! weighting replaces (voxel grid, FPS, GSS), a synthetic scan generator
//! with ground truth, an ICP baseline, evaluation metrics, and point-cloud
//! file I/O.

pub mod error;
pub mod evalkit;
pub mod geom;
pub mod io;
pub mod mixture;
pub mod resample;
pub mod spatial;
pub mod synth;
pub mod weights;

pub use error::{Error, Result};
pub use geom::{
    apply_transform, geodesic_rotation_error_deg, translation_error, Point3, PointCloud,
    RigidTransform,
};
pub use mixture::{
    register, register_with_weights, GmmModel, RegistrationConfig, RegistrationResult,
};
pub use weights::{ObservationWeights, WeightMethod};
