//! Scratch checks: self-registration basin from a 20 degree / 0.5 m
//! perturbation, and the weight-precompute vs registration cost ratio.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use dare_core::geom::{
    apply_transform, geodesic_rotation_error_deg, translation_error, PointCloud, RigidTransform,
};
use dare_core::mixture::{register, register_with_weights, RegistrationConfig};
use dare_core::synth::{make_room_scene, sample_uniform};
use dare_core::weights::{compute_weights, regularize_weights, uniform_weights, WeightMethod};

fn main() {
    // --- self-registration, 20 seeds, both methods ---
    let mesh = make_room_scene(50);
    let mut ok_uniform = 0;
    let mut ok_empirical = 0;
    let mut max_time: f64 = 0.0;
    for seed in 0..20u64 {
        let sample = sample_uniform(&mesh, 2000, seed).unwrap();
        let cloud = PointCloud::new(sample.points().to_vec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDEAD);
        let axis: [f64; 3] = UnitSphere.sample(&mut rng);
        let dir: [f64; 3] = UnitSphere.sample(&mut rng);
        let perturbation = RigidTransform::from_axis_angle(
            Vector3::from_row_slice(&axis),
            20.0f64.to_radians(),
            0.5 * Vector3::from_row_slice(&dir),
        );
        let moved = apply_transform(&perturbation, &cloud);
        let truth = perturbation.inverse();

        for method in [WeightMethod::Uniform, WeightMethod::Empirical] {
            let cfg = RegistrationConfig {
                components: 200,
                iterations: 50,
                seed,
                weight_method: method,
                ..RegistrationConfig::pairwise()
            };
            let t0 = Instant::now();
            let result = register(&[cloud.clone(), moved.clone()], &cfg, None).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            max_time = max_time.max(dt);
            let rel = result.relative_transform(0, 1);
            let rot = geodesic_rotation_error_deg(rel.rotation(), truth.rotation());
            let trans = translation_error(rel.translation(), truth.translation());
            let ok = rot < 1.0 && trans < 0.05;
            if ok {
                match method {
                    WeightMethod::Uniform => ok_uniform += 1,
                    _ => ok_empirical += 1,
                }
            } else {
                println!("seed {seed} {method:?}: rot {rot:.3} trans {trans:.3}  ({dt:.2}s)");
            }
        }
    }
    println!("self-reg: uniform {ok_uniform}/20, empirical {ok_empirical}/20, max time {max_time:.2}s");

    // --- precompute cost ratio at 10k points ---
    let sample = sample_uniform(&mesh, 10_000, 99).unwrap();
    let cloud = PointCloud::new(sample.points().to_vec()).unwrap();
    let t0 = Instant::now();
    let raw = compute_weights(&cloud, WeightMethod::Empirical, 0.9, 10).unwrap();
    let reg = regularize_weights(&raw, &cloud, 10, 8.0).unwrap();
    let _ = reg.normalized_mean_one();
    let weight_time = t0.elapsed().as_secs_f64();

    let cfg = RegistrationConfig {
        components: 200,
        iterations: 50,
        seed: 1,
        weight_method: WeightMethod::Empirical,
        ..RegistrationConfig::pairwise()
    };
    let raw_pair = [uniform_weights(cloud.len()), uniform_weights(cloud.len())];
    let t1 = Instant::now();
    let _ = register_with_weights(&[cloud.clone(), cloud.clone()], &raw_pair, &cfg, None).unwrap();
    let reg_time = t1.elapsed().as_secs_f64();
    println!(
        "weights {weight_time:.3}s vs registration {reg_time:.3}s -> ratio {:.4}",
        weight_time / reg_time
    );
}
