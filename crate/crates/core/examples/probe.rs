//! Scratch diagnostics for registration convergence. Not part of the
//! shipped API surface.

use nalgebra::{Matrix3, Vector3};

use dare_core::geom::{apply_transform, geodesic_rotation_error_deg, PointCloud};
use dare_core::mixture::{register, RegistrationConfig};
use dare_core::synth::{make_pair, make_room_scene, PerturbSpec, ScanSpec, Thinning};
use dare_core::weights::WeightMethod;

fn room_pair(
    seed: u64,
    n: usize,
) -> (PointCloud, PointCloud, dare_core::geom::RigidTransform) {
    let mesh = make_room_scene(seed);
    let thinning = Thinning::InverseSquare { incidence: false };
    let spec_a = ScanSpec {
        sensor_position: Vector3::new(2.5, 2.0, 1.5),
        n_points: n,
        min_distance: 1.5,
        thinning,
    };
    let spec_b = ScanSpec {
        sensor_position: Vector3::new(5.5, 4.0, 1.2),
        n_points: n,
        min_distance: 1.5,
        thinning,
    };
    let perturb = PerturbSpec {
        max_angle_deg: 40.0,
        translation_sigma: 1.0,
    };
    make_pair(&mesh, &spec_a, &spec_b, &perturb, seed).unwrap()
}

fn main() {
    let (a, b, truth) = room_pair(7, 6000);
    println!("sizes: {} / {}", a.len(), b.len());
    let b_aligned = apply_transform(&truth, &b);

    for (label, method, k, iters) in [
        ("empirical k=100 it=30", WeightMethod::Empirical, 100, 30),
        ("empirical k=100 it=80", WeightMethod::Empirical, 100, 80),
        ("empirical k=200 it=50", WeightMethod::Empirical, 200, 50),
        ("empirical k=200 it=120", WeightMethod::Empirical, 200, 120),
        ("uniform   k=200 it=50", WeightMethod::Uniform, 200, 50),
    ] {
        let cfg = RegistrationConfig {
            components: k,
            iterations: iters,
            seed: 3,
            weight_method: method,
            ..RegistrationConfig::pairwise()
        };
        let t0 = std::time::Instant::now();
        let result = register(&[a.clone(), b_aligned.clone()], &cfg, None).unwrap();
        let rel = result.relative_transform(0, 1);
        let rot = geodesic_rotation_error_deg(rel.rotation(), &Matrix3::identity());
        let trans = rel.translation().norm();
        println!(
            "{label}: rot {rot:.4} deg, trans {trans:.4} m, {:.2}s, q[0]={:.4} q[-1]={:.4}",
            t0.elapsed().as_secs_f64(),
            result.objective_trace[0],
            result.objective_trace.last().unwrap()
        );
        let tail: Vec<String> = result
            .objective_trace
            .iter()
            .rev()
            .take(5)
            .map(|q| format!("{q:.6}"))
            .collect();
        println!("   trace tail: {tail:?}");
    }
}
