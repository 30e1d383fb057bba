//! Scratch: joint 3-scan registration sweep.

use nalgebra::Vector3;

use dare_core::geom::{geodesic_rotation_error_deg, translation_error};
use dare_core::mixture::{register, RegistrationConfig};
use dare_core::synth::{make_multi, make_room_scene, PerturbSpec, ScanSpec};
use dare_core::weights::WeightMethod;

fn main() {
    for seed in [21u64, 22, 23] {
        let mesh = make_room_scene(11);
        let specs = [
            ScanSpec::new(Vector3::new(2.0, 2.0, 1.5), 8000),
            ScanSpec::new(Vector3::new(5.5, 3.5, 1.2), 8000),
            ScanSpec::new(Vector3::new(3.5, 4.5, 1.8), 8000),
        ];
        let perturb = PerturbSpec {
            max_angle_deg: 10.0,
            translation_sigma: 0.3,
        };
        let (clouds, truths) = make_multi(&mesh, &specs, &perturb, seed).unwrap();
        println!(
            "seed {seed}: sizes {:?}",
            clouds.iter().map(|c| c.len()).collect::<Vec<_>>()
        );
        for (k, iters) in [(150usize, 80usize), (300, 50), (300, 100)] {
            let cfg = RegistrationConfig {
                components: k,
                iterations: iters,
                seed: 8,
                weight_method: WeightMethod::Empirical,
                ..RegistrationConfig::joint()
            };
            let result = register(&clouds, &cfg, None).unwrap();
            let errs: Vec<String> = (1..clouds.len())
                .map(|i| {
                    let rel = result.relative_transform(0, i);
                    format!(
                        "{:.2}deg/{:.3}m",
                        geodesic_rotation_error_deg(rel.rotation(), truths[i].rotation()),
                        translation_error(rel.translation(), truths[i].translation())
                    )
                })
                .collect();
            println!("  K={k} it={iters}: {errs:?}");
        }
    }
}
