//! Scratch mini-run of the density-robustness experiment.

use dare_core::evalkit::{run_experiment, ExperimentConfig, MethodConfig};
use dare_core::mixture::RegistrationConfig;
use dare_core::weights::WeightMethod;

fn main() {
    let trials: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(10);
    let gen = ExperimentConfig {
        n_trials: trials,
        seed: 2024,
        points_per_scan: 10_000,
        min_distance: 1.5,
        incidence: false,
        max_angle_deg: 90.0,
        translation_sigma: 1.0,
        failure_threshold_deg: 4.0,
        measure_runtime: true,
    };
    let base = RegistrationConfig {
        components: 200,
        iterations: 50,
        ..RegistrationConfig::pairwise()
    };
    let methods = vec![
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
    ];
    let t0 = std::time::Instant::now();
    let out = run_experiment(&gen, &methods).unwrap();
    println!("total time: {:.1}s", t0.elapsed().as_secs_f64());
    for r in &out.records {
        println!(
            "trial {:2} {:9} rot {:8.3} deg  trans {:7.3} m  ({:.2}s)",
            r.trial_id, r.method, r.rotation_error_deg, r.translation_error_m, r.runtime_s
        );
    }
    for s in &out.summaries {
        println!(
            "{:9} failure {:5.1}%  inlier {:.3} ± {:.3} deg  (n={})",
            s.method, s.failure_rate, s.mean_inlier_error, s.inlier_error_std, s.n_trials
        );
    }
}
