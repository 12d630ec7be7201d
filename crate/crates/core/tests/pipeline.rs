use fcs_core::design::{run_methods, Method, TrialConfig};
use fcs_core::landscape::generate_synthetic_landscape;
use fcs_core::metrics::jaccard_distance;

fn mean_jaccard(n: usize, lambda: f64) -> f64 {
    let landscape = generate_synthetic_landscape(10, 2, &[0.1, 0.04], 0.05, 0)
        .unwrap()
        .landscape;
    let cfg = TrialConfig {
        n,
        lambda,
        gamma: 1.0,
        alpha: 0.1,
        grid: None,
        trials: 200,
        method: Method::FcsFull,
        seed: 5,
        calibration_size: None,
        noise_scale: 1.0,
    };
    let records = run_methods(&cfg, &[Method::FcsFull, Method::ScsFull], &landscape).unwrap();
    let total: f64 = records
        .chunks_exact(2)
        .map(|pair| {
            jaccard_distance(
                pair[0].set.as_grid().unwrap(),
                pair[1].set.as_grid().unwrap(),
            )
            .unwrap()
        })
        .sum();
    total / cfg.trials as f64
}

#[test]
fn scs_and_fcs_sets_converge_as_training_grows() {
    let d: Vec<f64> = [8, 16, 64].iter().map(|&n| mean_jaccard(n, 4.0)).collect();
    assert!(d[0] > d[2], "{d:?}");
    assert!(d[0] > 0.0, "{d:?}");
}

#[test]
fn scs_and_fcs_agree_without_shift() {
    assert_eq!(mean_jaccard(16, 0.0), 0.0);
}
