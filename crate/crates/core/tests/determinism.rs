use upldp::aup::{aup_rlhf_fit, AupConfig, AupOptions};
use upldp::data::{generate, GenConfig};
use upldp::estimators::{fit_group_privacy, fit_mle, fit_rr, fit_userwise_dpsgd, FitConfig, FitResult};
use upldp::harness::{rows_to_csv, run_experiment_with_threads, ExperimentSpec};
use upldp::PrivacyBudget;

fn on_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn all_fits() -> Vec<FitResult> {
    let (ds, _) = generate(&GenConfig::new(120, 6, 4, 1.0, 1.0, 1)).unwrap();
    let b = PrivacyBudget::new(2.0, 1e-5).unwrap();
    let cfg = FitConfig::default().with_iterations(60).with_batch(40).with_seed(3);
    let aup = AupConfig::theory_defaults(120, 6, &ds.model(), &b, &AupOptions { t_cap: 60, seed: 3, ..AupOptions::default() }).unwrap();
    vec![
        fit_mle(&ds, &cfg).unwrap(),
        fit_rr(&ds, &b, &cfg).unwrap(),
        fit_userwise_dpsgd(&ds, &b, &cfg).unwrap(),
        fit_group_privacy(&ds, &b, &cfg).unwrap(),
        aup_rlhf_fit(&ds, &b, &aup).unwrap(),
    ]
}

#[test]
fn fits_are_bit_identical_across_thread_counts() {
    let one = on_threads(1, all_fits);
    let four = on_threads(4, all_fits);
    assert_eq!(one, four);
}

#[test]
fn dataset_bytes_depend_only_on_config() {
    let cfg = GenConfig::new(10, 3, 4, 1.0, 1.0, 42);
    let a = generate(&cfg).unwrap().0.to_json().unwrap();
    let b = on_threads(3, || generate(&cfg).unwrap().0.to_json().unwrap());
    assert_eq!(a, b);
    let other = generate(&GenConfig { seed: 43, ..cfg }).unwrap().0.to_json().unwrap();
    assert_ne!(a, other);
}

#[test]
fn bench_csv_is_identical_across_thread_counts() {
    let spec: ExperimentSpec = serde_json::from_str(
        r#"{"grid":{"n":[32],"m":[2,4],"d":[3],"epsilon":[0.5,2.0]},
            "estimators":["mle","rr","userwise","group","aup"],"reps":2,"master_seed":9,
            "overrides":{"fit":{"T":25},"aup":{"t_cap":25}}}"#,
    )
    .unwrap();
    let a = rows_to_csv(&run_experiment_with_threads(&spec, 1).unwrap()).unwrap();
    let b = rows_to_csv(&run_experiment_with_threads(&spec, 5).unwrap()).unwrap();
    assert_eq!(a, b);
}
