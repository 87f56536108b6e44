use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use upldp::aup::{aup_rlhf_fit, AupConfig, AupOptions};
use upldp::data::{generate, sample_label, GenConfig};
use upldp::estimators::{fit_group_privacy, fit_mle, fit_rr, fit_userwise_dpsgd, FitConfig};
use upldp::{ParamVector, PrivacyBudget};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn mle_is_consistent_at_large_sample() {
    let (ds, truth) = generate(&GenConfig::new(10_000, 10, 5, 1.0, 1.0, 1)).unwrap();
    let fit = fit_mle(&ds, &FitConfig::default()).unwrap();
    assert!(fit.theta_hat.distance(&truth.theta_star) < 0.15);
    assert!(fit.iterations_done < 1000);
}

#[test]
fn mle_shrinks_to_zero_when_labels_are_coin_flips() {
    let zero = ParamVector::zeros(4);
    let mut medians = Vec::new();
    for total in [256, 2048, 16384] {
        let norms: Vec<f64> = (0..20)
            .map(|rep| {
                let (mut ds, _) = generate(&GenConfig::new(total / 4, 4, 4, 1.0, 1.0, rep)).unwrap();
                let mut r = ChaCha8Rng::seed_from_u64(1000 + rep);
                for u in &mut ds.users {
                    for it in &mut u.items {
                        it.y = sample_label(&zero, &it.x, &mut r).unwrap();
                    }
                }
                fit_mle(&ds, &FitConfig::default()).unwrap().theta_hat.norm()
            })
            .collect();
        medians.push(median(norms));
    }
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

#[test]
fn rr_error_tracks_the_flip_factor_at_m_one() {
    let eps: f64 = 1.0;
    let factor = (eps.exp() + 1.0) / (eps.exp() - 1.0);
    let mut private = Vec::new();
    let mut clean = Vec::new();
    for rep in 0..10 {
        let (ds, truth) = generate(&GenConfig::new(5000, 1, 5, 1.0, 1.0, 50 + rep)).unwrap();
        let cfg = FitConfig::default().with_seed(rep);
        let err = |b: f64| fit_rr(&ds, &PrivacyBudget { epsilon: b, delta: 0.0 }, &cfg).unwrap().theta_hat.distance(&truth.theta_star);
        private.push(err(eps));
        clean.push(err(1e6));
    }
    let ratio = median(private) / (median(clean) * factor);
    assert!((1.0 / 3.0..=3.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn clipping_bounds_each_update() {
    let (ds, _) = generate(&GenConfig::new(50, 5, 4, 1.0, 1.0, 2)).unwrap();
    let b = PrivacyBudget::new(1.0, 1e-5).unwrap();
    let (eta, clip) = (0.5, 0.01);
    for t in [1, 5] {
        let cfg = FitConfig { iterations: t, eta: Some(eta), clip: Some(clip), noise_multiplier: Some(0.0), ..FitConfig::default() };
        for fit in [fit_userwise_dpsgd(&ds, &b, &cfg).unwrap(), fit_group_privacy(&ds, &b, &cfg).unwrap()] {
            assert!(fit.theta_hat.norm() <= eta * clip * t as f64 + 1e-12);
        }
    }
}

#[test]
fn group_privacy_at_m_one_is_item_level_dpsgd() {
    let (ds, _) = generate(&GenConfig::new(200, 1, 4, 1.0, 1.0, 3)).unwrap();
    let b = PrivacyBudget::new(2.0, 1e-5).unwrap();
    let cfg = FitConfig::default().with_iterations(30).with_seed(4);
    let g = fit_group_privacy(&ds, &b, &cfg).unwrap();
    let u = fit_userwise_dpsgd(&ds, &b, &cfg).unwrap();
    assert_eq!(g.effective_noise_std, u.effective_noise_std);
    assert_eq!(g.theta_hat, u.theta_hat);
}

#[test]
fn userwise_noise_exceeds_aup_at_matched_cell() {
    let (ds, _) = generate(&GenConfig::new(400, 50, 5, 1.0, 1.0, 5)).unwrap();
    let b = PrivacyBudget::new(1.0, 1e-5).unwrap();
    let t = 40;
    let uw = fit_userwise_dpsgd(&ds, &b, &FitConfig::default().with_iterations(t)).unwrap();
    let opts = AupOptions { k: Some(1), t_cap: t, tau_scale: Some(1.0), ..AupOptions::default() };
    let cfg = AupConfig::theory_defaults(400, 50, &ds.model(), &b, &opts).unwrap();
    let aup = aup_rlhf_fit(&ds, &b, &cfg).unwrap();
    assert!(aup.iterations_done > 0);
    assert!(aup.effective_noise_std < uw.effective_noise_std);
}

#[test]
fn aup_single_stage_equals_direct_run() {
    let (ds, _) = generate(&GenConfig::new(64, 8, 3, 1.0, 1.0, 6)).unwrap();
    let b = PrivacyBudget::new(3.0, 1e-5).unwrap();
    let opts = AupOptions { k: Some(1), t_cap: 30, seed: 9, ..AupOptions::default() };
    let cfg = AupConfig::theory_defaults(64, 8, &ds.model(), &b, &opts).unwrap();
    assert_eq!(cfg.stages[0].batch_users, 64);
    let fit = aup_rlhf_fit(&ds, &b, &cfg).unwrap();
    assert_eq!(fit.stages.len(), 1);
    assert_eq!(fit.stages[0].users, 64);
    assert!(fit.theta_hat.norm() <= 1.0 + 1e-9);
}

#[test]
fn fit_result_json_has_documented_fields() {
    let (ds, _) = generate(&GenConfig::new(30, 3, 3, 1.0, 1.0, 7)).unwrap();
    let fit = fit_mle(&ds, &FitConfig::default().with_iterations(10)).unwrap();
    let v: serde_json::Value = serde_json::to_value(&fit).unwrap();
    for key in ["theta_hat", "iterations_done", "halted_early", "effective_noise_std", "loss_trajectory"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(v.get("stages").is_none());
    let back: upldp::FitResult = serde_json::from_value(v).unwrap();
    assert_eq!(back, fit);
}
