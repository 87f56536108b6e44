//! The adaptive estimator with its default schedule, then with a
//! concentration radius of `L / sqrt(m)` and a fixed step size.

use upldp::aup::{aup_rlhf_fit, AupConfig, AupOptions};
use upldp::data::{generate, GenConfig};
use upldp::{FitResult, PrivacyBudget};

fn report(label: &str, fit: &FitResult, error: f64) {
    println!("{label}: error {error:.4}, {} steps, halted {}", fit.iterations_done, fit.halted_early);
    for (i, s) in fit.stages.iter().enumerate() {
        println!(
            "  stage {}: n_i {:>5}  T {:>4}/{:<4} tau {:>8.4}  eta {:.2e}  noise std {:>9.4}  kept {:.2}",
            i + 1,
            s.users,
            s.iterations_done,
            s.iterations,
            s.tau,
            s.eta,
            s.effective_noise_std,
            s.retained_fraction
        );
    }
}

fn main() -> upldp::Result<()> {
    let (n, m) = (1_000, 20);
    let (dataset, truth) = generate(&GenConfig::new(n, m, 5, 1.0, 1.0, 5))?;
    let budget = PrivacyBudget::new(8.0, 1e-5)?;

    let defaults = AupConfig::theory_defaults(n, m, &dataset.model(), &budget, &AupOptions::default())?;
    let fit = aup_rlhf_fit(&dataset, &budget, &defaults)?;
    report("default schedule", &fit, fit.theta_hat.distance(&truth.theta_star));

    let tuned = AupOptions { k: Some(1), t_cap: 100, tau_scale: Some(1.0), eta: Some(0.5), ..AupOptions::default() };
    let config = AupConfig::theory_defaults(n, m, &dataset.model(), &budget, &tuned)?;
    let fit = aup_rlhf_fit(&dataset, &budget, &config)?;
    report("tau = L/sqrt(m), one stage", &fit, fit.theta_hat.distance(&truth.theta_star));
    Ok(())
}
