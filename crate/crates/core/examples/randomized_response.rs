//! User-level randomized response: every label is flipped with probability
//! `1 - sigmoid(eps / m)` and the estimator minimizes the de-biased loss.
//! With the total number of comparisons held fixed, larger users mean
//! noisier labels and a worse estimate.

use upldp::data::{generate, GenConfig};
use upldp::estimators::{fit_rr, FitConfig};
use upldp::harness::theory_curves;
use upldp::mech::rr_keep_probability;
use upldp::{ModelConfig, PrivacyBudget};

fn main() -> upldp::Result<()> {
    let total = 20_000;
    let budget = PrivacyBudget::new(1.0, 1e-5)?;
    let model = ModelConfig::new(5, 1.0, 1.0, 2)?;
    println!("{:>4} {:>6} {:>10} {:>10} {:>12}", "m", "n", "keep prob", "error", "rate (ref)");
    for m in [1, 5, 20, 50] {
        let n = total / m;
        let (dataset, truth) = generate(&GenConfig::new(n, m, 5, 1.0, 1.0, 11))?;
        let fit = fit_rr(&dataset, &budget, &FitConfig::default().with_seed(3))?;
        let reference = &theory_curves(&model, &[(n, m, budget.epsilon)], 0.05)[0];
        println!(
            "{m:>4} {n:>6} {:>10.4} {:>10.4} {:>12.3}",
            rr_keep_probability(budget.epsilon, m),
            fit.theta_hat.distance(&truth.theta_star),
            reference.rr_bound
        );
    }
    Ok(())
}
