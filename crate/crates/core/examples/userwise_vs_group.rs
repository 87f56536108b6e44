//! Two ways to get user-level guarantees from DP-SGD: clip whole-user
//! gradients, or run item-level DP-SGD at the budget group privacy allows.

use upldp::data::{generate, GenConfig};
use upldp::estimators::{fit_group_privacy, fit_userwise_dpsgd, FitConfig};
use upldp::mech::group_privacy_budget;
use upldp::PrivacyBudget;

fn main() -> upldp::Result<()> {
    let budget = PrivacyBudget::new(3.0, 1e-5)?;
    let config = FitConfig::default().with_iterations(200).with_seed(1);
    println!("{:>3} {:>10} {:>14} {:>10} {:>14} {:>10}", "m", "item eps", "userwise std", "error", "group std", "error");
    for m in [1, 10, 50] {
        let (dataset, truth) = generate(&GenConfig::new(10_000 / m, m, 5, 1.0, 1.0, 2))?;
        let user = fit_userwise_dpsgd(&dataset, &budget, &config)?;
        let group = fit_group_privacy(&dataset, &budget, &config)?;
        println!(
            "{m:>3} {:>10.3} {:>14.5} {:>10.4} {:>14.5} {:>10.4}",
            group_privacy_budget(&budget, m)?.epsilon,
            user.effective_noise_std,
            user.theta_hat.distance(&truth.theta_star),
            group.effective_noise_std,
            group.theta_hat.distance(&truth.theta_star)
        );
    }
    Ok(())
}
