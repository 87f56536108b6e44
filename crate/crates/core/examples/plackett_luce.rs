//! K-wise rankings under the Plackett-Luce model. The same estimators run
//! on ranked items; only randomized response is pairwise-only.

use upldp::data::{generate_kwise, GenConfig};
use upldp::estimators::{fit_mle, fit_userwise_dpsgd, FitConfig};
use upldp::model::pl_loss;
use upldp::PrivacyBudget;

fn main() -> upldp::Result<()> {
    let config = GenConfig::new(1_000, 10, 4, 1.0, 2.0, 9).with_arity(4);
    let (dataset, truth) = generate_kwise(&config)?;
    let first = &dataset.users[0].items[0];
    println!("first item ranking {:?}, loss at theta* {:.4}", first.perm, pl_loss(&truth.theta_star, first)?);

    let mle = fit_mle(&dataset, &FitConfig::default())?;
    println!("mle error      {:.4}", mle.theta_hat.distance(&truth.theta_star));

    let budget = PrivacyBudget::new(8.0, 1e-5)?;
    let private = fit_userwise_dpsgd(&dataset, &budget, &FitConfig::default().with_iterations(300))?;
    println!(
        "userwise error {:.4} (noise std {:.4})",
        private.theta_hat.distance(&truth.theta_star),
        private.effective_noise_std
    );
    Ok(())
}
