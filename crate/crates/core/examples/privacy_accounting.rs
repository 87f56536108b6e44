//! How the noise multiplier responds to the number of steps, the sampling
//! rate and the budget.

use upldp::mech::{privacy_account, PrivacyBudget};

fn main() -> upldp::Result<()> {
    let n = 10_000;
    println!("{:>5} {:>6} {:>6} {:>12} {:>12} {:>10}", "eps", "batch", "T", "eps'", "eps_base", "sigma");
    for eps in [1.0, 8.0] {
        let budget = PrivacyBudget::new(eps, 1e-5)?;
        for batch in [100, 1_000, n] {
            for t in [100, 1_000] {
                let plan = privacy_account(&budget, n, batch, t)?;
                println!(
                    "{eps:>5} {batch:>6} {t:>6} {:>12.3e} {:>12.3e} {:>10.2}",
                    plan.per_iter_epsilon, plan.base_epsilon, plan.sigma
                );
            }
        }
    }

    let budget = PrivacyBudget::new(1.0, 1e-5)?;
    let plan = privacy_account(&budget.halved(), n, n, 500)?.for_concentrated_mean(0.2, n, &budget);
    println!(
        "\nmean of {n} users within tau = 0.2: sensitivity {:.2e}, std {:.4} (update-rule form {:.4})",
        plan.sensitivity,
        plan.gaussian_std,
        plan.literal_std.unwrap_or(f64::NAN)
    );
    Ok(())
}
