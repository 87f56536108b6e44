//! Generate a synthetic preference dataset and recover the reward parameter
//! without privacy.
//!
//! ```text
//! cargo run --example quickstart_mle
//! ```

use upldp::data::{coverage_check, generate, GenConfig};
use upldp::estimators::{fit_mle, FitConfig};

fn main() -> upldp::Result<()> {
    let config = GenConfig::new(2_000, 10, 5, 1.0, 1.0, 7);
    let (dataset, truth) = generate(&config)?;
    println!(
        "{} users x {} comparisons, d = {}, lambda_min(Sigma_D) = {:.4} (population {:.4})",
        dataset.n(),
        dataset.m(),
        dataset.dim(),
        coverage_check(&dataset)?,
        1.0 / config.d as f64
    );

    let fit = fit_mle(&dataset, &FitConfig::default())?;
    println!("theta*    = {:?}", truth.theta_star.as_slice());
    println!("theta_hat = {:?}", fit.theta_hat.as_slice());
    println!(
        "error {:.4} after {} steps, final loss {:.5}",
        fit.theta_hat.distance(&truth.theta_star),
        fit.iterations_done,
        fit.loss_trajectory.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}
