//! Differential-privacy primitives: Laplace and Gaussian noise, the
//! AboveThreshold sparse-vector mechanism, user-level randomized response,
//! and the noise accountant used by the private SGD variants.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::sigmoid;

/// An `(epsilon, delta)` privacy guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let b = Self { epsilon, delta };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.epsilon.is_nan() {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    /// Half of both parameters, as handed to each of the two private
    /// components of one AdapUserPriv-SGD stage.
    pub fn halved(&self) -> Self {
        Self { epsilon: self.epsilon / 2.0, delta: self.delta / 2.0 }
    }
}

/// Draw from Laplace(0, scale) by inverting the CDF.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(invalid(format!("Laplace scale must be positive, got {scale}")));
    }
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let tail = 1.0 - 2.0 * u.abs();
        if tail > 0.0 {
            return Ok(-scale * u.signum() * tail.ln());
        }
    }
}

/// `d` independent N(0, std^2) coordinates.
pub fn gaussian_vector<R: Rng + ?Sized>(std: f64, d: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(std > 0.0) || !std.is_finite() {
        return Err(invalid(format!("Gaussian std must be positive, got {std}")));
    }
    Ok((0..d).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Answer of one AboveThreshold query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    /// The noisy query cleared the noisy threshold.
    Above,
    /// It did not; the mechanism is now halted.
    Below,
}

/// State of the sparse-vector mechanism: the noisy threshold is drawn once,
/// each query gets fresh noise, and the first `Below` answer halts it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AboveThreshold {
    noisy_threshold: f64,
    epsilon: f64,
    halted: bool,
}

impl AboveThreshold {
    /// Draws `threshold - Lap(2 / epsilon)`.
    pub fn init<R: Rng + ?Sized>(threshold: f64, epsilon: f64, rng: &mut R) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(invalid(format!("AboveThreshold epsilon must be positive, got {epsilon}")));
        }
        let noisy_threshold = threshold - laplace_sample(2.0 / epsilon, rng)?;
        Ok(Self { noisy_threshold, epsilon, halted: false })
    }

    /// Compares `q + Lap(4 / epsilon)` with the noisy threshold.
    pub fn query<R: Rng + ?Sized>(&mut self, q: f64, rng: &mut R) -> Result<Answer> {
        if self.halted {
            return Err(Error::Halted);
        }
        let noisy = q + laplace_sample(4.0 / self.epsilon, rng)?;
        if noisy < self.noisy_threshold {
            self.halted = true;
            Ok(Answer::Below)
        } else {
            Ok(Answer::Above)
        }
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn noisy_threshold(&self) -> f64 {
        self.noisy_threshold
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Probability that user-level randomized response keeps a label:
/// `sigmoid(epsilon / m)`.
pub fn rr_keep_probability(epsilon: f64, m: usize) -> f64 {
    sigmoid(epsilon / m as f64)
}

/// Randomized response at level `epsilon / m` per label, so that all `m`
/// labels of one user jointly satisfy `epsilon`-label DP.
pub fn rr_flip<R: Rng + ?Sized>(y: bool, epsilon: f64, m: usize, rng: &mut R) -> bool {
    debug_assert!(epsilon >= 0.0 && m >= 1);
    if rng.random::<f64>() < rr_keep_probability(epsilon, m) {
        y
    } else {
        !y
    }
}

/// Noise calibration for `iterations` subsampled Gaussian steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePlan {
    /// Noise multiplier: std per unit of L2 sensitivity.
    pub sigma: f64,
    /// Per-step budget required by advanced composition.
    pub per_iter_epsilon: f64,
    pub per_iter_delta: f64,
    /// Per-step budget before amplification by subsampling.
    pub base_epsilon: f64,
    pub base_delta: f64,
    pub sampling_rate: f64,
    pub iterations: usize,
    /// L2 sensitivity the std below was scaled for.
    pub sensitivity: f64,
    /// Operative per-coordinate std, `sigma * sensitivity`.
    pub gaussian_std: f64,
    /// Literal per-coordinate std of the AdapUserPriv-SGD update rule,
    /// `sqrt(8 tau^2 ln(e^eps T / delta)) * sigma / n_batch`; reporting only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub literal_std: Option<f64>,
}

impl NoisePlan {
    /// Scales the plan for a mean over `n_batch` users whose gradients are
    /// `tau`-concentrated: sensitivity `2 tau / n_batch`.
    pub fn for_concentrated_mean(mut self, tau: f64, n_batch: usize, budget: &PrivacyBudget) -> Self {
        let nb = n_batch as f64;
        self.sensitivity = 2.0 * tau / nb;
        self.gaussian_std = self.sigma * self.sensitivity;
        let log_term = budget.epsilon + (self.iterations as f64 / budget.delta).ln();
        self.literal_std = Some((8.0 * tau * tau * log_term).sqrt() * self.sigma / nb);
        self
    }

    /// Scales the plan for a mean of `n_batch` contributions clipped to
    /// `clip`, under replacement of one contribution: sensitivity
    /// `2 clip / n_batch`.
    pub fn for_clipped_mean(mut self, clip: f64, n_batch: usize) -> Self {
        self.sensitivity = 2.0 * clip / n_batch as f64;
        self.gaussian_std = self.sigma * self.sensitivity;
        self.literal_std = None;
        self
    }
}

/// Noise multiplier for `iterations` steps that each touch a Poisson
/// subsample of rate `n_batch / n` and must jointly satisfy `budget`.
///
/// Advanced composition gives the per-step target
/// `eps' = eps / (4 sqrt(2 T ln(2 / delta)))`, `delta' = delta / (2T)`.
/// Undoing amplification by subsampling gives the budget of the
/// un-subsampled step, `eps' n / n_batch` and `delta' n / n_batch`, which the
/// classical Gaussian mechanism meets with
/// `sigma = sqrt(2 ln(1.25 / delta_base)) / eps_base`.
pub fn privacy_account(budget: &PrivacyBudget, n: usize, n_batch: usize, iterations: usize) -> Result<NoisePlan> {
    budget.validate()?;
    if n == 0 || n_batch == 0 || n_batch > n {
        return Err(invalid(format!("batch size must satisfy 1 <= n_batch <= n, got {n_batch} of {n}")));
    }
    if iterations == 0 {
        return Err(invalid("number of iterations must be at least 1"));
    }
    let t = iterations as f64;
    let per_iter_epsilon = budget.epsilon / (4.0 * (2.0 * t * (2.0 / budget.delta).ln()).sqrt());
    let per_iter_delta = budget.delta / (2.0 * t);
    let amplification = n as f64 / n_batch as f64;
    let base_epsilon = per_iter_epsilon * amplification;
    // A smaller delta only adds noise, so capping keeps the log positive.
    let base_delta = (per_iter_delta * amplification).min(0.5);
    let sigma = (2.0 * (1.25 / base_delta).ln()).sqrt() / base_epsilon;
    Ok(NoisePlan {
        sigma,
        per_iter_epsilon,
        per_iter_delta,
        base_epsilon,
        base_delta,
        sampling_rate: 1.0 / amplification,
        iterations,
        sensitivity: 1.0,
        gaussian_std: sigma,
        literal_std: None,
    })
}

/// Item-level budget whose `m`-fold group composition yields `budget` at the
/// user level: `(eps / m, delta e^{-(eps - eps/m)} / m)`.
pub fn group_privacy_budget(budget: &PrivacyBudget, m: usize) -> Result<PrivacyBudget> {
    budget.validate()?;
    if m == 0 {
        return Err(invalid("group size m must be at least 1"));
    }
    let mf = m as f64;
    let epsilon = budget.epsilon / mf;
    let delta = budget.delta * (-(budget.epsilon - epsilon)).exp() / mf;
    Ok(PrivacyBudget { epsilon, delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(1.0, 1e-5).is_ok());
        assert!(PrivacyBudget::new(0.0, 1e-5).is_err());
        assert!(PrivacyBudget::new(1.0, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn samplers_reject_nonpositive_scale() {
        let mut r = rng(0);
        assert!(laplace_sample(0.0, &mut r).is_err());
        assert!(laplace_sample(-1.0, &mut r).is_err());
        assert!(gaussian_vector(0.0, 3, &mut r).is_err());
    }

    #[test]
    fn laplace_moments() {
        let mut r = rng(1);
        let scale = 1.5;
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| laplace_sample(scale, &mut r).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * scale * (2.0 / n as f64).sqrt());
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((var.sqrt() / (scale * 2f64.sqrt()) - 1.0).abs() < 0.02);
        let mut abs: Vec<f64> = draws.iter().map(|v| v.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let median = abs[n / 2];
        assert!((median / (scale * 2f64.ln()) - 1.0).abs() < 0.02);
    }

    #[test]
    fn samplers_are_deterministic_in_the_stream() {
        let a: Vec<f64> = {
            let mut r = rng(3);
            (0..5).map(|_| laplace_sample(1.0, &mut r).unwrap()).collect()
        };
        let b: Vec<f64> = {
            let mut r = rng(3);
            (0..5).map(|_| laplace_sample(1.0, &mut r).unwrap()).collect()
        };
        assert_eq!(a, b);
        assert_eq!(
            gaussian_vector(2.0, 4, &mut rng(8)).unwrap(),
            gaussian_vector(2.0, 4, &mut rng(8)).unwrap()
        );
    }

    #[test]
    fn above_threshold_noise_free_limit() {
        let mut r = rng(2);
        let mut at = AboveThreshold::init(80.0, 1e6, &mut r).unwrap();
        assert_eq!(at.query(100.0, &mut r).unwrap(), Answer::Above);
        assert!(!at.is_halted());
        assert_eq!(at.query(50.0, &mut r).unwrap(), Answer::Below);
        assert!(at.is_halted());
        assert!(matches!(at.query(100.0, &mut r), Err(Error::Halted)));
    }

    #[test]
    fn rr_saturation_and_symmetry() {
        let mut r = rng(4);
        assert!((0..100_000).all(|_| rr_flip(true, 50.0, 1, &mut r)));
        assert!((0..100_000).all(|_| !rr_flip(false, 100.0, 2, &mut r)));
        assert_relative_eq!(rr_keep_probability(3f64.ln() * 4.0, 4), 0.75, epsilon = 1e-15);
        assert_eq!(rr_keep_probability(0.0, 7), 0.5);
    }

    #[test]
    fn accountant_identities() {
        let b = PrivacyBudget::new(1.0, 1e-5).unwrap();
        let plan = privacy_account(&b, 1000, 100, 50).unwrap();
        let eps_p = 1.0 / (4.0 * (2.0 * 50.0 * (2.0f64 / 1e-5).ln()).sqrt());
        assert_relative_eq!(plan.per_iter_epsilon, eps_p, max_relative = 1e-14);
        assert_relative_eq!(plan.per_iter_delta, 1e-5 / 100.0, max_relative = 1e-14);
        assert_relative_eq!(plan.base_epsilon, eps_p * 10.0, max_relative = 1e-14);
        assert_relative_eq!(plan.base_delta, 1e-5 / 100.0 * 10.0, max_relative = 1e-14);
        let sigma = (2.0 * (1.25 / plan.base_delta).ln()).sqrt() / plan.base_epsilon;
        assert_relative_eq!(plan.sigma, sigma, max_relative = 1e-14);
        assert_eq!(plan.gaussian_std, plan.sigma);

        let full = privacy_account(&b, 1000, 1000, 50).unwrap();
        assert_eq!(full.base_epsilon, full.per_iter_epsilon);
    }

    #[test]
    fn accountant_monotonicity() {
        let loose = privacy_account(&PrivacyBudget::new(2.0, 1e-5).unwrap(), 500, 50, 100).unwrap();
        let tight = privacy_account(&PrivacyBudget::new(1.0, 1e-5).unwrap(), 500, 50, 100).unwrap();
        assert!(loose.sigma < tight.sigma);

        let b = PrivacyBudget::new(1.0, 1e-5).unwrap();
        let short = privacy_account(&b, 500, 50, 100).unwrap();
        let long = privacy_account(&b, 500, 50, 400).unwrap();
        assert_relative_eq!(long.per_iter_epsilon, short.per_iter_epsilon / 2.0, max_relative = 1e-12);
        assert!(long.sigma >= 2.0 * short.sigma);
    }

    #[test]
    fn accountant_rejects_bad_shapes() {
        let b = PrivacyBudget::new(1.0, 1e-5).unwrap();
        assert!(privacy_account(&b, 10, 11, 5).is_err());
        assert!(privacy_account(&b, 10, 0, 5).is_err());
        assert!(privacy_account(&b, 10, 5, 0).is_err());
    }

    #[test]
    fn calibrated_stds() {
        let b = PrivacyBudget::new(3.0, 1e-5).unwrap();
        let plan = privacy_account(&b, 100, 100, 20).unwrap();
        let conc = plan.for_concentrated_mean(0.25, 100, &b);
        assert_relative_eq!(conc.gaussian_std, 2.0 * 0.25 / 100.0 * plan.sigma, max_relative = 1e-14);
        let lit = (8.0 * 0.0625 * (3.0 + (20.0f64 / 1e-5).ln())).sqrt() * plan.sigma / 100.0;
        assert_relative_eq!(conc.literal_std.unwrap(), lit, max_relative = 1e-14);
        let clip = plan.for_clipped_mean(1.0, 100);
        assert_relative_eq!(clip.gaussian_std, 0.02 * plan.sigma, max_relative = 1e-14);
    }

    #[test]
    fn group_budget_cases() {
        let b = PrivacyBudget::new(3.0, 1e-5).unwrap();
        assert_eq!(group_privacy_budget(&b, 1).unwrap(), b);
        let g = group_privacy_budget(&PrivacyBudget::new(3.0, 1e-5).unwrap(), 10).unwrap();
        assert_relative_eq!(g.epsilon, 0.3, epsilon = 1e-15);
        for m in 1..60 {
            let g = group_privacy_budget(&b, m).unwrap();
            assert!(g.delta <= b.delta);
        }
        assert!(group_privacy_budget(&b, 0).is_err());
    }
}
