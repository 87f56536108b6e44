//! Baseline estimators: the non-private MLE, the randomized-response
//! estimator with its de-biased loss, user-wise DP-SGD and item-level DP-SGD
//! run at a group-privacy budget.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aup::StageRecord;
use crate::data::{Dataset, UserRecord};
use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{axpy, clip_norm, dist_sq, norm, scale};
use crate::mech::{gaussian_vector, group_privacy_budget, privacy_account, rr_flip, rr_keep_probability, PrivacyBudget};
use crate::model::{project, sigmoid, softplus, user_loss_grad, Observation, ParamVector, PreferenceItem};

/// Knobs shared by every fitting routine. Fields a routine does not use are
/// ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Number of optimization steps `T`.
    #[serde(rename = "T")]
    pub iterations: usize,
    /// Step size; each routine documents its default.
    pub eta: Option<f64>,
    /// Expected users per step; defaults to all users.
    pub batch_users: Option<usize>,
    /// Clipping radius `C`; defaults to `L`.
    pub clip: Option<f64>,
    pub seed: u64,
    /// Hard cap on steps regardless of `T`.
    pub max_wall_iters: usize,
    /// Replaces the calibrated noise multiplier. Setting it voids the
    /// privacy guarantee and exists for noise-free reductions in tests.
    pub noise_multiplier: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            eta: None,
            batch_users: None,
            clip: None,
            seed: 0,
            max_wall_iters: 1_000_000,
            noise_multiplier: None,
        }
    }
}

impl FitConfig {
    pub fn with_iterations(mut self, t: usize) -> Self {
        self.iterations = t;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_batch(mut self, users: usize) -> Self {
        self.batch_users = Some(users);
        self
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        self.clip = Some(clip);
        self
    }

    fn steps(&self) -> Result<usize> {
        if self.iterations == 0 {
            return Err(invalid("T must be at least 1"));
        }
        Ok(self.iterations.min(self.max_wall_iters.max(1)))
    }

    fn eta_or(&self, default: f64) -> Result<f64> {
        let eta = self.eta.unwrap_or(default);
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(invalid(format!("step size must be positive, got {eta}")));
        }
        Ok(eta)
    }

    fn batch(&self, n: usize) -> Result<usize> {
        let b = self.batch_users.unwrap_or(n);
        if b == 0 || b > n {
            return Err(invalid(format!("batch size must satisfy 1 <= batch <= {n}, got {b}")));
        }
        Ok(b)
    }

    fn clip_or(&self, default: f64) -> Result<f64> {
        let c = self.clip.unwrap_or(default);
        if !(c > 0.0) || !c.is_finite() {
            return Err(invalid(format!("clip radius must be positive, got {c}")));
        }
        Ok(c)
    }
}

/// Output of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: ParamVector,
    pub iterations_done: usize,
    pub halted_early: bool,
    /// Mean over steps of the per-coordinate std of injected Gaussian noise.
    pub effective_noise_std: f64,
    /// Objective values sampled along the run.
    pub loss_trajectory: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privacy_spent: Option<PrivacyBudget>,
}

const GRAD_TOL: f64 = 1e-8;
const DIVERGENCE_FACTOR: f64 = 1e3;
const TRAJECTORY_POINTS: usize = 500;

pub(crate) fn trajectory_stride(steps: usize) -> usize {
    (steps / TRAJECTORY_POINTS).max(1)
}

/// Full-batch projected gradient descent from zero. Stops when the gradient
/// mapping falls below `GRAD_TOL` and returns the last iterate.
fn projected_gd<F>(d: usize, bound: f64, eta: f64, steps: usize, objective: F) -> Result<FitResult>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut theta = ParamVector::zeros(d);
    let stride = trajectory_stride(steps);
    let mut trajectory = Vec::new();
    let mut initial = None;
    let mut done = 0;
    for t in 0..steps {
        let (loss, grad) = objective(&theta);
        let limit = DIVERGENCE_FACTOR * *initial.get_or_insert(loss.max(f64::MIN_POSITIVE));
        if !loss.is_finite() || loss > limit {
            return Err(Error::Diverged { loss, limit });
        }
        if t % stride == 0 {
            trajectory.push(loss);
        }
        let mut raw = theta.to_vec();
        axpy(-eta, &grad, &mut raw);
        let next = project(&raw, bound);
        let mapping = dist_sq(&next, &theta).sqrt() / eta;
        theta = next;
        done = t + 1;
        if mapping < GRAD_TOL {
            break;
        }
    }
    Ok(FitResult {
        theta_hat: theta,
        iterations_done: done,
        halted_early: false,
        effective_noise_std: 0.0,
        loss_trajectory: trajectory,
        stages: Vec::new(),
        privacy_spent: None,
    })
}

/// Mean loss and gradient over all items. Users are processed in parallel
/// and summed in index order, so the result does not depend on the thread
/// count.
fn mean_loss_grad<I: Observation + Send>(theta: &[f64], users: &[UserRecord<I>]) -> (f64, Vec<f64>) {
    let partial: Vec<(f64, Vec<f64>, usize)> = users
        .par_iter()
        .map(|u| {
            let mut g = vec![0.0; theta.len()];
            let loss = u.items.iter().map(|it| it.accumulate(theta, 1.0, &mut g)).sum();
            (loss, g, u.items.len())
        })
        .collect();
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    let mut count = 0;
    for (l, g, c) in &partial {
        loss += l;
        axpy(1.0, g, &mut grad);
        count += c;
    }
    let inv = 1.0 / count.max(1) as f64;
    scale(inv, &mut grad);
    (loss * inv, grad)
}

fn check_dataset<I: Observation>(dataset: &Dataset<I>) -> Result<()> {
    let cfg = dataset.model();
    cfg.validate()?;
    if dataset.users.is_empty() {
        return Err(invalid("dataset has no users"));
    }
    for user in &dataset.users {
        if user.items.is_empty() {
            return Err(Error::EmptyUser);
        }
        for item in &user.items {
            check_dim(cfg.d, item.dim())?;
        }
    }
    Ok(())
}

/// Default step size for full-batch descent: the mean likelihood is
/// `L^2 / 4`-smooth, so `4 / L^2` is the `1 / smoothness` step.
fn smooth_step(feature_bound: f64) -> f64 {
    4.0 / (feature_bound * feature_bound)
}

/// Non-private maximum likelihood by projected gradient descent on the mean
/// negative log-likelihood. Uses no randomness.
pub fn fit_mle<I: Observation + Send>(dataset: &Dataset<I>, config: &FitConfig) -> Result<FitResult> {
    check_dataset(dataset)?;
    let cfg = dataset.model();
    let eta = config.eta_or(smooth_step(cfg.feature_bound))?;
    projected_gd(cfg.d, cfg.bound, eta, config.steps()?, |theta| {
        mean_loss_grad(theta, &dataset.users)
    })
}

fn debias_factors(epsilon: f64, m: usize) -> Result<(f64, f64)> {
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if m == 0 {
        return Err(invalid("m must be at least 1"));
    }
    let keep = rr_keep_probability(epsilon, m);
    Ok((keep, 2.0 * keep - 1.0))
}

/// Loss of one flipped item, normalized by `2 s - 1` where `s` is the keep
/// probability so that its expectation over the flip is the clean loss.
fn debiased_item_loss(z: f64, y: bool, keep: f64, gap: f64) -> f64 {
    let (agree, disagree) = if y { (softplus(-z), softplus(z)) } else { (softplus(z), softplus(-z)) };
    (keep * agree - (1.0 - keep) * disagree) / gap
}

/// Pseudo-label whose residual `sigmoid(z) - target` is the derivative of
/// the de-biased item loss in `z`.
fn debiased_target(y: bool, keep: f64, gap: f64) -> f64 {
    if y {
        keep / gap
    } else {
        -(1.0 - keep) / gap
    }
}

fn debiased_loss_grad(theta: &[f64], users: &[UserRecord<PreferenceItem>], keep: f64, gap: f64) -> (f64, Vec<f64>) {
    let d = theta.len();
    let partial: Vec<(f64, Vec<f64>, usize)> = users
        .par_iter()
        .map(|u| {
            let mut g = vec![0.0; d];
            let mut loss = 0.0;
            for it in &u.items {
                let z = crate::linalg::dot(&it.x, theta);
                loss += debiased_item_loss(z, it.y, keep, gap);
                axpy(sigmoid(z) - debiased_target(it.y, keep, gap), &it.x, &mut g);
            }
            (loss, g, u.items.len())
        })
        .collect();
    let mut grad = vec![0.0; d];
    let mut loss = 0.0;
    let mut count = 0;
    for (l, g, c) in &partial {
        loss += l;
        axpy(1.0, g, &mut grad);
        count += c;
    }
    let inv = 1.0 / count.max(1) as f64;
    scale(inv, &mut grad);
    (loss * inv, grad)
}

/// De-biased loss of labels already passed through randomized response at
/// level `epsilon / m`, averaged over all items.
///
/// With `s = sigmoid(epsilon / m)` an item with flipped label `y~` and score
/// `z = <x, theta>` contributes
/// `(s * nll(z, y~) - (1 - s) * nll(z, 1 - y~)) / (2 s - 1)`,
/// whose expectation over the flip equals the clean negative log-likelihood.
pub fn debiased_loss(
    theta: &ParamVector,
    flipped: &Dataset<PreferenceItem>,
    epsilon: f64,
    m: usize,
) -> Result<f64> {
    check_dataset(flipped)?;
    check_dim(flipped.dim(), theta.dim())?;
    let (keep, gap) = debias_factors(epsilon, m)?;
    Ok(debiased_loss_grad(theta, &flipped.users, keep, gap).0)
}

/// Gradient of [`debiased_loss`].
pub fn debiased_grad(
    theta: &ParamVector,
    flipped: &Dataset<PreferenceItem>,
    epsilon: f64,
    m: usize,
) -> Result<Vec<f64>> {
    check_dataset(flipped)?;
    check_dim(flipped.dim(), theta.dim())?;
    let (keep, gap) = debias_factors(epsilon, m)?;
    Ok(debiased_loss_grad(theta, &flipped.users, keep, gap).1)
}

/// Passes every label through randomized response at level `epsilon / m`,
/// visiting users and then items in order with one stream seeded by `seed`.
pub fn randomize_labels(
    dataset: &Dataset<PreferenceItem>,
    epsilon: f64,
    seed: u64,
) -> Result<Dataset<PreferenceItem>> {
    if !(epsilon >= 0.0) {
        return Err(invalid(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let m = dataset.m().max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dataset.clone();
    for user in &mut out.users {
        for item in &mut user.items {
            item.y = rr_flip(item.y, epsilon, m, &mut rng);
        }
    }
    Ok(out)
}

/// The randomized-response estimator: flip every label once, then minimize
/// the de-biased loss by projected gradient descent. Everything after the
/// flip is post-processing, so the result is `epsilon`-user-level label DP.
pub fn fit_rr(dataset: &Dataset<PreferenceItem>, budget: &PrivacyBudget, config: &FitConfig) -> Result<FitResult> {
    check_dataset(dataset)?;
    if !(budget.epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {}", budget.epsilon)));
    }
    let cfg = dataset.model();
    let m = dataset.m();
    let (keep, gap) = debias_factors(budget.epsilon, m)?;
    let flipped = randomize_labels(dataset, budget.epsilon, config.seed)?;
    let eta = config.eta_or(smooth_step(cfg.feature_bound))?;
    let mut fit = projected_gd(cfg.d, cfg.bound, eta, config.steps()?, |theta| {
        debiased_loss_grad(theta, &flipped.users, keep, gap)
    })?;
    fit.privacy_spent = Some(PrivacyBudget { epsilon: budget.epsilon, delta: 0.0 });
    Ok(fit)
}

/// Step size for noisy projected SGD over the ball of radius `B`:
/// `2B / (G sqrt(T))` with `G^2 = C^2 + d std^2` the second moment of the
/// noisy gradient, capped at the smooth step.
fn noisy_step(bound: f64, feature_bound: f64, clip: f64, std: f64, d: usize, steps: usize) -> f64 {
    let g = (clip * clip + d as f64 * std * std).sqrt();
    (2.0 * bound / (g * (steps as f64).sqrt())).min(smooth_step(feature_bound))
}

fn poisson_batch<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<usize> {
    if batch == n {
        return (0..n).collect();
    }
    let q = batch as f64 / n as f64;
    (0..n).filter(|_| rng.random::<f64>() < q).collect()
}

/// Projected noisy SGD on units produced by `unit_grads`. Each step samples
/// units with rate `batch / count`, clips each unit gradient to `clip`,
/// divides the sum by the nominal `batch`, adds Gaussian noise of std
/// `noise_std` and projects. Returns the average of the iterates.
#[allow(clippy::too_many_arguments)]
fn clipped_noisy_sgd<F>(
    d: usize,
    bound: f64,
    count: usize,
    batch: usize,
    clip: f64,
    noise_std: f64,
    eta: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
    unit_grads: F,
) -> Result<FitResult>
where
    F: Fn(&[f64], &[usize]) -> Vec<(f64, Vec<f64>)>,
{
    let mut theta = ParamVector::zeros(d);
    let mut sum = vec![0.0; d];
    let stride = trajectory_stride(steps);
    let mut trajectory = Vec::new();
    for t in 0..steps {
        let sampled = poisson_batch(count, batch, rng);
        let grads = unit_grads(&theta, &sampled);
        let mut g = vec![0.0; d];
        let mut loss = 0.0;
        for (l, mut gi) in grads {
            clip_norm(&mut gi, clip);
            axpy(1.0, &gi, &mut g);
            loss += l;
        }
        scale(1.0 / batch as f64, &mut g);
        if t % stride == 0 {
            trajectory.push(if sampled.is_empty() { f64::NAN } else { loss / sampled.len() as f64 });
        }
        if noise_std > 0.0 {
            let noise = gaussian_vector(noise_std, d, rng)?;
            axpy(1.0, &noise, &mut g);
        }
        let mut raw = theta.to_vec();
        axpy(-eta, &g, &mut raw);
        theta = project(&raw, bound);
        axpy(1.0, &theta, &mut sum);
    }
    scale(1.0 / steps as f64, &mut sum);
    Ok(FitResult {
        theta_hat: project(&sum, bound),
        iterations_done: steps,
        halted_early: false,
        effective_noise_std: noise_std,
        loss_trajectory: trajectory,
        stages: Vec::new(),
        privacy_spent: None,
    })
}

/// User-wise DP-SGD. Each step Poisson-samples users, clips every per-user
/// averaged gradient to `C` (default `L`), averages over the nominal batch
/// and adds Gaussian noise. Replacing one user's labels moves the clipped
/// mean by at most `2C / batch`, which is the sensitivity the accountant's
/// multiplier is applied to.
///
/// Default step: `min(4 / L^2, 2B / (G sqrt(T)))`, `G^2 = C^2 + d std^2`.
pub fn fit_userwise_dpsgd<I: Observation + Send>(
    dataset: &Dataset<I>,
    budget: &PrivacyBudget,
    config: &FitConfig,
) -> Result<FitResult> {
    check_dataset(dataset)?;
    budget.validate()?;
    let cfg = dataset.model();
    let n = dataset.n();
    let steps = config.steps()?;
    let batch = config.batch(n)?;
    let clip = config.clip_or(cfg.feature_bound)?;
    let mut plan = privacy_account(budget, n, batch, steps)?.for_clipped_mean(clip, batch);
    if let Some(sigma) = config.noise_multiplier {
        plan.sigma = sigma;
        plan.gaussian_std = sigma * plan.sensitivity;
    }
    let eta = config.eta_or(noisy_step(cfg.bound, cfg.feature_bound, clip, plan.gaussian_std, cfg.d, steps))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let users = &dataset.users;
    let mut fit = clipped_noisy_sgd(cfg.d, cfg.bound, n, batch, clip, plan.gaussian_std, eta, steps, &mut rng, |theta, idx| {
        idx.par_iter().map(|&i| user_loss_grad(theta, &users[i].items)).collect()
    })?;
    fit.privacy_spent = Some(*budget);
    Ok(fit)
}

/// Item-level DP-SGD run at the item budget whose `m`-fold group
/// composition gives `budget` per user. Items are Poisson-sampled at rate
/// `batch / n` and clipped individually to `C` (default `L`).
pub fn fit_group_privacy<I: Observation + Send>(
    dataset: &Dataset<I>,
    budget: &PrivacyBudget,
    config: &FitConfig,
) -> Result<FitResult> {
    check_dataset(dataset)?;
    budget.validate()?;
    let cfg = dataset.model();
    let n = dataset.n();
    let m = dataset.m();
    let steps = config.steps()?;
    let batch = config.batch(n)?;
    let clip = config.clip_or(cfg.feature_bound)?;
    let items: Vec<&I> = dataset.items().collect();
    let item_batch = batch * m;
    let item_budget = group_privacy_budget(budget, m)?;
    let mut plan = privacy_account(&item_budget, items.len(), item_batch, steps)?.for_clipped_mean(clip, item_batch);
    if let Some(sigma) = config.noise_multiplier {
        plan.sigma = sigma;
        plan.gaussian_std = sigma * plan.sensitivity;
    }
    let eta = config.eta_or(noisy_step(cfg.bound, cfg.feature_bound, clip, plan.gaussian_std, cfg.d, steps))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut fit = clipped_noisy_sgd(
        cfg.d,
        cfg.bound,
        items.len(),
        item_batch,
        clip,
        plan.gaussian_std,
        eta,
        steps,
        &mut rng,
        |theta, idx| {
            idx.par_iter()
                .map(|&i| {
                    let mut g = vec![0.0; theta.len()];
                    let loss = items[i].accumulate(theta, 1.0, &mut g);
                    (loss, g)
                })
                .collect()
        },
    )?;
    fit.privacy_spent = Some(*budget);
    Ok(fit)
}

/// L2 distance between an estimate and the truth.
pub fn estimation_error(theta_hat: &ParamVector, theta_star: &ParamVector) -> Result<f64> {
    check_dim(theta_star.dim(), theta_hat.dim())?;
    Ok(norm(&theta_hat.iter().zip(theta_star.iter()).map(|(a, b)| a - b).collect::<Vec<_>>()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, GenConfig};
    use crate::model::btl_loss;
    use approx::assert_relative_eq;

    fn small(seed: u64) -> Dataset<PreferenceItem> {
        generate(&GenConfig::new(60, 4, 4, 1.0, 1.0, seed)).unwrap().0
    }

    #[test]
    fn config_validation() {
        let ds = small(1);
        assert!(fit_mle(&ds, &FitConfig::default().with_iterations(0)).is_err());
        assert!(fit_mle(&ds, &FitConfig::default().with_eta(-1.0)).is_err());
        let b = PrivacyBudget::new(1.0, 1e-5).unwrap();
        assert!(fit_userwise_dpsgd(&ds, &b, &FitConfig::default().with_batch(61)).is_err());
        assert!(fit_userwise_dpsgd(&ds, &b, &FitConfig::default().with_clip(0.0)).is_err());
        assert!(fit_rr(&ds, &PrivacyBudget { epsilon: 0.0, delta: 0.0 }, &FitConfig::default()).is_err());
    }

    #[test]
    fn mle_is_deterministic_and_feasible() {
        let ds = small(2);
        let a = fit_mle(&ds, &FitConfig::default()).unwrap();
        let b = fit_mle(&ds, &FitConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.theta_hat.norm() <= 1.0 + 1e-9);
        assert!(a.theta_hat.iter().sum::<f64>().abs() < 1e-9 * 4.0);
        assert!(a.loss_trajectory.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn mle_single_item_saturates_on_boundary() {
        let x = vec![1.0 - 0.25, -0.25, -0.25, -0.25];
        let scale_x = 1.0 / norm(&x);
        let x: Vec<f64> = x.iter().map(|v| v * scale_x).collect();
        let mut ds = small(3);
        ds.users = vec![UserRecord { items: vec![PreferenceItem { x: x.clone(), y: true }] }];
        let fit = fit_mle(&ds, &FitConfig::default().with_iterations(5000)).unwrap();
        assert_relative_eq!(fit.theta_hat.norm(), 1.0, epsilon = 1e-9);
        for (t, xi) in fit.theta_hat.iter().zip(&x) {
            assert_relative_eq!(*t, *xi, epsilon = 1e-6);
        }
    }

    #[test]
    fn debiased_loss_no_flip_limit_is_clean_loss() {
        let ds = small(4);
        let theta = ParamVector::new(vec![0.3, -0.2, 0.1, -0.2]);
        let clean: f64 = ds.items().map(|it| btl_loss(&theta, it).unwrap()).sum::<f64>() / ds.items().count() as f64;
        assert_relative_eq!(debiased_loss(&theta, &ds, 1e4, 1).unwrap(), clean, max_relative = 1e-12);
    }

    #[test]
    fn debiased_item_expectation_closed_form() {
        for &(z, e) in &[(0.7, 0.1), (-2.0, 1.0), (3.0, 0.5)] {
            let keep = sigmoid(e);
            let gap = 2.0 * keep - 1.0;
            for y in [true, false] {
                let expected = keep * debiased_item_loss(z, y, keep, gap) + (1.0 - keep) * debiased_item_loss(z, !y, keep, gap);
                let clean = if y { softplus(-z) } else { softplus(z) };
                assert_relative_eq!(expected, clean, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn rr_no_noise_limit_matches_mle() {
        let ds = small(5);
        let mut one = ds.clone();
        one.users = ds.users.iter().flat_map(|u| u.items.iter().map(|it| UserRecord { items: vec![it.clone()] })).collect();
        let cfg = FitConfig::default();
        let mle = fit_mle(&one, &cfg).unwrap();
        let rr = fit_rr(&one, &PrivacyBudget { epsilon: 1e6, delta: 0.0 }, &cfg).unwrap();
        assert!(mle.theta_hat.distance(&rr.theta_hat) < 1e-6);
    }

    #[test]
    fn rr_is_bit_reproducible() {
        let ds = small(6);
        let b = PrivacyBudget::new(1.0, 1e-5).unwrap();
        let cfg = FitConfig::default().with_seed(11);
        assert_eq!(fit_rr(&ds, &b, &cfg).unwrap(), fit_rr(&ds, &b, &cfg).unwrap());
    }

    #[test]
    fn dpsgd_noise_free_full_batch_matches_mle_trajectory() {
        let ds = small(7);
        let b = PrivacyBudget::new(1.0, 1e-5).unwrap();
        let cfg = FitConfig { iterations: 40, eta: Some(2.0), clip: Some(10.0), noise_multiplier: Some(0.0), ..FitConfig::default() };
        let mle = fit_mle(&ds, &cfg).unwrap();
        for fit in [fit_userwise_dpsgd(&ds, &b, &cfg).unwrap(), fit_group_privacy(&ds, &b, &cfg).unwrap()] {
            assert_eq!(fit.effective_noise_std, 0.0);
            assert_eq!(fit.loss_trajectory.len(), mle.loss_trajectory.len());
            for (a, b) in fit.loss_trajectory.iter().zip(&mle.loss_trajectory) {
                assert_relative_eq!(*a, *b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn dpsgd_outputs_stay_in_parameter_set() {
        let ds = small(8);
        let b = PrivacyBudget::new(1.0, 1e-5).unwrap();
        let cfg = FitConfig::default().with_iterations(50).with_batch(20);
        for fit in [fit_userwise_dpsgd(&ds, &b, &cfg).unwrap(), fit_group_privacy(&ds, &b, &cfg).unwrap()] {
            assert!(fit.theta_hat.norm() <= 1.0 + 1e-9);
            assert!(fit.effective_noise_std > 0.0);
            assert_eq!(fit.privacy_spent, Some(b));
        }
    }

    #[test]
    fn group_noise_grows_with_m_at_fixed_item_count() {
        let b = PrivacyBudget::new(3.0, 1e-5).unwrap();
        let cfg = FitConfig::default().with_iterations(20);
        let one = generate(&GenConfig::new(2500, 1, 3, 1.0, 1.0, 1)).unwrap().0;
        let fifty = generate(&GenConfig::new(50, 50, 3, 1.0, 1.0, 1)).unwrap().0;
        let a = fit_group_privacy(&one, &b, &cfg).unwrap().effective_noise_std;
        let c = fit_group_privacy(&fifty, &b, &cfg).unwrap().effective_noise_std;
        assert!(c > 10.0 * a, "{c} vs {a}");
    }
}
