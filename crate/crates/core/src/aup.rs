//! AUP-RLHF: user-level private estimation that scales its noise to how
//! concentrated the users' gradients are, instead of to a clipping radius.
//!
//! One stage ([`adap_user_priv_sgd`]) runs noisy projected SGD in which each
//! step first asks an AboveThreshold mechanism whether the sampled user
//! gradients are concentrated within `tau`. If they are, users far from the
//! bulk are dropped with a smooth retention rule and the mean of the rest is
//! released with Gaussian noise of std `2 tau sigma / batch`. The first
//! failed check stops the stage. [`aup_rlhf_fit`] chains `k` such stages on
//! disjoint user sets of geometrically growing size, each warm-started from
//! the previous one.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, UserRecord};
use crate::error::{check_dim, invalid, Error, Result};
use crate::estimators::{trajectory_stride, FitResult};
use crate::linalg::{axpy, dist_sq, norm, scale};
use crate::mech::{gaussian_vector, privacy_account, AboveThreshold, Answer, NoisePlan, PrivacyBudget};
use crate::model::{project, user_loss_grad, ModelConfig, Observation, ParamVector};

/// Hyperparameters of one AdapUserPriv-SGD run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AupStageConfig {
    #[serde(rename = "T")]
    pub iterations: usize,
    pub eta: f64,
    /// Concentration radius.
    pub tau: f64,
    /// Expected users per step.
    pub batch_users: usize,
    pub epsilon: f64,
    pub delta: f64,
    /// Replaces the calibrated noise multiplier; voids the guarantee.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_multiplier: Option<f64>,
}

impl AupStageConfig {
    pub fn budget(&self) -> PrivacyBudget {
        PrivacyBudget { epsilon: self.epsilon, delta: self.delta }
    }

    fn validate(&self, users: usize) -> Result<()> {
        self.budget().validate()?;
        if self.iterations == 0 {
            return Err(invalid("stage T must be at least 1"));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(invalid(format!("stage step size must be positive, got {}", self.eta)));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if self.batch_users == 0 || self.batch_users > users {
            return Err(invalid(format!(
                "stage batch must satisfy 1 <= batch <= {users}, got {}",
                self.batch_users
            )));
        }
        Ok(())
    }
}

/// The full multi-stage schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AupConfig {
    pub k: usize,
    pub stages: Vec<AupStageConfig>,
    /// Cap on the total number of steps across stages.
    pub t_cap: usize,
    pub seed: u64,
}

/// Overrides applied on top of the theoretical schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AupOptions {
    /// Stage count; defaults to `ceil(ln ln (m n))`.
    pub k: Option<usize>,
    pub t_cap: usize,
    /// Fixed concentration radius for every stage.
    pub tau: Option<f64>,
    /// Sets `tau = tau_scale * L / sqrt(m)`; ignored when `tau` is given.
    pub tau_scale: Option<f64>,
    /// Fixed step size for every stage.
    pub eta: Option<f64>,
    pub seed: u64,
}

impl Default for AupOptions {
    fn default() -> Self {
        Self { k: None, t_cap: DEFAULT_T_CAP, tau: None, tau_scale: None, eta: None, seed: 0 }
    }
}

pub const DEFAULT_T_CAP: usize = 2000;

/// Per-stage summary reported alongside the estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub users: usize,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub iterations_done: usize,
    pub tau: f64,
    pub eta: f64,
    pub batch_users: usize,
    pub halted_early: bool,
    pub effective_noise_std: f64,
    /// Std given by the literal update-rule formula, for comparison.
    pub literal_noise_std: f64,
    /// Mean fraction of sampled users kept by the outlier filter.
    pub retained_fraction: f64,
}

/// `ceil(ln ln (m n))`, at least 1.
pub fn stage_count(total_items: usize) -> usize {
    let v = (total_items as f64).ln().ln().ceil();
    if v.is_finite() && v >= 1.0 {
        v as usize
    } else {
        1
    }
}

/// Stage sizes: `floor(n / 2^(k+1-i))` for `i < k`, the rest to stage `k`.
pub fn partition_sizes(n: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(invalid("stage count k must be at least 1"));
    }
    if k >= usize::BITS as usize || n < (1usize << k) {
        return Err(Error::TooFewUsers { n, k });
    }
    let mut sizes: Vec<usize> = (1..k).map(|i| n >> (k + 1 - i)).collect();
    let used: usize = sizes.iter().sum();
    sizes.push(n - used);
    Ok(sizes)
}

/// Shuffles user indices and slices them into the stage sizes.
pub fn partition_users<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    let sizes = partition_sizes(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for s in sizes {
        out.push(order[start..start + s].to_vec());
        start += s;
    }
    Ok(out)
}

/// Number of ordered pairs within `tau` (self-pairs included) and, for each
/// gradient, how many gradients lie within `2 tau` of it.
///
/// When the two largest norms sum to at most the radius every pair is within
/// it by the triangle inequality, and the quadratic scan is skipped.
fn pair_counts(grads: &[Vec<f64>], tau: f64) -> (usize, Vec<usize>) {
    let b = grads.len();
    let (mut top, mut second) = (0.0f64, 0.0f64);
    for g in grads {
        let n = norm(g);
        if n > top {
            second = top;
            top = n;
        } else if n > second {
            second = n;
        }
    }
    let diameter = top + second;
    if diameter <= tau {
        return (b * b, vec![b; b]);
    }
    let (t1, t2) = (tau * tau, 4.0 * tau * tau);
    let mut within = b;
    let mut counts = vec![1usize; b];
    for i in 0..b {
        for j in i + 1..b {
            let dsq = dist_sq(&grads[i], &grads[j]);
            if dsq <= t1 {
                within += 2;
            }
            if dsq <= t2 {
                counts[i] += 1;
                counts[j] += 1;
            }
        }
    }
    (within, counts)
}

/// `(1 / b) * #{(i, i') : ||g_i - g_i'|| <= tau}` over ordered pairs,
/// including `i = i'`. Lies in `[1, b]`.
pub fn concentration_score(grads: &[Vec<f64>], tau: f64) -> Result<f64> {
    if grads.is_empty() {
        return Err(invalid("concentration score of an empty batch"));
    }
    if !(tau > 0.0) {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    Ok(pair_counts(grads, tau).0 as f64 / grads.len() as f64)
}

/// For each gradient, the number of gradients (itself included) within
/// `radius` of it.
pub fn neighbor_counts(grads: &[Vec<f64>], radius: f64) -> Vec<usize> {
    pair_counts(grads, radius / 2.0).1
}

/// Retention rule for a user with `f` neighbours among `b`:
/// 0 below `b / 2`, 1 from `2b / 3`, linear in between.
pub fn retention_probability(f: usize, b: usize) -> f64 {
    let (f, b) = (f as f64, b as f64);
    if f < b / 2.0 {
        0.0
    } else if f >= 2.0 * b / 3.0 {
        1.0
    } else {
        (f - b / 2.0) / (b / 6.0)
    }
}

/// Users kept by the outlier filter, as positions into the batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetainedSet {
    pub indices: Vec<usize>,
    /// Neighbour count `f` within `2 tau` for every user of the batch.
    pub scores: Vec<usize>,
}

/// Keeps each user independently with [`retention_probability`] of its
/// `2 tau` neighbour count. One coin is drawn per user.
pub fn outlier_filter<R: Rng + ?Sized>(grads: &[Vec<f64>], tau: f64, rng: &mut R) -> RetainedSet {
    let scores = neighbor_counts(grads, 2.0 * tau);
    retain(scores, rng)
}

fn retain<R: Rng + ?Sized>(scores: Vec<usize>, rng: &mut R) -> RetainedSet {
    let b = scores.len();
    let indices = scores
        .iter()
        .enumerate()
        .filter(|&(_, &f)| rng.random::<f64>() < retention_probability(f, b))
        .map(|(i, _)| i)
        .collect();
    RetainedSet { indices, scores }
}

/// Mean of the retained gradients (zero if none) plus Gaussian noise with
/// the plan's per-coordinate std.
pub fn private_mean_step<R: Rng + ?Sized>(
    grads: &[Vec<f64>],
    retained: &RetainedSet,
    plan: &NoisePlan,
    d: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut mean = vec![0.0; d];
    for &i in &retained.indices {
        let g = grads.get(i).ok_or_else(|| invalid(format!("retained index {i} outside batch")))?;
        check_dim(d, g.len())?;
        axpy(1.0, g, &mut mean);
    }
    if !retained.indices.is_empty() {
        scale(1.0 / retained.indices.len() as f64, &mut mean);
    }
    if plan.gaussian_std > 0.0 {
        axpy(1.0, &gaussian_vector(plan.gaussian_std, d, rng)?, &mut mean);
    }
    Ok(mean)
}

/// Noise plan of one stage: the accountant gets half the stage budget, the
/// other half goes to AboveThreshold.
pub fn stage_noise_plan(stage: &AupStageConfig, users: usize) -> Result<NoisePlan> {
    let budget = stage.budget();
    let mut plan = privacy_account(&budget.halved(), users, stage.batch_users, stage.iterations)?
        .for_concentrated_mean(stage.tau, stage.batch_users, &budget);
    if let Some(sigma) = stage.noise_multiplier {
        plan.sigma = sigma;
        plan.gaussian_std = sigma * plan.sensitivity;
    }
    Ok(plan)
}

/// One AdapUserPriv-SGD run from `theta0` on `users`.
///
/// Returns the average of the completed iterates, or `theta0` if the first
/// concentration check fails. The result carries a single [`StageRecord`].
pub fn adap_user_priv_sgd<I: Observation + Send, R: Rng + ?Sized>(
    theta0: &ParamVector,
    users: &[&UserRecord<I>],
    stage: &AupStageConfig,
    bound: f64,
    rng: &mut R,
) -> Result<FitResult> {
    let n = users.len();
    if n == 0 {
        return Err(invalid("stage has no users"));
    }
    stage.validate(n)?;
    let d = theta0.dim();
    for u in users {
        if u.items.is_empty() {
            return Err(Error::EmptyUser);
        }
    }
    let plan = stage_noise_plan(stage, n)?;
    let nominal = stage.batch_users as f64;
    let mut gate = AboveThreshold::init(4.0 * nominal / 5.0, stage.epsilon / 2.0, rng)?;
    let q = nominal / n as f64;
    let stride = trajectory_stride(stage.iterations);

    let mut theta = theta0.clone();
    let mut sum = vec![0.0; d];
    let mut done = 0;
    let mut trajectory = Vec::new();
    let mut retained_total = 0.0;
    for t in 0..stage.iterations {
        let batch: Vec<usize> = if stage.batch_users == n {
            (0..n).collect()
        } else {
            (0..n).filter(|_| rng.random::<f64>() < q).collect()
        };
        let computed: Vec<(f64, Vec<f64>)> = batch
            .par_iter()
            .map(|&i| {
                let items = &users[i].items;
                for it in items {
                    if it.dim() != d {
                        return Err(Error::DimensionMismatch { expected: d, got: it.dim() });
                    }
                }
                Ok(user_loss_grad(&theta, items))
            })
            .collect::<Result<_>>()?;
        let (losses, grads): (Vec<f64>, Vec<Vec<f64>>) = computed.into_iter().unzip();
        let (within, counts) = pair_counts(&grads, stage.tau);
        let score = if grads.is_empty() { 0.0 } else { within as f64 / grads.len() as f64 };
        if gate.query(score, rng)? == Answer::Below {
            break;
        }
        let retained = retain(counts, rng);
        if !grads.is_empty() {
            retained_total += retained.indices.len() as f64 / grads.len() as f64;
        }
        let step = private_mean_step(&grads, &retained, &plan, d, rng)?;
        if t % stride == 0 {
            let mean_loss = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
            trajectory.push(mean_loss);
        }
        let mut raw = theta.to_vec();
        axpy(-stage.eta, &step, &mut raw);
        theta = project(&raw, bound);
        axpy(1.0, &theta, &mut sum);
        done = t + 1;
    }
    let theta_hat = if done == 0 {
        theta0.clone()
    } else {
        scale(1.0 / done as f64, &mut sum);
        project(&sum, bound)
    };
    let noise = if done == 0 { 0.0 } else { plan.gaussian_std };
    let record = StageRecord {
        users: n,
        iterations: stage.iterations,
        iterations_done: done,
        tau: stage.tau,
        eta: stage.eta,
        batch_users: stage.batch_users,
        halted_early: gate.is_halted(),
        effective_noise_std: noise,
        literal_noise_std: plan.literal_std.unwrap_or(f64::NAN),
        retained_fraction: if done == 0 { 0.0 } else { retained_total / done as f64 },
    };
    Ok(FitResult {
        theta_hat,
        iterations_done: done,
        halted_early: gate.is_halted(),
        effective_noise_std: noise,
        loss_trajectory: trajectory,
        stages: vec![record],
        privacy_spent: Some(stage.budget()),
    })
}

/// Step size with unit constants:
/// `(B / 4L) min{ sqrt(m) n eps / (T sqrt(d) ln^2(m n d / delta)), T^(-3/4), sqrt(n m) / T }`.
pub fn theory_eta(n: usize, m: usize, d: usize, bound: f64, feature_bound: f64, budget: &PrivacyBudget, t: usize) -> f64 {
    let (n, m, d, t) = (n as f64, m as f64, d as f64, t as f64);
    let log = (m * n * d / budget.delta).ln();
    let a = m.sqrt() * n * budget.epsilon / (t * d.sqrt() * log * log);
    let b = t.powf(-0.75);
    let c = (n * m).sqrt() / t;
    bound / (4.0 * feature_bound) * a.min(b).min(c)
}

/// Concentration radius with unit constants: `4L ln(n d m e^eps T / delta) / sqrt(m)`.
pub fn theory_tau(n: usize, m: usize, d: usize, feature_bound: f64, budget: &PrivacyBudget, t: usize) -> f64 {
    let log = (n as f64 * d as f64 * m as f64 * t as f64 / budget.delta).ln() + budget.epsilon;
    4.0 * feature_bound * log / (m as f64).sqrt()
}

impl AupConfig {
    /// Schedule for `n` users with `m` items each: stage sizes from
    /// [`partition_sizes`], full-batch steps, `T_i = min(m^2 n_i^2 + m n_i sqrt(d), t_cap / k)`,
    /// and the step size and radius of [`theory_eta`] and [`theory_tau`],
    /// each stage spending the whole budget on its own users.
    pub fn theory_defaults(
        n: usize,
        m: usize,
        model: &ModelConfig,
        budget: &PrivacyBudget,
        options: &AupOptions,
    ) -> Result<Self> {
        model.validate()?;
        budget.validate()?;
        if m == 0 {
            return Err(invalid("m must be at least 1"));
        }
        let k = options.k.unwrap_or_else(|| stage_count(n * m));
        let sizes = partition_sizes(n, k)?;
        if options.t_cap < k {
            return Err(invalid(format!("t_cap {} leaves no step for {k} stages", options.t_cap)));
        }
        let per_stage = options.t_cap / k;
        let stages = sizes
            .iter()
            .map(|&ni| {
                let (mf, nf) = (m as f64, ni as f64);
                let theory_t = mf * mf * nf * nf + mf * nf * (model.d as f64).sqrt();
                let t = (theory_t.ceil() as usize).clamp(1, per_stage);
                let tau = match (options.tau, options.tau_scale) {
                    (Some(tau), _) => tau,
                    (None, Some(s)) => s * model.feature_bound / mf.sqrt(),
                    (None, None) => theory_tau(ni, m, model.d, model.feature_bound, budget, t),
                };
                let eta = options
                    .eta
                    .unwrap_or_else(|| theory_eta(ni, m, model.d, model.bound, model.feature_bound, budget, t));
                AupStageConfig {
                    iterations: t,
                    eta,
                    tau,
                    batch_users: ni,
                    epsilon: budget.epsilon,
                    delta: budget.delta,
                    noise_multiplier: None,
                }
            })
            .collect();
        Ok(Self { k, stages, t_cap: options.t_cap, seed: options.seed })
    }
}

/// AUP-RLHF. Users are shuffled into `k` disjoint stage sets; stage `i`
/// runs [`adap_user_priv_sgd`] on its set from the previous stage's output.
/// A halted stage hands over the average of its completed iterates and the
/// next stage continues. Because the sets are disjoint, the spend is the
/// largest stage budget.
pub fn aup_rlhf_fit<I: Observation + Send>(
    dataset: &Dataset<I>,
    budget: &PrivacyBudget,
    config: &AupConfig,
) -> Result<FitResult> {
    budget.validate()?;
    let model = dataset.model();
    model.validate()?;
    if config.stages.len() != config.k {
        return Err(invalid(format!("{} stage configs for k = {}", config.stages.len(), config.k)));
    }
    let total: usize = config.stages.iter().map(|s| s.iterations).sum();
    if total > config.t_cap {
        return Err(invalid(format!("stages request {total} steps, above t_cap {}", config.t_cap)));
    }
    for s in &config.stages {
        if s.epsilon > budget.epsilon || s.delta > budget.delta {
            return Err(invalid("a stage budget exceeds the overall budget"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let parts = partition_users(dataset.n(), config.k, &mut rng)?;

    let mut theta = ParamVector::zeros(model.d);
    let mut out = FitResult {
        theta_hat: theta.clone(),
        iterations_done: 0,
        halted_early: false,
        effective_noise_std: 0.0,
        loss_trajectory: Vec::new(),
        stages: Vec::with_capacity(config.k),
        privacy_spent: None,
    };
    let mut noise_steps = 0.0;
    let mut spent = PrivacyBudget { epsilon: 0.0, delta: 0.0 };
    for (part, stage) in parts.iter().zip(&config.stages) {
        let users: Vec<&UserRecord<I>> = part.iter().map(|&i| &dataset.users[i]).collect();
        let fit = adap_user_priv_sgd(&theta, &users, stage, model.bound, &mut rng)?;
        theta = fit.theta_hat;
        out.iterations_done += fit.iterations_done;
        out.halted_early |= fit.halted_early;
        noise_steps += fit.effective_noise_std * fit.iterations_done as f64;
        out.loss_trajectory.extend(fit.loss_trajectory);
        out.stages.extend(fit.stages);
        spent.epsilon = spent.epsilon.max(stage.epsilon);
        spent.delta = spent.delta.max(stage.delta);
    }
    out.theta_hat = theta;
    if out.iterations_done > 0 {
        out.effective_noise_std = noise_steps / out.iterations_done as f64;
    }
    out.privacy_spent = Some(spent);
    Ok(out)
}
