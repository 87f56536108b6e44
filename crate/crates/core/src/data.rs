//! Synthetic preference data with a known ground-truth parameter.
//!
//! Pairwise features are drawn uniformly from the sphere of radius `L`, so the
//! population covariance is `(L^2 / d) I`. K-wise action features are drawn
//! from the sphere of radius `L / 2`, which keeps every pairwise difference
//! within `L`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{dot, norm, symmetric_eigenvalues};
use crate::model::{project, sigmoid, KWiseItem, ModelConfig, Observation, ParamVector, PreferenceItem};

pub const DATASET_VERSION: &str = "upldp-1";

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    #[serde(rename = "B")]
    pub bound: f64,
    #[serde(rename = "L")]
    pub feature_bound: f64,
    #[serde(rename = "K", default = "two")]
    pub arity: usize,
    pub seed: u64,
}

fn two() -> usize {
    2
}

impl GenConfig {
    pub fn new(n: usize, m: usize, d: usize, bound: f64, feature_bound: f64, seed: u64) -> Self {
        Self { n, m, d, bound, feature_bound, arity: 2, seed }
    }

    pub fn with_arity(mut self, arity: usize) -> Self {
        self.arity = arity;
        self
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            d: self.d,
            bound: self.bound,
            feature_bound: self.feature_bound,
            arity: self.arity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("number of users n must be positive"));
        }
        if self.m == 0 {
            return Err(invalid("items per user m must be positive"));
        }
        self.model().validate()
    }
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    pub theta_star: ParamVector,
    pub config: ModelConfig,
}

/// One user's contribution: `m` labeled items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "I: Serialize", deserialize = "I: DeserializeOwned"))]
pub struct UserRecord<I> {
    pub items: Vec<I>,
}

/// `n` user records sharing the same `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "I: Serialize", deserialize = "I: DeserializeOwned"))]
pub struct Dataset<I> {
    pub config: GenConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<ParamVector>,
    pub users: Vec<UserRecord<I>>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "I: DeserializeOwned"))]
struct DatasetFile<I> {
    version: String,
    #[serde(flatten)]
    body: Dataset<I>,
}

#[derive(Serialize)]
#[serde(bound(serialize = "I: Serialize"))]
struct DatasetFileRef<'a, I> {
    version: &'a str,
    #[serde(flatten)]
    body: &'a Dataset<I>,
}

/// A dataset file whose item kind is only known after reading it.
#[derive(Debug, Clone)]
pub enum AnyDataset {
    Pairwise(Dataset<PreferenceItem>),
    KWise(Dataset<KWiseItem>),
}

impl<I> Dataset<I> {
    pub fn n(&self) -> usize {
        self.users.len()
    }

    /// Items per user (taken from the first record).
    pub fn m(&self) -> usize {
        self.users.first().map_or(0, |u| u.items.len())
    }

    pub fn dim(&self) -> usize {
        self.config.d
    }

    pub fn model(&self) -> ModelConfig {
        self.config.model()
    }

    pub fn items(&self) -> impl Iterator<Item = &I> {
        self.users.iter().flat_map(|u| u.items.iter())
    }
}

impl<I: Observation> Dataset<I> {
    /// Checks record sizes and every item against the model shape.
    pub fn validate(&self) -> Result<()> {
        let cfg = self.model();
        cfg.validate()?;
        if self.users.is_empty() {
            return Err(invalid("dataset has no users"));
        }
        let m = self.m();
        for (i, user) in self.users.iter().enumerate() {
            if user.items.is_empty() {
                return Err(Error::EmptyUser);
            }
            if user.items.len() != m {
                return Err(invalid(format!(
                    "user {i} has {} items but user 0 has {m}",
                    user.items.len()
                )));
            }
            for item in &user.items {
                item.validate(&cfg)?;
            }
        }
        if let Some(t) = &self.theta_star {
            check_dim(cfg.d, t.dim())?;
        }
        Ok(())
    }
}

impl<I: Serialize> Dataset<I> {
    pub fn to_json(&self) -> Result<String> {
        let file = DatasetFileRef { version: DATASET_VERSION, body: self };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

impl<I: DeserializeOwned + Observation> Dataset<I> {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile<I> = serde_json::from_str(text)?;
        if file.version != DATASET_VERSION {
            return Err(invalid(format!(
                "unsupported dataset version {:?} (expected {DATASET_VERSION:?})",
                file.version
            )));
        }
        file.body.validate()?;
        Ok(file.body)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

impl AnyDataset {
    /// Reads a dataset file, deciding the item kind from the first item.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let kwise = value
            .pointer("/users/0/items/0")
            .and_then(|item| item.get("features"))
            .is_some();
        if kwise {
            Ok(Self::KWise(Dataset::from_json(text)?))
        } else {
            Ok(Self::Pairwise(Dataset::from_json(text)?))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn gaussian_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `theta* = B u` with `u` uniform on the unit sphere of the mean-zero
/// subspace.
pub fn sample_theta_star<R: Rng + ?Sized>(config: &GenConfig, rng: &mut R) -> Result<TrueModel> {
    let model = config.model();
    model.validate()?;
    let d = config.d;
    let theta = loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mean = g.iter().sum::<f64>() / d as f64;
        let centred: Vec<f64> = g.iter().map(|v| v - mean).collect();
        let n = norm(&centred);
        if n > 1e-12 {
            break centred.into_iter().map(|v| v * config.bound / n).collect::<Vec<_>>();
        }
    };
    Ok(TrueModel { theta_star: ParamVector::new(theta), config: model })
}

/// A differential feature uniform on the sphere of radius `L`.
pub fn sample_feature<R: Rng + ?Sized>(config: &GenConfig, rng: &mut R) -> Vec<f64> {
    sample_on_sphere(config.d, config.feature_bound, rng)
}

fn sample_on_sphere<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    gaussian_direction(d, rng).into_iter().map(|v| v * radius).collect()
}

/// Bernoulli label with success probability `sigmoid(<x, theta*>)`.
pub fn sample_label<R: Rng + ?Sized>(theta_star: &ParamVector, x: &[f64], rng: &mut R) -> Result<bool> {
    check_dim(theta_star.dim(), x.len())?;
    let p = sigmoid(dot(x, theta_star));
    Ok(rng.random::<f64>() < p)
}

/// Full Plackett-Luce ranking of the given actions: repeatedly choose the
/// next action among those remaining with probability proportional to
/// `exp(reward)`.
pub fn sample_ranking<R: Rng + ?Sized>(
    theta_star: &ParamVector,
    features: &[Vec<f64>],
    rng: &mut R,
) -> Result<Vec<usize>> {
    for phi in features {
        check_dim(theta_star.dim(), phi.len())?;
    }
    let rewards: Vec<f64> = features.iter().map(|phi| dot(phi, theta_star)).collect();
    let mut remaining: Vec<usize> = (0..features.len()).collect();
    let mut perm = Vec::with_capacity(features.len());
    while remaining.len() > 1 {
        let top = remaining.iter().map(|&i| rewards[i]).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = remaining.iter().map(|&i| (rewards[i] - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (pos, w) in weights.iter().enumerate() {
            if u < *w {
                pick = pos;
                break;
            }
            u -= w;
        }
        perm.push(remaining.remove(pick));
    }
    perm.extend(remaining);
    Ok(perm)
}

/// Generates `n` users with `m` pairwise items each. Deterministic in the
/// seed: the stream draws `theta*` first, then each item's feature followed
/// by its label, user by user.
pub fn generate(config: &GenConfig) -> Result<(Dataset<PreferenceItem>, TrueModel)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let truth = sample_theta_star(config, &mut rng)?;
    let users = (0..config.n)
        .map(|_| {
            let items = (0..config.m)
                .map(|_| {
                    let x = sample_feature(config, &mut rng);
                    let y = sample_label(&truth.theta_star, &x, &mut rng)?;
                    Ok(PreferenceItem { x, y })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(UserRecord { items })
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset {
        config: *config,
        theta_star: Some(truth.theta_star.clone()),
        users,
    };
    Ok((dataset, truth))
}

/// Generates `n` users with `m` K-wise ranked items each.
pub fn generate_kwise(config: &GenConfig) -> Result<(Dataset<KWiseItem>, TrueModel)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let truth = sample_theta_star(config, &mut rng)?;
    let radius = config.feature_bound / 2.0;
    let users = (0..config.n)
        .map(|_| {
            let items = (0..config.m)
                .map(|_| {
                    let features: Vec<Vec<f64>> = (0..config.arity)
                        .map(|_| sample_on_sphere(config.d, radius, &mut rng))
                        .collect();
                    let perm = sample_ranking(&truth.theta_star, &features, &mut rng)?;
                    Ok(KWiseItem { features, perm })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(UserRecord { items })
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset {
        config: *config,
        theta_star: Some(truth.theta_star.clone()),
        users,
    };
    Ok((dataset, truth))
}

/// Smallest eigenvalue of the sample covariance `(1/N) sum x x^T` of the
/// differential features.
pub fn coverage_check(dataset: &Dataset<PreferenceItem>) -> Result<f64> {
    let d = dataset.dim();
    let total = dataset.items().count();
    if total < d {
        return Err(Error::InsufficientSamples { needed: d, have: total });
    }
    let mut cov = vec![0.0; d * d];
    for item in dataset.items() {
        check_dim(d, item.x.len())?;
        for r in 0..d {
            for c in r..d {
                cov[r * d + c] += item.x[r] * item.x[c];
            }
        }
    }
    for r in 0..d {
        for c in r..d {
            let v = cov[r * d + c] / total as f64;
            cov[r * d + c] = v;
            cov[c * d + r] = v;
        }
    }
    Ok(symmetric_eigenvalues(&cov, d, 1e-10)[0])
}

/// Recentres and rescales a raw vector into the feasible set (convenience
/// for building a ground truth by hand).
pub fn true_model_from(raw: &[f64], config: ModelConfig) -> TrueModel {
    TrueModel { theta_star: project(raw, config.bound), config }
}
