//! Bradley-Terry-Luce and Plackett-Luce models with a linear reward.
//!
//! The reward of an action is `<phi, theta>`. In pairwise mode each item
//! carries the differential feature `x = phi(s, a1) - phi(s, a0)` and a
//! label `y`, with `P[y = 1] = sigmoid(<x, theta>)`. In K-wise mode an item
//! carries all K feature vectors and a full ranking.
//!
//! Losses are negative log-likelihoods so that descent minimizes them.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::data::UserRecord;
use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{axpy, dot, norm};

/// Shape of the reward model: dimension `d`, parameter bound `B`,
/// feature bound `L` and comparison arity `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    #[serde(rename = "B")]
    pub bound: f64,
    #[serde(rename = "L")]
    pub feature_bound: f64,
    #[serde(rename = "K", default = "default_arity")]
    pub arity: usize,
}

fn default_arity() -> usize {
    2
}

impl ModelConfig {
    pub fn new(d: usize, bound: f64, feature_bound: f64, arity: usize) -> Result<Self> {
        let cfg = Self { d, bound, feature_bound, arity };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(invalid(format!("dimension must be at least 2, got {}", self.d)));
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(invalid(format!("parameter bound B must be positive, got {}", self.bound)));
        }
        if !(self.feature_bound > 0.0 && self.feature_bound.is_finite()) {
            return Err(invalid(format!(
                "feature bound L must be positive, got {}",
                self.feature_bound
            )));
        }
        if self.arity < 2 {
            return Err(invalid(format!("arity K must be at least 2, got {}", self.arity)));
        }
        Ok(())
    }
}

/// A reward parameter. Values produced by [`project`] lie in the feasible
/// set `{theta : <1, theta> = 0, |theta| <= B}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Euclidean distance to another parameter of the same dimension.
    pub fn distance(&self, other: &ParamVector) -> f64 {
        crate::linalg::dist_sq(&self.0, &other.0).sqrt()
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// One pairwise comparison: differential feature and binary label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceItem {
    pub x: Vec<f64>,
    #[serde(with = "bit")]
    pub y: bool,
}

/// One K-wise comparison: the K action features and the observed ranking.
/// `perm[j]` is the index of the action ranked in position `j` (0 = best).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KWiseItem {
    pub features: Vec<Vec<f64>>,
    pub perm: Vec<usize>,
}

mod bit {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(y: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*y))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

/// A labeled observation whose negative log-likelihood can be evaluated and
/// differentiated at a parameter. Implemented by both item kinds so the
/// optimizers are shared between pairwise and K-wise data.
pub trait Observation: Sync {
    /// Feature dimension.
    fn dim(&self) -> usize;

    /// Checks the item against the model shape (dimensions, norm bounds).
    fn validate(&self, cfg: &ModelConfig) -> Result<()>;

    /// Negative log-likelihood at `theta`. Dimensions are assumed checked.
    fn nll(&self, theta: &[f64]) -> f64;

    /// Adds `weight * grad nll(theta)` into `out` and returns `nll(theta)`.
    fn accumulate(&self, theta: &[f64], weight: f64, out: &mut [f64]) -> f64;
}

const NORM_SLACK: f64 = 1e-9;

impl Observation for PreferenceItem {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        check_dim(cfg.d, self.x.len())?;
        let n = norm(&self.x);
        if !n.is_finite() || n > cfg.feature_bound * (1.0 + NORM_SLACK) + NORM_SLACK {
            return Err(invalid(format!(
                "feature norm {n} exceeds bound L = {}",
                cfg.feature_bound
            )));
        }
        Ok(())
    }

    fn nll(&self, theta: &[f64]) -> f64 {
        pair_nll(dot(&self.x, theta), self.y)
    }

    fn accumulate(&self, theta: &[f64], weight: f64, out: &mut [f64]) -> f64 {
        let z = dot(&self.x, theta);
        let residual = sigmoid(z) - f64::from(u8::from(self.y));
        axpy(weight * residual, &self.x, out);
        pair_nll(z, self.y)
    }
}

impl Observation for KWiseItem {
    fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let k = self.features.len();
        if k < 2 {
            return Err(invalid(format!("K-wise item needs at least 2 actions, got {k}")));
        }
        if k != cfg.arity {
            return Err(invalid(format!("item has {k} actions but K = {}", cfg.arity)));
        }
        validate_permutation(&self.perm, k)?;
        for phi in &self.features {
            check_dim(cfg.d, phi.len())?;
            let n = norm(phi);
            if !n.is_finite() || n > cfg.feature_bound * (1.0 + NORM_SLACK) + NORM_SLACK {
                return Err(invalid(format!(
                    "action feature norm {n} exceeds bound L = {}",
                    cfg.feature_bound
                )));
            }
        }
        Ok(())
    }

    fn nll(&self, theta: &[f64]) -> f64 {
        let rewards: Vec<f64> = self.features.iter().map(|phi| dot(phi, theta)).collect();
        ranking_nll(&rewards, &self.perm)
    }

    fn accumulate(&self, theta: &[f64], weight: f64, out: &mut [f64]) -> f64 {
        let rewards: Vec<f64> = self.features.iter().map(|phi| dot(phi, theta)).collect();
        let k = rewards.len();
        // Suffix log-sum-exp over ranked positions j..K.
        let mut suffix = vec![f64::NEG_INFINITY; k + 1];
        for j in (0..k).rev() {
            suffix[j] = log_add_exp(suffix[j + 1], rewards[self.perm[j]]);
        }
        let mut loss = 0.0;
        for j in 0..k {
            let chosen = self.perm[j];
            loss += suffix[j] - rewards[chosen];
            axpy(-weight, &self.features[chosen], out);
            for &other in &self.perm[j..] {
                let p = (rewards[other] - suffix[j]).exp();
                axpy(weight * p, &self.features[other], out);
            }
        }
        loss
    }
}

fn validate_permutation(perm: &[usize], k: usize) -> Result<()> {
    if perm.len() != k {
        return Err(invalid(format!("permutation has length {} but K = {k}", perm.len())));
    }
    let mut seen = vec![false; k];
    for &p in perm {
        if p >= k || seen[p] {
            return Err(invalid(format!("{perm:?} is not a permutation of 0..{k}")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Logistic function, evaluated so that `exp` is only taken of non-positive
/// arguments.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `ln sigmoid(z) = -softplus(-z)`.
pub fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + (-(a - b).abs()).exp().ln_1p()
}

fn pair_nll(z: f64, y: bool) -> f64 {
    if y {
        softplus(-z)
    } else {
        softplus(z)
    }
}

fn ranking_nll(rewards: &[f64], perm: &[usize]) -> f64 {
    let mut acc = f64::NEG_INFINITY;
    let mut loss = 0.0;
    for &idx in perm.iter().rev() {
        acc = log_add_exp(acc, rewards[idx]);
        loss += acc - rewards[idx];
    }
    loss
}

/// Probability that the second action is preferred, `sigmoid(<x, theta>)`.
pub fn btl_prob(theta: &ParamVector, x: &[f64]) -> Result<f64> {
    check_dim(theta.dim(), x.len())?;
    Ok(sigmoid(dot(x, theta)))
}

pub fn btl_loss(theta: &ParamVector, item: &PreferenceItem) -> Result<f64> {
    check_dim(theta.dim(), item.x.len())?;
    Ok(item.nll(theta))
}

/// `(sigmoid(<x, theta>) - y) * x`; its norm never exceeds `|x|`.
pub fn btl_grad(theta: &ParamVector, item: &PreferenceItem) -> Result<Vec<f64>> {
    check_dim(theta.dim(), item.x.len())?;
    let mut g = vec![0.0; theta.dim()];
    item.accumulate(theta, 1.0, &mut g);
    Ok(g)
}

fn check_kwise(theta: &ParamVector, item: &KWiseItem) -> Result<()> {
    let k = item.features.len();
    if k < 2 {
        return Err(invalid(format!("K-wise item needs at least 2 actions, got {k}")));
    }
    validate_permutation(&item.perm, k)?;
    for phi in &item.features {
        check_dim(theta.dim(), phi.len())?;
    }
    Ok(())
}

/// Plackett-Luce negative log-likelihood of the item's ranking.
pub fn pl_loss(theta: &ParamVector, item: &KWiseItem) -> Result<f64> {
    check_kwise(theta, item)?;
    Ok(item.nll(theta))
}

pub fn pl_grad(theta: &ParamVector, item: &KWiseItem) -> Result<Vec<f64>> {
    check_kwise(theta, item)?;
    let mut g = vec![0.0; theta.dim()];
    item.accumulate(theta, 1.0, &mut g);
    Ok(g)
}

/// Euclidean projection onto `{theta : <1, theta> = 0, |theta| <= bound}`:
/// remove the coordinate mean, then shrink onto the ball if needed. The ball
/// is centred inside the subspace, so the two steps compose to the exact
/// projection.
///
/// Panics if `bound` is not positive.
pub fn project(raw: &[f64], bound: f64) -> ParamVector {
    assert!(bound > 0.0, "projection bound must be positive");
    let d = raw.len();
    if d == 0 {
        return ParamVector::zeros(0);
    }
    let mean = raw.iter().sum::<f64>() / d as f64;
    let mut v: Vec<f64> = raw.iter().map(|r| r - mean).collect();
    crate::linalg::clip_norm(&mut v, bound);
    ParamVector(v)
}

/// Mean of the item gradients of one user's record.
pub fn user_avg_grad<I: Observation>(theta: &ParamVector, user: &UserRecord<I>) -> Result<Vec<f64>> {
    if user.items.is_empty() {
        return Err(Error::EmptyUser);
    }
    for item in &user.items {
        check_dim(theta.dim(), item.dim())?;
    }
    let (_, g) = user_loss_grad(theta, &user.items);
    Ok(g)
}

/// Mean loss and mean gradient over a non-empty slice of items.
pub(crate) fn user_loss_grad<I: Observation>(theta: &[f64], items: &[I]) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; theta.len()];
    let mut loss = 0.0;
    for item in items {
        loss += item.accumulate(theta, 1.0, &mut g);
    }
    let inv = 1.0 / items.len() as f64;
    crate::linalg::scale(inv, &mut g);
    (loss * inv, g)
}
