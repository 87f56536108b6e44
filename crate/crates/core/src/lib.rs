//! User-level label-differentially-private reward estimation for
//! Bradley-Terry-Luce and Plackett-Luce preference data.
//!
//! Each user contributes `m` labeled comparisons and the whole record is the
//! unit of privacy. The crate provides
//!
//! * the pairwise and K-wise likelihoods with their gradients ([`model`]),
//! * a synthetic data generator with a known ground truth ([`data`]),
//! * Laplace, Gaussian, AboveThreshold and randomized-response primitives
//!   plus a noise accountant ([`mech`]),
//! * a non-private MLE, a randomized-response estimator with a de-biased
//!   loss, and two DP-SGD baselines ([`estimators`]),
//! * the adaptive AUP-RLHF estimator ([`aup`]),
//! * a reproducible benchmark grid runner ([`harness`]).
//!
//! ```
//! use upldp::{data::{generate, GenConfig}, estimators::{fit_mle, FitConfig}};
//!
//! let (dataset, truth) = generate(&GenConfig::new(200, 5, 4, 1.0, 1.0, 7)).unwrap();
//! let fit = fit_mle(&dataset, &FitConfig::default()).unwrap();
//! assert!(fit.theta_hat.distance(&truth.theta_star) < 0.6);
//! ```

pub mod aup;
pub mod data;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod mech;
pub mod model;

pub use error::{Error, Result};
pub use model::{KWiseItem, ModelConfig, Observation, ParamVector, PreferenceItem};
pub use data::{Dataset, GenConfig, UserRecord};
pub use mech::{NoisePlan, PrivacyBudget};
pub use estimators::{FitConfig, FitResult};
