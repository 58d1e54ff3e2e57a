//! Average treatment effect estimation from observational data.
//!
//! The pipeline mirrors the usual matching workflow:
//!
//! 1. load and preprocess unit-level data ([`dataset`]),
//! 2. fit a probit treatment model and turn propensity scores into matching
//!    weights ([`linreg`], [`propensity`]),
//! 3. check covariate balance before and after weighting ([`balance`]),
//! 4. estimate the effect with a weighted outcome model and g-computation,
//!    next to the naive difference in means and a plain regression
//!    adjustment ([`effects`]).
//!
//! [`synth`] generates data with known potential outcomes so every estimator
//! can be checked against ground truth, and verifies the propensity-score
//! balancing identities on discrete models by exact enumeration.

pub mod balance;
pub mod dataset;
pub mod effects;
pub mod error;
pub mod export;
pub mod linreg;
pub mod propensity;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};

pub use balance::{BalanceRecord, BalanceReport, QQPairs};
pub use dataset::{CausalFrame, GridField, RawFrame, Schema, TransformLog, TransformRecord};

pub use effects::{DecompositionResult, EffectEstimate, Estimator, StratifiedSlopes};
pub use linreg::{CovarianceKind, DesignMatrix, FitResult};
pub use propensity::{PropensityResult, Scheme, WeightSet, WeightingScheme};
pub use synth::{DiscreteModel, PotentialFrame, ScmSpec};

/// Library version, echoed into reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
