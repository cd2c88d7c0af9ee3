//! Offline dataset improvement by trajectory stitching.
//!
//! The library rewrites an offline dataset of (state, action, reward, next
//! state) trajectories by replacing low-value transitions with plausible
//! synthetic ones, then extracts a behavioural-cloning policy from the
//! improved data. It ships everything needed to do that end to end on a
//! single machine:
//!
//! - [`data`]: dataset model, text/binary codecs, validation, a spatial
//!   index over states, and trajectory-level quantities.
//! - [`nn`]: a small feedforward-network substrate with analytic gradients
//!   for every loss in the suite, Adam updates, and finite-difference
//!   gradient verification.
//! - [`models`]: the learned environment models — a Gaussian forward
//!   ensemble with a conservative likelihood gate, a conditional-VAE
//!   inverse-dynamics model, a family of reward models, and a twin
//!   state-value function.
//! - [`stitch`]: the stitching engine itself — candidate search, target
//!   selection, trajectory rebuild, replacement decision, and the iterated
//!   outer loop.
//! - [`policy`]: behavioural cloning (plain, value-weighted, Gaussian).
//! - [`env`]: synthetic benchmark environments with exact dynamics,
//!   closed-form experts, dataset generation, and evaluation diagnostics.
//!
//! All numeric code is generic over a [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the default `f64` instantiation used by the CLI and
//! by the on-disk formats.

pub mod data;
pub mod env;
pub mod error;
pub mod mat;
pub mod models;
pub mod nn;
pub mod policy;
pub mod scalar;
pub mod stitch;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar type for the CLI and the on-disk formats.
pub type Real = f64;

pub type Transition = data::Transition<Real>;
pub type Trajectory = data::Trajectory<Real>;
pub type Dataset = data::Dataset<Real>;
pub type StateIndex = data::StateIndex<Real>;

pub type MlpState = nn::MlpState<Real>;
pub type ForwardEnsemble = models::ForwardEnsemble<Real>;
pub type InverseModel = models::InverseModel<Real>;
pub type RewardModel = models::RewardModel<Real>;
pub type ValueFunction = models::ValueFunction<Real>;
pub type Policy = policy::Policy<Real>;
