//! Representation learning over finite candidate classes.
//!
//! * [`mle_fit`] picks the model candidate with the largest empirical
//!   log-likelihood.
//! * [`minimax_fit`] and [`iterative_fit`] pick one-hot features by the
//!   min-max-min ridge objective against a discriminator class.
//! * [`nonparametric_transition`] turns a feature and data into a
//!   ridge-form transition estimate.
//! * [`factored_mle_fit`] fits each player's factor separately.

mod data;
mod decoder;
mod factored;
mod feature;
mod kernel;
mod minimax;
mod mle;

pub use data::{Dataset, StepData, Triple};
pub use decoder::Decoder;
pub use factored::{factored_mle_fit, FactorCandidate, FactorClass, FactorLayout};
pub use feature::{kronecker_feature, Feature};
pub use kernel::{nonparametric_transition, KernelEstimate};
pub use minimax::{
    iterative_fit, iterative_select, minimax_fit, minimax_select, ridge_min_loss, Discriminator,
    DiscriminatorClass, FeatureClass, IterativeFit, MinimaxFit, MinimaxStats,
};
pub use mle::{mle_fit, model_tv, MleFit, ModelCandidate, ModelClass};
