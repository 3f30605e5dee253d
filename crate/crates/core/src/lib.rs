//! Importance sampling squared (IS²).
//!
//! Bayesian posterior and marginal-likelihood estimation for models whose
//! likelihood is intractable but can be estimated unbiasedly, together with
//! the cost model used to choose how many particles each likelihood estimate
//! should use.
//!
//! The crate is organised around a few pieces:
//!
//! - [`estimator`]: self-normalised IS² estimates, asymptotic variances, ESS,
//!   marginal likelihood, trimming and bootstrap standard errors over a
//!   [`DrawSet`].
//! - [`likelihood`]: unbiased likelihood estimators (latent-variable IS with
//!   defensive mixtures, bootstrap particle filter) and normality diagnostics.
//! - [`tuning`]: jackknife variance of log-likelihood estimates, the
//!   computing-time model and the optimal log-likelihood variance.
//! - [`proposals`]: parameter proposal densities.
//! - [`models`]: built-in models with exact or quadrature oracles.
//! - [`pmmh`]: particle marginal Metropolis–Hastings baseline.
//! - [`runner`] and [`summary`]: the sampling driver and posterior reports.
//!
//! Draw evaluation fans out over rayon when the `parallel` feature is on; every
//! draw owns an RNG stream derived from the master seed, so results do not
//! depend on thread count or scheduling.

pub mod error;
pub mod estimator;
pub mod exec;
pub mod io;
pub mod likelihood;
pub mod models;
pub mod pmmh;
pub mod proposals;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod summary;
pub mod tuning;

pub use error::{Is2Error, Result};
pub use estimator::{
    DrawSet, MarginalLikelihoodEstimate, PosteriorEstimate, ShiftedWeights, WeightedDraw,
};
pub use exec::Execution;
pub use likelihood::LikelihoodEstimate;
pub use models::{Model, ParticleBudget};
pub use proposals::ParameterProposal;
pub use rng::StreamRng;
