//! Bayesian inference for multinomial probit models under unified skew-normal
//! (SUN) priors.
//!
//! The three probit families (discrete choice, class-specific effects and
//! sequential choice) share the likelihood form `Φ_m(X̄β; Λ)`. Under a SUN
//! prior the posterior is again SUN, which gives:
//!
//! * exact i.i.d. posterior sampling ([`sun::sample_posterior`]),
//! * closed-form evidence and predictive probabilities as ratios of Gaussian
//!   orthant probabilities ([`sun::log_evidence`], [`sun::predict_exact`]),
//! * a blocked partially-factorized variational approximation for large
//!   sample sizes ([`vb`]).
//!
//! Numerical kernels (pivoted Cholesky with jitter repair, QMC Gaussian CDFs,
//! truncated normal sampling and moments) live in [`gauss`]. Independent slow
//! reference implementations used for validation live in [`oracle`].

pub mod error;
pub mod gauss;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod serde_util;
pub mod sun;
pub mod vb;

pub use error::{Error, Result};
pub use gauss::{chol_psd, CdfResult, CdfSettings, SpdMatrix};
pub use model::{Dataset, ModelFamily, ModelSpec, NewUnit, Predictors, ProbitLikelihood};
pub use sun::{PosteriorDraws, SunParams};
