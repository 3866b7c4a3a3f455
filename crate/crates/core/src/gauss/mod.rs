//! Gaussian numerical kernels.

mod cdf;
mod chol;
mod moments;
mod mvn;
pub mod normal;
mod tmvn;

pub use cdf::{mvn_cdf, mvn_cdf_vec, CdfResult, CdfSettings};
pub use chol::{chol_psd, symmetrize, SpdMatrix, JITTER_LADDER};
pub use moments::{tmvn_moments, tmvn_moments_with_cap, TruncatedMoments, MOMENT_DIM_CAP};
pub use mvn::sample_mvn;
pub use tmvn::{sample_tmvn, sample_tmvn_with, TmvnMethod, TmvnOptions, TmvnSample};
