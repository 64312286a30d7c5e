//! Karcher mean, tangent PCA, random synthesis and parameter regression.

mod atlas;
mod karcher;
mod regression;
mod tangent;

pub use atlas::{
    atlas_from_registered, fit_atlas, mode_path, retained_count, sample_random, tangent_vectors, truncated_normal,
    Atlas, Synthesis, RETAINED_VARIANCE,
};
pub use karcher::{collection_srvfts, karcher_mean, medoid, KarcherMean, KarcherOptions};
pub use regression::{
    coefficient_matrix, design_matrix, fit_regression, predict, pseudo_inverse, RegressionModel, PINV_RTOL,
};
pub use tangent::{exp_map, log_map, Exponential, TangentLayout, TangentVector};
