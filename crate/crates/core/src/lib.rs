//! Elastic shape analysis of two-layer plant root architectures.
//!
//! Roots are a main curve with laterals attached along it. Each branch is
//! mapped to its square-root velocity function; registration aligns laterals,
//! rotation and main parameterization; statistics run in the resulting flat
//! coordinates.

pub mod clustering;
pub mod error;
pub mod metric;
pub mod registration;
pub mod srvf;
pub mod statistics;
pub mod synthetic;
pub mod tree;

pub use clustering::{cut, linkage, Dendrogram, Linkage, Merge};
pub use error::{Error, Result};
pub use metric::{
    distance, distance_sq, geodesic, pairwise_matrix, preshape_dissimilarity_sq, AnalysisOptions, DistanceMatrix,
    Geodesic,
};
pub use registration::{apply_registration, register, Gamma, Permutation, Registration, RegistrationOptions};
pub use srvf::{from_srvf, srvft_to_tree, to_srvf, tree_to_srvft, Sampling, Srvf, SrvfLateral, SrvfTree, Weights};
pub use tree::{Branch, Lateral, Point2, RootTree};
pub use statistics::{
    exp_map, fit_atlas, fit_regression, karcher_mean, log_map, mode_path, predict, sample_random, Atlas, KarcherMean,
    KarcherOptions, RegressionModel, Synthesis, TangentVector,
};
