//! Unsupervised K-class image segmentation under a hidden Potts Markov random
//! field whose regularisation strength is marginalised out.
//!
//! The estimator alternates between a self-tuning total-variation denoising
//! step (majorisation-minimisation of `N log(TV(x) + 1)`) and least-squares
//! clustering of the denoised field.
//!
//! Module map:
//!
//! - [`grid`]: images, label fields, neighbourhoods and the discrete energies.
//! - [`tvprox`]: dual projection solver for the TV denoising subproblem.
//! - [`cluster`]: K-means with deterministic quantile seeding.
//! - [`sva`]: the objective, the MM inner loop and the outer segmentation loop.
//! - [`oracle`]: brute-force and reference solvers used for verification.

pub mod cluster;
pub mod error;
pub mod grid;
pub mod oracle;
pub mod sva;
pub mod tvprox;

pub use cluster::{assign, kmeans, kmeans_from, update_means, ClassMeans, Clustering};
pub use error::{Error, Result};
pub use grid::{
    complement_hamiltonian, directed_edge_count, gradient, hamiltonian, l0_gradient_norm,
    tv_isotropic, GradientField, Image, LabelField, Neighborhood, NeighborhoodKind,
};
pub use sva::{
    lambda_schedule, mm_inner, segment, segment_tsa, sva_l0_objective, sva_objective,
    SegmentationResult, SvaConfig, TraceKind, TraceRecord,
};
pub use tvprox::{fuse_data_term, solve, DualField, ProxDiagnostics, ProxProblem, ProxSolution};
