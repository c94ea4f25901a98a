//! Noise-aware dimensionality reduction and linear retrieval of atmospheric
//! profiles from gridded hyperspectral cubes.
//!
//! The pipeline: estimate per-pixel noise with a 3x3 paraboloid residual
//! filter ([`noise`]), fit a PCA or minimum noise fraction basis on training
//! scenes ([`decomposition`]), stack each pixel's scores with its spatial
//! neighborhood ([`features`]), and regress profiles on the result
//! ([`retrieval`]). [`evaluation`] scores and sweeps the whole chain and
//! [`synth`] produces deterministic test scenes.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the CLI live
//! in the companion `mnfret-cli` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so NaN takes the error path
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cube;
pub mod decomposition;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod linalg;
pub mod noise;
pub mod retrieval;
pub mod synth;

pub use cube::{apply_band_mask, cube_to_matrix, matrix_to_cube, Cube, CubeRole, PixelGrid, ProfileCube, SpectralCube};
pub use decomposition::{
    eigenvalue_curve, fit_mnf, fit_pca, project, signal_fraction, LinearBasis, Method, ScoreCube,
};
pub use error::{Error, Result};
pub use evaluation::{gaussian_total_correlation, mean_rmse, rmse_profile, run_sweep, SweepResult};
pub use features::{extract_neighborhood, DesignMatrix};
pub use noise::{
    noise_covariance, paraboloid_residual_filter, signal_covariance, CovarianceEstimate, NoiseCube,
    ResidualGain,
};
pub use retrieval::{fit_linear, predict, RetrievalModel};
pub use synth::{generate_scene, SceneConfig};

pub use nalgebra;
