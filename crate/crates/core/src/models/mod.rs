//! Likelihood models: NEF utilities, the toy waveform model and the
//! Rao-Blackwellized multi-dipole source model.

pub mod clg;
pub mod geometry;
pub mod nef;
pub mod source;
pub mod toy;

pub use clg::LinearGaussian;
pub use geometry::{GridConfig, VoxelGrid};
pub use nef::{gaussian_power, nef_power_constant, theta_of_alpha, NefDescriptor};
pub use source::{
    generate_clg_data, prior_logdensity_source, ClgDataConfig, ClgDataset, ClgModel, ClgModelConfig, ClgTruth,
    SourceConfig, SourceKernels, SourcePrior,
};
pub use toy::{generate_toy_data, ToyDataConfig, ToyDataset, ToyModel};
