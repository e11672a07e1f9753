//! Learn a photographer's global tone adjustment as a mapping between
//! luminance CDFs, apply it by histogram matching, and score results with the
//! Fréchet distance between feature Gaussians.

pub mod cli;
pub mod color;
pub mod curves;
pub mod error;
pub mod fid;
pub mod gpr;
pub mod pipeline;
pub mod preprocess;

pub use color::{ColorSpace, LabImage, RgbImage};
pub use curves::{EmpiricalCdf, SampledCurve};
pub use error::{Error, Result};
pub use fid::{FeatureSet, GaussianStats};
pub use gpr::{GprModel, RbfKernel};
pub use pipeline::PipelineConfig;
