//! Low-light image enhancement in the Fourier amplitude domain.
//!
//! An image is decomposed per channel into a centered amplitude and phase
//! spectrum. A fully-convolutional policy picks one gain `e^α` per spectrum
//! bin at every step, the amplitude is multiplied by those gains while the
//! input phase stays frozen, and the image is rebuilt by the inverse DFT.
//!
//! The zero-frequency component (ZFC) of the luminance plane equals the sum
//! of luminance values and serves as the global illumination measure: the
//! training reward pulls it towards a target, and inference iterates until
//! it matches the user's target (reference image, scalar or step count).
//!
//! Module map:
//! - [`fourier`]: 2D DFT, centered amplitude/phase, ZFC, amplitude scaling
//! - [`engine`]: the iterative enhancement state
//! - [`rl`]: action ladder, rewards, quality scorers and the environment
//! - [`nn`]: policy/value network, actor-critic losses, asynchronous trainer
//! - [`inference`]: ZFC-guided adaptive iteration
//! - [`metrics`]: PSNR, PSNR-Y, SSIM, luminance histograms
//! - [`data_io`]: images, paired datasets, synthetic data, checkpoints
//! - [`config`]: the run configuration file

pub mod config;
pub mod data_io;
pub mod engine;
pub mod error;
pub mod fourier;
pub mod image;
pub mod inference;
pub mod metrics;
pub mod nn;
pub mod rl;

pub use crate::engine::EnhanceState;
pub use crate::error::{Error, Result};
pub use crate::fourier::{Plane, Spectrum};
pub use crate::image::ImageTensor;
pub use crate::inference::{EnhanceResult, InferenceConfig, PersonalizationTarget};

pub use crate::nn::{PolicyValueNet, TrainConfig};
pub use crate::rl::{ActionGrid, EpisodeConfig, RewardWeights};
