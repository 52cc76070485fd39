//! Joint optimization of lightstage lighting patterns and a per-pixel
//! photometric feature transform for multi-view matching.
//!
//! The crate is organised along the acquisition/processing pipeline:
//!
//! * [`lightstage`]: emitter layout, turntable and view encoding.
//! * [`shading`]: anisotropic GGX reflectance, lumitexel rendering, sampling
//!   of synthetic training points and the `LTX1` dataset container.
//! * [`netcore`]: a small dense-network substrate with hand-written
//!   reverse-mode gradients, Adam, gradient checking and the `PFTC`
//!   checkpoint container.
//! * [`model`]: the two-branch feature network with learnable pattern layers.
//! * [`objective`]: distance-matrix softmax loss and last-layer regularizer.
//! * [`training`]: noise injection, branch pre-training and joint training.
//! * [`patterns`]: splitting learned patterns into non-negative pairs.
//! * [`features`]: per-pixel extraction, PCA reduction, feature-map I/O and
//!   visualization.
//! * [`matching`]: synthetic scenes with ground-truth correspondences and
//!   mutual nearest-neighbour evaluation.
//! * [`pointlight`]: the 96-light one-at-a-time input regime.

pub mod error;
pub mod features;
pub mod lightstage;
pub mod matching;
pub mod model;
pub mod netcore;
pub mod objective;
pub mod patterns;
pub mod pointlight;
pub mod rng;
pub mod shading;
pub mod training;

mod binio;

pub use error::{Error, Result};
