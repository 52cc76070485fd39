//! The two-branch per-pixel feature network.
//!
//! Each branch projects the input lumitexel onto its own learnable lighting
//! patterns (one pattern per row of a bias-free layer), then maps the
//! measurements and the encoded view through a stack of dense layers to a
//! unit-length branch feature. The intensity-insensitive branch normalizes
//! its measurements first and receives the view encoding deeper in its
//! stack. A final linear layer mixes the two branch features.
//!
//! In point-light mode the pattern layers are absent and a fixed-length
//! vector of one-light-at-a-time measurements feeds both branches directly.

mod config;
mod io;
mod network;

pub use config::{BranchConfig, Mode, NetworkConfig, DEFAULT_HIDDEN, POINTLIGHT_INPUTS};
pub use io::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use network::{
    encode_views, Branch, BranchInput, BranchTrace, NetInput, NetworkParams, NetworkTrace, Noise, Which,
};
