//! Minimal dense-network substrate with explicit reverse-mode gradients.
//!
//! Everything is generic over [`Real`] so the same code runs in single
//! precision for training and in double precision for gradient checks.

mod activation;
mod adam;
mod checkpoint;
mod dense;
pub mod gradcheck;
mod normalize;
mod tensor;

pub use activation::LeakyRelu;
pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_tensors, write_tensors, NamedTensor};
pub use dense::{DenseGrad, DenseLayer};
pub use gradcheck::{GradCheckConfig, GradCheckReport, GroupReport};
pub use normalize::{l2_normalize, normalize_rows, normalize_rows_backward, RowNormalization, NORM_EPS};
pub use tensor::{Matrix, Parameterized, Real, TensorMut, TensorRef};
