//! Feature extraction over captured views, PCA reduction and visualization.

mod extract;
mod map;
mod pca;
mod stack;
mod viz;

pub use extract::{check_compatible, extract, extract_with, FeatureOutput};
pub use map::FeatureMap;
pub use pca::{fit_pca, pooled_samples, project, PcaModel, DEFAULT_COMPONENTS, DEFAULT_MAX_SAMPLES};
pub use stack::MeasurementStack;
pub use viz::{render_channels, save_png, visualize, visualize_with, MID_GRAY};
