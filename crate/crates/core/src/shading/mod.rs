//! Reflectance model, lumitexel rendering and synthetic training samples.

mod brdf;
mod dataset;
mod render;
mod sampling;

pub use brdf::{
    eval_brdf, eval_brdf_strict, ggx_ndf, schlick_fresnel, smith_g1, specular_lobe, GgxBrdfParams, SCHLICK_F0,
};
pub use dataset::{read_dataset, synthesize_dataset, write_dataset, Dataset, DatasetRecord};
pub use render::{render_lobes, render_lumitexel, LobeLumitexels, Lumitexel, SurfaceSample};
pub use sampling::{random_frame, sample_training_point, SamplingConfig, TrainingPoint, ViewDistribution};
