//! Synthetic correspondence scenes and feature-matching scores.

mod azimuth;
mod nn;
mod scene;

pub use azimuth::{azimuth_variation, AzimuthVariation};
pub use nn::{
    baseline_raw_ssd, distance_stats, match_nn, stack_features, Correspondence, DistanceStats, MatchMetrics,
    MatchReport, DEFAULT_RATIO,
};
pub use scene::{
    build_synthetic_scene, fibonacci_sphere, perturb_stack, render_sphere_image, Measurer, RgbBrdf, SceneConfig,
    SceneMaterial, ScenePoint, SceneShape, SceneTruth, SyntheticScene, TruePair, TruthPoint, CHANNELS,
};
