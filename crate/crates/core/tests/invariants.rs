//! Property tests of the public API, in both input regimes.

use photoxform::lightstage::{build_layout, LayoutConfig, LightstageLayout, ViewSpec};
use photoxform::model::{encode_views, NetInput, NetworkConfig, NetworkParams, Which};
use photoxform::netcore::Matrix;
use photoxform::objective::{distance_matrix, loss_main, SignConvention};
use photoxform::patterns::{simulate_capture, split_pattern};
use photoxform::pointlight::{default_camera, render_pointlight_vector, LightMask, PointLightRig};
use photoxform::rng::{stream_rng, Stream};
use photoxform::shading::{render_lumitexel, sample_training_point, GgxBrdfParams, SamplingConfig, SurfaceSample};
use photoxform::training::{BatchSource, SyntheticLightstage, SyntheticPointlight};
use proptest::prelude::*;
use std::sync::OnceLock;

fn desk() -> &'static LightstageLayout {
    static LAYOUT: OnceLock<LightstageLayout> = OnceLock::new();
    LAYOUT.get_or_init(|| build_layout(&LayoutConfig::desk()).unwrap())
}

fn configs() -> [NetworkConfig; 2] {
    [
        NetworkConfig::lightstage(LayoutConfig::desk(), 3, 5),
        NetworkConfig::pointlight(),
    ]
}

fn batch(config: &NetworkConfig, k: usize, seed: u64) -> (Matrix<f64>, Matrix<f64>) {
    let b = if config.layout.is_some() {
        SyntheticLightstage::from_network(config, SamplingConfig::default(), seed)
            .unwrap()
            .batch(0, k)
            .unwrap()
    } else {
        let camera = default_camera();
        SyntheticPointlight::new(
            PointLightRig::hemispherical_default(camera),
            camera,
            SamplingConfig::default(),
            seed,
        )
        .unwrap()
        .batch(0, k)
        .unwrap()
    };
    (b.inputs, b.views)
}

fn point(seed: u64) -> (SurfaceSample, GgxBrdfParams, ViewSpec) {
    let tp = sample_training_point(
        &mut stream_rng(seed, Stream::Sample, 0, 0),
        &SamplingConfig::default(),
        &desk().camera_position(),
    )
    .unwrap();
    (tp.sample, tp.params, tp.view1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rendering_is_linear_in_albedo(seed in 0u64..10_000, s in 1e-3f64..1e3) {
        let (sample, p, view) = point(seed);
        let cam = desk().camera_position();
        let base = render_lumitexel(&sample, view, desk(), &cam, &p).unwrap();
        let scaled = render_lumitexel(&sample, view, desk(), &cam, &p.scaled(s)).unwrap();
        for (a, b) in base.values.iter().zip(&scaled.values) {
            prop_assert!((s * a - b).abs() <= 1e-6 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn both_rotation_paths_agree(seed in 0u64..10_000) {
        let (sample, p, view) = point(seed);
        let cam = desk().camera_position();
        let direct = render_lumitexel(&sample, view, desk(), &cam, &p).unwrap();
        let pre = sample.rotated(view);
        let moved = render_lumitexel(&pre, ViewSpec::new(0.0), desk(), &cam, &p).unwrap();
        for (a, b) in direct.values.iter().zip(&moved.values) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn split_capture_equals_projection(
        row in prop::collection::vec(-1.0f64..1.0, 384),
        c in prop::collection::vec(0.0f64..2.0, 384),
    ) {
        prop_assume!(row.iter().any(|w| *w != 0.0));
        let pair = split_pattern(&row).unwrap();
        let direct: f64 = row.iter().zip(&c).map(|(a, b)| a * b).sum();
        let scale: f64 = row.iter().zip(&c).map(|(a, b)| (a * b).abs()).sum();
        prop_assert!((simulate_capture(&c, &pair).unwrap() - direct).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn measurement_stage_is_linear(seed in 0u64..1000, alpha in -2.0f64..2.0, beta in -2.0f64..2.0, pl in any::<bool>()) {
        let config = configs()[pl as usize].clone();
        let params = NetworkParams::<f64>::init(config.clone(), &mut stream_rng(seed, Stream::Init, 0, 0)).unwrap();
        let (x, _) = batch(&config, 1, seed);
        let (c1, c2) = (x.row(0).to_vec(), x.row(1).to_vec());
        let mix: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| alpha * a + beta * b).collect();
        let inputs = Matrix::from_rows(&[c1.clone(), c2.clone(), mix]).unwrap();
        let views = encode_views::<f64>(&[ViewSpec::new(1.0); 3]);
        for which in [Which::Sensitive, Which::Insensitive] {
            let m = params.forward_branch(which, NetInput::Lumitexels(&inputs), &views, None).unwrap().measurements;
            let bound: f64 = c1.iter().zip(&c2).map(|(a, b)| (alpha * a).abs() + (beta * b).abs()).sum();
            for j in 0..m.cols() {
                prop_assert!((m[(2, j)] - alpha * m[(0, j)] - beta * m[(1, j)]).abs() <= 1e-9 * bound.max(1e-300));
            }
        }
    }

    #[test]
    fn insensitive_features_ignore_input_scale(seed in 0u64..1000, exp in -3.0f64..3.0, pl in any::<bool>()) {
        let config = configs()[pl as usize].clone();
        let params = NetworkParams::<f32>::init(config.clone(), &mut stream_rng(seed, Stream::Init, 0, 0)).unwrap();
        let (x, v) = batch(&config, 8, seed);
        let (x, v) = (x.cast::<f32>(), v.cast::<f32>());
        let s = 10f32.powf(exp as f32);
        let (a, _) = params.forward_insensitive(NetInput::Lumitexels(&x), &v).unwrap();
        let (b, _) = params.forward_insensitive(NetInput::Lumitexels(&x.map(|c| c * s)), &v).unwrap();
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((p - q).abs() <= 1e-5);
        }
    }

    #[test]
    fn main_loss_is_non_negative_and_finite(k in 1usize..12, seed in 0u64..1000, spread in 0.0f64..50.0) {
        let mut rng = stream_rng(seed, Stream::Eval, 0, 0);
        let rows = |rng: &mut _| -> Vec<Vec<f64>> {
            (0..k).map(|_| (0..4).map(|_| spread * rand::Rng::random_range(rng, -1.0..1.0)).collect()).collect()
        };
        let a = Matrix::from_rows(&rows(&mut rng)).unwrap();
        let b = Matrix::from_rows(&rows(&mut rng)).unwrap();
        let l = loss_main(&distance_matrix(&a, &b).unwrap(), SignConvention::Similarity).unwrap().value;
        prop_assert!(l.is_finite() && l >= 0.0);
        if k == 1 {
            prop_assert_eq!(l, 0.0);
        }
    }

    #[test]
    fn pointlight_response_is_linear_in_albedo(seed in 0u64..10_000, rd in 0.0f64..1.0, rs in 0.0f64..3.0) {
        let (sample, p, view) = point(seed);
        let rig = PointLightRig::hemispherical_default(default_camera());
        let cam = default_camera();
        let diffuse = render_pointlight_vector(&sample, view, &rig, &cam, &GgxBrdfParams { rho_d: 1.0, rho_s: 0.0, ..p }).unwrap();
        let specular = render_pointlight_vector(&sample, view, &rig, &cam, &GgxBrdfParams { rho_d: 0.0, rho_s: 1.0, ..p }).unwrap();
        let both = render_pointlight_vector(&sample, view, &rig, &cam, &GgxBrdfParams { rho_d: rd, rho_s: rs, ..p }).unwrap();
        for ((d, s), b) in diffuse.iter().zip(&specular).zip(&both) {
            prop_assert!((rd * d + rs * s - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn masked_lights_read_zero_in_training_batches() {
    let camera = default_camera();
    let rig = PointLightRig::hemispherical_default(camera);
    let mask = LightMask::spread(&rig, 4).unwrap();
    let src = SyntheticPointlight::new(rig, camera, SamplingConfig::default(), 3)
        .unwrap()
        .with_mask(mask.clone())
        .unwrap();
    let b = src.batch(0, 16).unwrap();
    assert_eq!(b.inputs.cols(), 96);
    let mut lit = 0;
    for i in 0..b.inputs.rows() {
        for (j, v) in b.inputs.row(i).iter().enumerate() {
            if !mask.active[j] {
                assert_eq!(*v, 0.0);
            } else if *v > 0.0 {
                lit += 1;
            }
        }
    }
    assert!(lit > 0);
}

#[test]
fn orthonormal_pair_loss_matches_the_scalar_formula() {
    let e = Matrix::<f64>::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let l = loss_main(&distance_matrix(&e, &e).unwrap(), SignConvention::Similarity)
        .unwrap()
        .value;
    let oracle = 2.0 * (1.0 + (-(2f64.sqrt())).exp()).ln();
    assert!((l - oracle).abs() < 1e-12);
}
