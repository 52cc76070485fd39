//! End-to-end runs of the library pipeline at toy scale.

use photoxform::features::{extract, fit_pca, project, visualize, FeatureMap, MeasurementStack};
use photoxform::lightstage::{LayoutConfig, ViewSpec};
use photoxform::matching::{
    baseline_raw_ssd, build_synthetic_scene, match_nn, Measurer, SceneConfig, SceneTruth, DEFAULT_RATIO,
};
use photoxform::model::{load_checkpoint, save_checkpoint, Mode};
use photoxform::patterns::export_patterns;
use photoxform::shading::{read_dataset, synthesize_dataset, write_dataset};
use photoxform::training::{
    final_smoothed, initial_smoothed, run_schedule, DatasetSource, SyntheticLightstage, TrainConfig,
};

fn small() -> TrainConfig {
    TrainConfig {
        layout: LayoutConfig {
            per_side: 4,
            ..LayoutConfig::desk()
        },
        k: 16,
        iters_pretrain: 150,
        iters_joint: 400,
        learning_rate: 1e-3,
        ..TrainConfig::desk(11)
    }
}

#[test]
fn train_capture_extract_match() {
    let cfg = small();
    let src = SyntheticLightstage::from_network(&cfg.network_config(), cfg.sampling.clone(), cfg.seed).unwrap();
    let (net, report) = run_schedule(&cfg, &src).unwrap();
    let joint = report.phase_curve("joint");
    let combined = final_smoothed(joint, 100);
    for branch in ["pretrain_sensitive", "pretrain_insensitive"] {
        let curve = report.phase_curve(branch);
        assert!(final_smoothed(curve, 100) <= initial_smoothed(curve, 100), "{branch}");
        assert!(combined < final_smoothed(curve, 100), "{branch}");
    }

    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("net.pftc");
    save_checkpoint(&ckpt, &net).unwrap();
    let net = load_checkpoint(&ckpt).unwrap();
    assert_eq!(export_patterns(&net).unwrap().len(), 8);

    let thetas = vec![
        ViewSpec::turntable_stop(0, 24).theta(),
        ViewSpec::turntable_stop(1, 24).theta(),
    ];
    let scene = build_synthetic_scene(
        &SceneConfig::cloud(120, thetas, 5),
        &Measurer::for_network(&net).unwrap(),
    )
    .unwrap();
    for (v, stack) in scene.stacks.iter().enumerate() {
        let path = dir.path().join(format!("v{v}.mstk"));
        stack.save(&path).unwrap();
        assert_eq!(&MeasurementStack::load(&path).unwrap(), stack);
    }
    let truth_path = dir.path().join("scene.json");
    scene.truth.save(&truth_path).unwrap();
    let truth = SceneTruth::load(&truth_path).unwrap();

    let a = extract(&scene.stacks[0], &net).unwrap();
    let b = extract(&scene.stacks[1], &net).unwrap();
    let pca = fit_pca(&[&a, &b], 4, usize::MAX, 0).unwrap();
    let (pa, pb) = (project(&a, &pca).unwrap(), project(&b, &pca).unwrap());
    let fpath = dir.path().join("a.fmap");
    pa.save(&fpath).unwrap();
    assert_eq!(FeatureMap::load(&fpath).unwrap(), pa);

    let learned = match_nn(&pa, &pb, &truth, DEFAULT_RATIO).unwrap().metrics;
    let raw = baseline_raw_ssd(&scene.stacks[0], &scene.stacks[1], &truth, DEFAULT_RATIO)
        .unwrap()
        .metrics;
    let chance = 1.0 / learned.queries as f64;
    for m in [learned, raw] {
        assert!((0.0..=1.0).contains(&m.top1_accuracy));
        assert!(m.mean_rank >= 1.0 && m.mean_rank <= m.queries as f64);
    }
    // Even a briefly trained network is far from chance.
    assert!(learned.top1_accuracy > 5.0 * chance, "{learned:?}");
    let img = visualize(&pa).unwrap();
    assert_eq!((img.width() as usize, img.height() as usize), (pa.width, pa.height));
}

#[test]
fn stored_dataset_trains_like_any_source() {
    let cfg = TrainConfig {
        iters_pretrain: 3,
        iters_joint: 3,
        k: 4,
        ..small()
    };
    assert_eq!(cfg.mode, Mode::Lightstage);
    let layout = photoxform::lightstage::build_layout(&cfg.layout).unwrap();
    let ds = synthesize_dataset(&layout, &cfg.sampling, 20, 1).unwrap();
    let mut buf = Vec::new();
    write_dataset(&mut buf, ds.lumitexel_len, &ds.records, ds.layout.as_ref()).unwrap();
    let ds = read_dataset(&mut buf.as_slice()).unwrap();
    let src = DatasetSource::new(ds, 1).unwrap();
    let (a, _) = run_schedule(&cfg, &src).unwrap();
    let (b, _) = run_schedule(&cfg, &src).unwrap();
    assert_eq!(a, b);
}
