use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use photoxform::features::{
    extract_with, fit_pca, project, save_png, visualize, visualize_with, FeatureMap, FeatureOutput, MeasurementStack,
    PcaModel,
};
use photoxform::lightstage::{build_layout, LayoutConfig, ViewSpec};
use photoxform::matching::{
    baseline_raw_ssd, build_synthetic_scene, match_nn, perturb_stack, render_sphere_image, Measurer, RgbBrdf,
    SceneConfig, SceneTruth,
};
use photoxform::model::{load_checkpoint, save_checkpoint, Mode, NetworkConfig, Which};
use photoxform::patterns::{export_patterns as split_rows, write_patterns_csv};
use photoxform::pointlight::{default_camera, LightMask, PointLightRig};
use photoxform::shading::{read_dataset, synthesize_dataset, write_dataset, SamplingConfig};
use photoxform::training::{
    check_model_gradients, final_smoothed, run_schedule, split_budget, train_sensitive_only, write_curve_csv,
    BatchSource, DatasetSource, SyntheticLightstage, SyntheticPointlight, TrainConfig, TrainReport, SMOOTHING_WINDOW,
};
use photoxform::Error;
use serde_json::json;

use crate::manifest::Recorder;
use crate::{
    ExportArgs, ExtractArgs, GradcheckArgs, MatchArgs, ModeArg, OutputArg, SceneArgs, ShapeArg, SynthArgs, TrainArgs,
    TrendArgs, VizArgs,
};

/// Turntable stops per revolution for `scene --stops`.
const TURNTABLE_STOPS: usize = 24;
const SPHERE_IMAGE_RADIUS: f64 = 0.08;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn mode(m: ModeArg) -> Mode {
    match m {
        ModeArg::Lightstage => Mode::Lightstage,
        ModeArg::Pointlight => Mode::Pointlight,
    }
}

/// `"3,5"` as given, or a single total split between the branches.
pub fn parse_budget(s: &str) -> std::result::Result<(usize, usize), Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |p: &str| p.parse::<usize>().map_err(|_| usage(format!("invalid budget `{s}`")));
    match parts.as_slice() {
        [total] => split_budget(num(total)?).map_err(|e| usage(e.to_string())),
        [ms, mi] => {
            let (ms, mi) = (num(ms)?, num(mi)?);
            if ms == 0 || mi == 0 {
                return Err(usage("each branch needs at least one measurement"));
            }
            Ok((ms, mi))
        }
        _ => Err(usage(format!("budget must be `Ms,Mi` or a total, got `{s}`"))),
    }
}

fn parse_layout(spec: &str, rec: &mut Recorder) -> std::result::Result<LayoutConfig, Failure> {
    match spec {
        "desk" => Ok(LayoutConfig::desk()),
        "full" => Ok(LayoutConfig::full_scale()),
        path => {
            let path = Path::new(path);
            if !path.exists() {
                return Err(usage(format!(
                    "layout must be `desk`, `full` or a JSON file, got `{spec}`"
                )));
            }
            rec.input(path);
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
        }
    }
}

fn create(path: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn finish(rec: Recorder, config: impl serde::Serialize) -> Outcome {
    rec.finish(config)?;
    Ok(())
}

pub fn synth(a: SynthArgs) -> Outcome {
    let mut rec = Recorder::new("synth", Some(a.seed));
    let layout_cfg = parse_layout(&a.layout, &mut rec)?;
    let layout = build_layout(&layout_cfg)?;
    let sampling = SamplingConfig::default();
    let ds = synthesize_dataset(&layout, &sampling, a.count, a.seed)?;
    let mut w = create(&a.out)?;
    write_dataset(&mut w, ds.lumitexel_len, &ds.records, ds.layout.as_ref())?;
    w.flush()?;
    rec.output(&a.out);
    println!(
        "{} records of {} entries -> {}",
        ds.records.len(),
        ds.lumitexel_len,
        a.out.display()
    );
    finish(
        rec,
        json!({"layout": layout_cfg, "count": a.count, "sampling": sampling}),
    )
}

fn load_rig(path: Option<&PathBuf>, rec: &mut Recorder) -> std::result::Result<PointLightRig, Failure> {
    match path {
        Some(p) => {
            rec.input(p);
            Ok(PointLightRig::load(p)?)
        }
        None => Ok(PointLightRig::hemispherical_default(default_camera())),
    }
}

fn light_mask(rig: &PointLightRig, lights: Option<usize>) -> std::result::Result<LightMask, Failure> {
    match lights {
        Some(n) => LightMask::spread(rig, n).map_err(|e| usage(e.to_string())),
        None => Ok(LightMask::all(rig.len())),
    }
}

fn print_phases(report: &TrainReport) {
    for phase in &report.phases {
        let curve = report.phase_curve(&phase.name);
        println!(
            "{:<22} iterations {:>7}  final smoothed L_main {:.4}",
            phase.name,
            phase.iterations,
            final_smoothed(curve, SMOOTHING_WINDOW)
        );
    }
    println!("wall time {:.1} s", report.wall_time_s);
}

pub fn train(a: TrainArgs) -> Outcome {
    let mut rec = Recorder::new("train", Some(a.seed));
    let mut cfg = if a.paper_scale {
        TrainConfig::paper_scale(a.seed)
    } else {
        TrainConfig::desk(a.seed)
    };
    cfg.mode = mode(a.mode);
    cfg.budget = parse_budget(&a.budget)?;
    cfg.k = a.k;
    cfg.iters_pretrain = a.iters_pre.unwrap_or(cfg.iters_pretrain);
    cfg.iters_joint = a.iters_joint.unwrap_or(cfg.iters_joint);
    cfg.learning_rate = a.lr;
    cfg.sigma = a.sigma;
    cfg.lambda = a.lambda;
    cfg.checkpoint_every = a.checkpoint_every;
    if a.checkpoint_every > 0 {
        let dir = a
            .checkpoint_dir
            .clone()
            .unwrap_or_else(|| a.out.parent().map(Path::to_path_buf).unwrap_or_default());
        std::fs::create_dir_all(&dir)?;
        cfg.checkpoint_dir = Some(dir);
    }
    if cfg.mode == Mode::Lightstage && (a.rig.is_some() || a.lights.is_some()) {
        return Err(usage("--rig and --lights apply to --mode pointlight"));
    }
    if cfg.mode == Mode::Pointlight && (a.dataset.is_some() || a.sensitive_only) {
        return Err(usage("--dataset and --sensitive-only apply to --mode lightstage"));
    }

    let source: Box<dyn BatchSource> = match (cfg.mode, &a.dataset) {
        (Mode::Lightstage, Some(path)) => {
            rec.input(path);
            let mut r = std::io::BufReader::new(File::open(path)?);
            let ds = read_dataset(&mut r)?;
            match ds.layout.as_ref().and_then(|l| l.config()) {
                Some(layout) => cfg.layout = *layout,
                None if ds.lumitexel_len == build_layout(&cfg.layout)?.len() => {}
                None => {
                    return Err(usage(format!(
                        "dataset lumitexels have {} entries but the layout has a different size",
                        ds.lumitexel_len
                    )))
                }
            }
            Box::new(DatasetSource::new(ds, a.seed)?)
        }
        (Mode::Lightstage, None) => Box::new(SyntheticLightstage::from_network(
            &cfg.network_config(),
            cfg.sampling.clone(),
            a.seed,
        )?),
        (Mode::Pointlight, _) => {
            let rig = load_rig(a.rig.as_ref(), &mut rec)?;
            let mask = light_mask(&rig, a.lights)?;
            Box::new(SyntheticPointlight::new(rig, default_camera(), cfg.sampling.clone(), a.seed)?.with_mask(mask)?)
        }
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let (params, report) = if a.sensitive_only {
        train_sensitive_only(&cfg, cfg.budget.0 + cfg.budget.1, source.as_ref())?
    } else {
        run_schedule(&cfg, source.as_ref())?
    };
    print_phases(&report);

    save_checkpoint(&a.out, &params)?;
    rec.output(&a.out);
    let curve_path = a.curve.clone().unwrap_or_else(|| a.out.with_extension("curve.csv"));
    let mut w = create(&curve_path)?;
    write_curve_csv(&mut w, &report.curve)?;
    w.flush()?;
    rec.output(&curve_path);
    for ckpt in &report.checkpoints {
        rec.output(ckpt);
    }
    finish(
        rec,
        json!({
            "train": cfg,
            "dataset": a.dataset,
            "sensitive_only": a.sensitive_only,
            "rig": a.rig,
            "lights": a.lights,
            "network": params.config,
        }),
    )
}

pub fn export_patterns(a: ExportArgs) -> Outcome {
    let mut rec = Recorder::new("export-patterns", None);
    rec.input(&a.ckpt);
    let params = load_checkpoint(&a.ckpt)?;
    if params.config.mode != Mode::Lightstage {
        return Err(usage("point-light networks have no patterns to export"));
    }
    let pairs = split_rows(&params)?;
    let mut w = create(&a.out)?;
    write_patterns_csv(&mut w, &pairs)?;
    w.flush()?;
    rec.output(&a.out);
    println!(
        "{} patterns ({} physical) -> {}",
        pairs.len(),
        2 * pairs.len(),
        a.out.display()
    );
    finish(rec, json!({"rows": pairs.len()}))
}

pub fn scene(a: SceneArgs) -> Outcome {
    let mut rec = Recorder::new("scene", Some(a.seed));
    rec.input(&a.ckpt);
    let params = load_checkpoint(&a.ckpt)?;
    let mut measurer = Measurer::for_network(&params)?;
    if a.rig.is_some() || a.lights.is_some() {
        if params.config.mode != Mode::Pointlight {
            return Err(usage("--rig and --lights apply to point-light networks"));
        }
        let rig = load_rig(a.rig.as_ref(), &mut rec)?;
        let mask = light_mask(&rig, a.lights)?;
        measurer = Measurer::PointLights {
            rig,
            mask,
            camera: default_camera(),
        };
    }
    if a.stops.is_empty() || a.stops.iter().any(|&s| s >= TURNTABLE_STOPS) {
        return Err(usage(format!("stops must lie in 0..{TURNTABLE_STOPS}")));
    }
    if !(a.noise >= 0.0) {
        return Err(usage("noise must be >= 0"));
    }
    let thetas: Vec<f64> = a
        .stops
        .iter()
        .map(|&s| ViewSpec::turntable_stop(s, TURNTABLE_STOPS).theta())
        .collect();
    std::fs::create_dir_all(&a.out_dir)?;

    let (mut stacks, truth, config) = match a.image {
        Some(res) => {
            let brdf = RgbBrdf::glossy_default();
            let stacks = thetas
                .iter()
                .map(|&t| render_sphere_image(res, SPHERE_IMAGE_RADIUS, t, &brdf, &measurer))
                .collect::<photoxform::Result<Vec<_>>>()?;
            let config = json!({"image": res, "radius": SPHERE_IMAGE_RADIUS, "brdf": brdf, "thetas": thetas});
            (stacks, None, config)
        }
        None => {
            let config = match a.shape {
                ShapeArg::Sphere => SceneConfig::sphere(a.points, thetas, a.seed),
                ShapeArg::Cloud => SceneConfig::cloud(a.points, thetas, a.seed),
            };
            config.validate().map_err(|e| usage(e.to_string()))?;
            let scene = build_synthetic_scene(&config, &measurer)?;
            (
                scene.stacks,
                Some(scene.truth),
                serde_json::to_value(&config).map_err(Error::from)?,
            )
        }
    };
    for (v, (stack, stop)) in stacks.iter_mut().zip(&a.stops).enumerate() {
        if a.noise > 0.0 {
            perturb_stack(stack, a.noise, a.seed, v as u64)?;
        }
        let path = a.out_dir.join(format!("view_{stop}.mstk"));
        stack.save(&path)?;
        rec.output(&path);
    }
    if let Some(truth) = truth {
        let path = a.out_dir.join("scene.json");
        truth.save(&path)?;
        rec.output(&path);
    }
    println!(
        "{} views of {}x{} pixels, {} measurements -> {}",
        stacks.len(),
        stacks[0].width,
        stacks[0].height,
        stacks[0].measurements,
        a.out_dir.display()
    );
    finish(
        rec,
        json!({"scene": config, "stops": a.stops, "noise": a.noise, "mode": params.config.mode, "lights": a.lights}),
    )
}

pub fn extract(a: ExtractArgs) -> Outcome {
    if a.stack.len() != a.out.len() {
        return Err(usage(format!("{} stacks but {} outputs", a.stack.len(), a.out.len())));
    }
    let mut rec = Recorder::new("extract", Some(a.seed));
    rec.input(&a.ckpt);
    let params = load_checkpoint(&a.ckpt)?;
    let output = match a.output {
        OutputArg::Combined => FeatureOutput::Combined,
        OutputArg::Sensitive => FeatureOutput::Branch(Which::Sensitive),
        OutputArg::Insensitive => FeatureOutput::Branch(Which::Insensitive),
    };
    let mut maps = Vec::with_capacity(a.stack.len());
    for path in &a.stack {
        rec.input(path);
        let stack = MeasurementStack::load(path)?;
        maps.push(extract_with(&stack, &params, output)?);
    }
    let mut fitted = false;
    if let Some(pca_path) = &a.pca {
        let pca = if pca_path.exists() {
            rec.input(pca_path);
            PcaModel::load(pca_path)?
        } else {
            let refs: Vec<&FeatureMap> = maps.iter().collect();
            let pca = fit_pca(&refs, a.dims, a.pca_samples, a.seed)?;
            pca.save(pca_path)?;
            rec.output(pca_path);
            fitted = true;
            pca
        };
        maps = maps
            .iter()
            .map(|m| project(m, &pca))
            .collect::<photoxform::Result<_>>()?;
    }
    for (map, path) in maps.iter().zip(&a.out) {
        map.save(path)?;
        rec.output(path);
        println!(
            "{} valid of {} pixels, {} dims -> {}",
            map.valid_pixels().len(),
            map.pixels(),
            map.dim,
            path.display()
        );
    }
    finish(
        rec,
        json!({
            "output": format!("{:?}", a.output).to_lowercase(),
            "pca": a.pca,
            "pca_fitted": fitted,
            "dims": a.dims,
            "pca_samples": a.pca_samples,
        }),
    )
}

enum MapFile {
    Features(FeatureMap),
    Stack(MeasurementStack),
}

fn load_map(path: &Path) -> std::result::Result<MapFile, Failure> {
    let mut magic = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    match &magic {
        b"FMAP" => Ok(MapFile::Features(FeatureMap::load(path)?)),
        b"MSTK" => Ok(MapFile::Stack(MeasurementStack::load(path)?)),
        _ => Err(usage(format!(
            "{} is neither a feature map nor a measurement stack",
            path.display()
        ))),
    }
}

pub fn match_maps(a: MatchArgs) -> Outcome {
    let mut rec = Recorder::new("match", None);
    for p in [&a.a, &a.b, &a.truth] {
        rec.input(p);
    }
    if !(a.ratio > 0.0 && a.ratio <= 1.0) {
        return Err(usage("ratio must lie in (0, 1]"));
    }
    let truth = SceneTruth::load(&a.truth)?;
    let (report, kind) = match (load_map(&a.a)?, load_map(&a.b)?) {
        (MapFile::Features(x), MapFile::Features(y)) => (match_nn(&x, &y, &truth, a.ratio)?, "features"),
        (MapFile::Stack(x), MapFile::Stack(y)) => (baseline_raw_ssd(&x, &y, &truth, a.ratio)?, "raw_ssd"),
        _ => return Err(usage("--a and --b must both be feature maps or both be stacks")),
    };
    let m = &report.metrics;
    println!(
        "{kind}: top-1 {:.4}  mean rank {:.3}  precision@{} {:.4}  ({} queries, {} mutual, {} pass ratio)",
        m.top1_accuracy, m.mean_rank, a.ratio, m.precision_at_ratio, m.queries, m.mutual_matches, m.ratio_matches
    );
    let mut w = create(&a.out)?;
    serde_json::to_writer_pretty(&mut w, m).map_err(Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    rec.output(&a.out);
    if let Some(path) = &a.pairs {
        let mut csv = csv::Writer::from_writer(create(path)?);
        for c in &report.correspondences {
            csv.serialize(c)?;
        }
        csv.flush()?;
        rec.output(path);
    }
    finish(rec, json!({"ratio": a.ratio, "kind": kind}))
}

pub fn viz(a: VizArgs) -> Outcome {
    let mut rec = Recorder::new("viz", None);
    rec.input(&a.map);
    let map = FeatureMap::load(&a.map)?;
    let img = match &a.pca {
        Some(p) => {
            rec.input(p);
            visualize_with(&map, &PcaModel::load(p)?)?
        }
        None => visualize(&map)?,
    };
    save_png(&img, &a.out)?;
    rec.output(&a.out);
    finish(rec, json!({"pca": a.pca}))
}

pub fn gradcheck(a: GradcheckArgs) -> Outcome {
    let mut rec = Recorder::new("gradcheck", Some(a.seed));
    let sampling = SamplingConfig::default();
    let (config, source): (NetworkConfig, Box<dyn BatchSource>) = match mode(a.mode) {
        Mode::Lightstage => {
            let (ms, mi) = parse_budget(&a.budget)?;
            let config = NetworkConfig::lightstage(LayoutConfig::desk(), ms, mi);
            let source = SyntheticLightstage::from_network(&config, sampling, a.seed)?;
            (config, Box::new(source))
        }
        Mode::Pointlight => {
            let camera = default_camera();
            let rig = PointLightRig::hemispherical_default(camera);
            (
                NetworkConfig::pointlight(),
                Box::new(SyntheticPointlight::new(rig, camera, sampling, a.seed)?),
            )
        }
    };
    if a.k < 1 {
        return Err(usage("k must be >= 1"));
    }
    let report = check_model_gradients(config.clone(), source.as_ref(), a.k, a.sigma, a.lambda, a.seed)?;
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")?;
            w.flush()?;
            rec.output(path);
        }
        None => println!("{text}"),
    }
    eprintln!(
        "max relative error: double {:.3e} (tol {:.0e}), single {:.3e} (tol {:.0e}); {} parameters, {:.1} s",
        report.double.max_rel_error(),
        report.double.tolerance,
        report.single.max_rel_error(),
        report.single.tolerance,
        report.parameters,
        report.wall_time_s
    );
    let passed = report.passed();
    finish(
        rec,
        json!({"network": config, "k": a.k, "sigma": a.sigma, "lambda": a.lambda}),
    )?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Runtime("gradient check failed".into()))
    }
}

pub fn eval_trend(a: TrendArgs) -> Outcome {
    if a.budgets.is_empty() || a.seeds.is_empty() {
        return Err(usage("need at least one budget and one seed"));
    }
    let mut rec = Recorder::new("eval-trend", a.seeds.first().copied());
    let base = TrainConfig {
        k: a.k,
        iters_pretrain: a.iters_pre,
        iters_joint: a.iters_joint,
        learning_rate: a.lr,
        sigma: a.sigma,
        ..TrainConfig::desk(0)
    };
    base.validate().map_err(|e| usage(e.to_string()))?;
    let mut csv = csv::Writer::from_writer(create(&a.out)?);
    let mut write_err = None;
    let rows = photoxform::training::eval_trend(&base, &a.budgets, &a.seeds, a.sensitive_only, |row| {
        eprintln!(
            "budget {:>2} ({}+{}) seed {}: combined {:.4}{}",
            row.budget,
            row.ms,
            row.mi,
            row.seed,
            row.combined,
            row.sensitive_only
                .map(|s| format!(", sensitive-only {s:.4}"))
                .unwrap_or_default()
        );
        if let Err(e) = csv.serialize(row).and_then(|_| csv.flush().map_err(csv::Error::from)) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    rec.output(&a.out);
    let means: Vec<f64> = a
        .budgets
        .iter()
        .map(|&b| {
            let v: Vec<f64> = rows.iter().filter(|r| r.budget == b).map(|r| r.combined).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    for (b, m) in a.budgets.iter().zip(&means) {
        println!("budget {b:>2}: mean final smoothed L_main {m:.4}");
    }
    let monotone = means.windows(2).all(|w| w[1] <= w[0]);
    println!("non-increasing across budgets: {monotone}");
    finish(
        rec,
        json!({"base": base, "budgets": a.budgets, "seeds": a.seeds, "sensitive_only": a.sensitive_only}),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_forms() {
        assert_eq!(parse_budget("3,5").unwrap(), (3, 5));
        assert_eq!(parse_budget(" 2 , 7 ").unwrap(), (2, 7));
        assert_eq!(parse_budget("8").unwrap(), (3, 5));
        assert_eq!(parse_budget("10").unwrap(), (5, 5));
        for bad in ["", "3,", "a,b", "0,4", "1,2,3", "1"] {
            assert!(matches!(parse_budget(bad), Err(Failure::Usage(_))), "{bad}");
        }
    }
}
