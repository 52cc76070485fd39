use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use crate::error::{contract, Error, Result};
use crate::model::{save_checkpoint, Mode, NetworkConfig, NetworkParams, Which};
use crate::netcore::Adam;
use crate::rng::{stream_rng, Stream};

use super::config::{split_budget, TrainConfig};
use super::source::{batch_noise, BatchSource, SyntheticLightstage};
use super::step::{loss_and_grad, total_loss, Objective};

/// Trailing window used for smoothed loss values.
pub const SMOOTHING_WINDOW: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Global iteration index across all phases.
    pub iteration: u64,
    pub l_main: f64,
    pub l_reg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub name: String,
    pub first_iteration: u64,
    pub iterations: u64,
    /// Pattern rows redrawn after collapsing to zero.
    pub redrawn_rows: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub curve: Vec<CurvePoint>,
    pub phases: Vec<PhaseSummary>,
    pub wall_time_s: f64,
    pub checkpoints: Vec<PathBuf>,
}

impl TrainReport {
    /// Curve entries of the named phase.
    pub fn phase_curve(&self, name: &str) -> &[CurvePoint] {
        match self.phases.iter().find(|p| p.name == name) {
            Some(p) => {
                let start = self
                    .curve
                    .iter()
                    .position(|c| c.iteration == p.first_iteration)
                    .unwrap_or(self.curve.len());
                &self.curve[start..(start + p.iterations as usize).min(self.curve.len())]
            }
            None => &[],
        }
    }
}

/// Trailing moving average; one value per full window.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || values.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(values.len() - window + 1);
    let mut sum: f64 = values[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..values.len() {
        sum += values[i] - values[i - window];
        out.push(sum / window as f64);
    }
    out
}

/// Mean main loss over the last `window` entries (or all, if fewer).
pub fn final_smoothed(curve: &[CurvePoint], window: usize) -> f64 {
    let n = curve.len().min(window.max(1));
    if n == 0 {
        return f64::NAN;
    }
    curve[curve.len() - n..].iter().map(|c| c.l_main).sum::<f64>() / n as f64
}

/// Mean main loss over the first `window` entries (or all, if fewer).
pub fn initial_smoothed(curve: &[CurvePoint], window: usize) -> f64 {
    let n = curve.len().min(window.max(1));
    if n == 0 {
        return f64::NAN;
    }
    curve[..n].iter().map(|c| c.l_main).sum::<f64>() / n as f64
}

pub fn write_curve_csv<W: Write>(w: W, curve: &[CurvePoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["iteration", "l_main", "l_reg"])
        .map_err(|e| Error::Io(e.into()))?;
    for c in curve {
        out.write_record([c.iteration.to_string(), c.l_main.to_string(), c.l_reg.to_string()])
            .map_err(|e| Error::Io(e.into()))?;
    }
    out.flush()?;
    Ok(())
}

fn phase_name(objective: Objective) -> &'static str {
    match objective {
        Objective::Branch(Which::Sensitive) => "pretrain_sensitive",
        Objective::Branch(Which::Insensitive) => "pretrain_insensitive",
        Objective::Joint => "joint",
    }
}

/// Runs `iterations` optimizer steps of `objective`. Batches and noise are
/// keyed by the global iteration index starting at `first_iteration`.
pub fn run_phase<S: BatchSource + ?Sized>(
    params: &mut NetworkParams<f32>,
    objective: Objective,
    iterations: u64,
    first_iteration: u64,
    config: &TrainConfig,
    source: &S,
    report: &mut TrainReport,
) -> Result<()> {
    if source.input_len() != params.config.input_len || source.mode() != params.config.mode {
        return Err(contract("batch source does not match the network input"));
    }
    let mut adam = Adam::new(config.adam(), params);
    let mut redrawn_rows = 0;
    let name = phase_name(objective);
    for i in 0..iterations {
        let it = first_iteration + i;
        let batch = source.batch(it, config.k)?.cast::<f32>();
        let noise = batch_noise::<f32>(&params.config, 2 * config.k, config.sigma, config.seed, it)?;
        let (loss, grads) = loss_and_grad(params, objective, &batch, noise.as_ref(), config.lambda, config.sign)?;
        let total = total_loss(loss, objective, config.lambda);
        if !total.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                loss: total,
            });
        }
        adam.step(params, &grads)?;
        if params.config.mode == Mode::Lightstage {
            let mut rng = stream_rng(config.seed, Stream::Renormalize, it, 0);
            redrawn_rows += match objective {
                Objective::Branch(which) => params.renormalize_branch_patterns(which, &mut rng),
                Objective::Joint => params.renormalize_patterns(&mut rng),
            }
            .len();
        }
        report.curve.push(CurvePoint {
            iteration: it,
            l_main: loss.l_main,
            l_reg: loss.l_reg,
        });
        if config.checkpoint_every > 0 && (i + 1) % config.checkpoint_every == 0 {
            if let Some(dir) = &config.checkpoint_dir {
                let path = dir.join(format!("{name}_{:07}.pftc", i + 1));
                save_checkpoint(&path, params)?;
                report.checkpoints.push(path);
            }
        }
    }
    report.phases.push(PhaseSummary {
        name: name.into(),
        first_iteration,
        iterations,
        redrawn_rows,
    });
    Ok(())
}

/// Initial parameters for `config.seed`.
pub fn init_params(config: &TrainConfig) -> Result<NetworkParams<f32>> {
    NetworkParams::init(
        config.network_config(),
        &mut stream_rng(config.seed, Stream::Init, 0, 0),
    )
}

/// Trains one branch alone; the other branch and the combining layer keep
/// their values.
pub fn pretrain_branch<S: BatchSource + ?Sized>(
    params: &mut NetworkParams<f32>,
    which: Which,
    config: &TrainConfig,
    source: &S,
    first_iteration: u64,
    report: &mut TrainReport,
) -> Result<()> {
    run_phase(
        params,
        Objective::Branch(which),
        config.iters_pretrain,
        first_iteration,
        config,
        source,
        report,
    )
}

/// Trains all parameters on the combined features.
pub fn train_joint<S: BatchSource + ?Sized>(
    params: &mut NetworkParams<f32>,
    config: &TrainConfig,
    source: &S,
    first_iteration: u64,
    report: &mut TrainReport,
) -> Result<()> {
    if params.config != config.network_config() {
        return Err(contract("checkpoint does not match the training configuration"));
    }
    run_phase(
        params,
        Objective::Joint,
        config.iters_joint,
        first_iteration,
        config,
        source,
        report,
    )
}

/// Pre-trains the sensitive branch, then the insensitive branch, then the
/// whole network.
pub fn run_schedule<S: BatchSource + ?Sized>(
    config: &TrainConfig,
    source: &S,
) -> Result<(NetworkParams<f32>, TrainReport)> {
    config.validate()?;
    let start = Instant::now();
    let mut params = init_params(config)?;
    let mut report = TrainReport::default();
    let p = config.iters_pretrain;
    pretrain_branch(&mut params, Which::Sensitive, config, source, 0, &mut report)?;
    pretrain_branch(&mut params, Which::Insensitive, config, source, p, &mut report)?;
    train_joint(&mut params, config, source, 2 * p, &mut report)?;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((params, report))
}

/// A network whose sensitive branch alone carries the whole budget, trained
/// for as many iterations as the full schedule gives that branch.
pub fn train_sensitive_only<S: BatchSource + ?Sized>(
    config: &TrainConfig,
    budget: usize,
    source: &S,
) -> Result<(NetworkParams<f32>, TrainReport)> {
    let cfg = TrainConfig {
        budget: (budget, 1),
        ..config.clone()
    };
    cfg.validate()?;
    let start = Instant::now();
    let mut params = init_params(&cfg)?;
    let mut report = TrainReport::default();
    run_phase(
        &mut params,
        Objective::Branch(Which::Sensitive),
        cfg.iters_pretrain + cfg.iters_joint,
        0,
        &cfg,
        source,
        &mut report,
    )?;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((params, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendRow {
    pub budget: usize,
    pub seed: u64,
    pub ms: usize,
    pub mi: usize,
    /// Final smoothed main loss of the combined network.
    pub combined: f64,
    /// Final smoothed main loss of the sensitive-only network, if trained.
    pub sensitive_only: Option<f64>,
}

/// Trains one light-stage network per (budget, seed) and reports final
/// smoothed losses.
pub fn eval_trend(
    base: &TrainConfig,
    budgets: &[usize],
    seeds: &[u64],
    with_sensitive_only: bool,
    mut on_row: impl FnMut(&TrendRow),
) -> Result<Vec<TrendRow>> {
    if base.mode != Mode::Lightstage {
        return Err(Error::Config("bandwidth trends need light-stage mode".into()));
    }
    let mut rows = Vec::new();
    for &seed in seeds {
        for &budget in budgets {
            let (ms, mi) = split_budget(budget)?;
            let cfg = TrainConfig {
                budget: (ms, mi),
                seed,
                ..base.clone()
            };
            let net_cfg: NetworkConfig = cfg.network_config();
            let source = SyntheticLightstage::from_network(&net_cfg, cfg.sampling.clone(), seed)?;
            let (_, report) = run_schedule(&cfg, &source)?;
            let combined = final_smoothed(report.phase_curve("joint"), SMOOTHING_WINDOW);
            let sensitive_only = if with_sensitive_only {
                let (_, r) = train_sensitive_only(&cfg, budget, &source)?;
                Some(final_smoothed(&r.curve, SMOOTHING_WINDOW))
            } else {
                None
            };
            let row = TrendRow {
                budget,
                seed,
                ms,
                mi,
                combined,
                sensitive_only,
            };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightstage::LayoutConfig;
    use crate::netcore::Parameterized;

    fn tiny(seed: u64) -> (TrainConfig, SyntheticLightstage) {
        let cfg = TrainConfig {
            layout: LayoutConfig {
                per_side: 3,
                ..LayoutConfig::desk()
            },
            budget: (1, 2),
            k: 8,
            iters_pretrain: 4,
            iters_joint: 6,
            learning_rate: 1e-3,
            ..TrainConfig::desk(seed)
        };
        let source = SyntheticLightstage::from_network(&cfg.network_config(), cfg.sampling.clone(), seed).unwrap();
        (cfg, source)
    }

    fn flat(p: &NetworkParams<f32>) -> Vec<f32> {
        p.tensors().iter().flat_map(|t| t.data.to_vec()).collect()
    }

    #[test]
    fn schedule_is_deterministic_and_indexes_phases() {
        let (cfg, source) = tiny(3);
        let (a, ra) = run_schedule(&cfg, &source).unwrap();
        let (b, rb) = run_schedule(&cfg, &source).unwrap();
        assert_eq!(flat(&a), flat(&b));
        assert_eq!(ra.curve, rb.curve);
        let its: Vec<u64> = ra.curve.iter().map(|c| c.iteration).collect();
        assert_eq!(its, (0..14).collect::<Vec<_>>());
        let names: Vec<&str> = ra.phases.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["pretrain_sensitive", "pretrain_insensitive", "joint"]);
        assert_eq!(ra.phase_curve("joint").len(), 6);
        assert_eq!(ra.phase_curve("joint")[0].iteration, 8);
        for (_, row) in a.pattern_rows() {
            let m = row.iter().fold(0.0f32, |m, v| m.max(v.abs()));
            assert!((m - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_iterations_return_the_initialization() {
        let (cfg, source) = tiny(4);
        let cfg = TrainConfig {
            iters_pretrain: 0,
            iters_joint: 0,
            ..cfg
        };
        let (p, report) = run_schedule(&cfg, &source).unwrap();
        assert_eq!(flat(&p), flat(&init_params(&cfg).unwrap()));
        assert!(report.curve.is_empty());
    }

    #[test]
    fn pretraining_one_branch_leaves_the_rest() {
        let (cfg, source) = tiny(5);
        let init = init_params(&cfg).unwrap();
        let mut p = init.clone();
        let mut report = TrainReport::default();
        pretrain_branch(&mut p, Which::Insensitive, &cfg, &source, 0, &mut report).unwrap();
        for (t, u) in p.tensors().iter().zip(init.tensors()) {
            let same = t.data == u.data;
            assert_eq!(same, !t.name.starts_with("insensitive."), "{}", t.name);
        }
    }

    #[test]
    fn large_lambda_shrinks_combining_weights() {
        let (cfg, source) = tiny(6);
        let cfg = TrainConfig {
            iters_pretrain: 0,
            iters_joint: 200,
            lambda: 1e3,
            learning_rate: 1e-2,
            ..cfg
        };
        let init = init_params(&cfg).unwrap();
        let (p, _) = run_schedule(&cfg, &source).unwrap();
        let l1 = |p: &NetworkParams<f32>| p.combine.weights.as_slice().iter().map(|w| w.abs()).sum::<f32>();
        assert!(l1(&p) < 0.2 * l1(&init), "{} vs {}", l1(&p), l1(&init));
    }

    #[test]
    fn curve_csv_and_smoothing() {
        assert_eq!(smoothed(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.5, 2.5, 3.5]);
        assert!(smoothed(&[1.0], 2).is_empty());
        let curve: Vec<CurvePoint> = (0..4)
            .map(|i| CurvePoint {
                iteration: i,
                l_main: i as f64,
                l_reg: 0.5,
            })
            .collect();
        assert_eq!(final_smoothed(&curve, 2), 2.5);
        assert_eq!(initial_smoothed(&curve, 2), 0.5);
        assert_eq!(final_smoothed(&curve, 100), 1.5);
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &curve).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("iteration,l_main,l_reg"));
        assert_eq!(text.lines().nth(2), Some("1,1,0.5"));
    }

    #[test]
    fn joint_rejects_mismatched_network() {
        let (cfg, source) = tiny(7);
        let mut p = init_params(&TrainConfig {
            budget: (2, 1),
            ..cfg.clone()
        })
        .unwrap();
        assert!(train_joint(&mut p, &cfg, &source, 0, &mut TrainReport::default()).is_err());
    }
}
