//! Nearest-neighbour matching of feature maps and its scores.
//!
//! Scores, for points visible in both views:
//! * top-1 accuracy: fraction whose nearest valid pixel of B is the true one;
//! * mean rank: `1 +` number of valid B pixels strictly closer than the true
//!   pixel, averaged;
//! * precision: among mutual nearest neighbours whose ratio of first to
//!   second nearest distance is below the threshold, the correct fraction
//!   (0 when none passes).
//!
//! Ties between equally distant pixels go to the lowest pixel index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::features::{FeatureMap, MeasurementStack};

use super::scene::SceneTruth;

pub const DEFAULT_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchMetrics {
    pub top1_accuracy: f64,
    pub mean_rank: f64,
    pub precision_at_ratio: f64,
    /// Co-visible points scored.
    pub queries: usize,
    pub mutual_matches: usize,
    /// Mutual matches passing the ratio test.
    pub ratio_matches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correspondence {
    pub pixel_a: usize,
    pub pixel_b: usize,
    pub distance: f64,
    /// Nearest over second-nearest distance from A's side; 0 with a single
    /// candidate, 1 on an exact tie.
    pub ratio: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub correspondences: Vec<Correspondence>,
    pub metrics: MatchMetrics,
}

fn dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `(nearest index, nearest distance, second distance)` over `candidates`.
fn nearest(query: &[f32], map: &FeatureMap, candidates: &[usize]) -> (usize, f64, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    let mut second = f64::INFINITY;
    for &c in candidates {
        let d = dist(query, map.feature(c));
        if d < best.1 {
            second = best.1;
            best = (c, d);
        } else if d < second {
            second = d;
        }
    }
    (best.0, best.1, second)
}

fn check_pair(a: &FeatureMap, b: &FeatureMap, truth: &SceneTruth) -> Result<(usize, usize)> {
    if a.dim != b.dim {
        return Err(contract(format!("feature lengths differ: {} vs {}", a.dim, b.dim)));
    }
    for m in [a, b] {
        if m.width != truth.width || m.height != truth.height {
            return Err(contract("map size differs from the scene truth"));
        }
    }
    Ok((truth.view_index(a.theta)?, truth.view_index(b.theta)?))
}

/// Mutual nearest neighbours between the valid pixels of `a` and `b`, scored
/// against `truth`.
pub fn match_nn(a: &FeatureMap, b: &FeatureMap, truth: &SceneTruth, ratio: f64) -> Result<MatchReport> {
    let (va, vb) = check_pair(a, b, truth)?;
    let pa = a.valid_pixels();
    let pb = b.valid_pixels();
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::Empty("a feature map has no valid pixels".into()));
    }
    let truth_pairs: Vec<_> = truth
        .correspondences(va, vb)?
        .into_iter()
        .filter(|t| a.mask[t.pixel_a] && b.mask[t.pixel_b])
        .collect();
    if truth_pairs.is_empty() {
        return Err(Error::Empty(
            "no co-visible point has valid features in both maps".into(),
        ));
    }
    let mut true_b = vec![usize::MAX; a.pixels()];
    for t in &truth_pairs {
        true_b[t.pixel_a] = t.pixel_b;
    }

    let a_to_b: Vec<(usize, f64, f64)> = pa.par_iter().map(|&p| nearest(a.feature(p), b, &pb)).collect();
    let b_to_a: Vec<usize> = pb.par_iter().map(|&q| nearest(b.feature(q), a, &pa).0).collect();
    let mut back = vec![usize::MAX; b.pixels()];
    for (&q, &p) in pb.iter().zip(&b_to_a) {
        back[q] = p;
    }
    let correspondences: Vec<Correspondence> = pa
        .iter()
        .zip(&a_to_b)
        .filter(|(&p, &(q, _, _))| back[q] == p)
        .map(|(&p, &(q, d1, d2))| Correspondence {
            pixel_a: p,
            pixel_b: q,
            distance: d1,
            ratio: if d2 > 0.0 { d1 / d2 } else { 1.0 },
            correct: true_b[p] == q,
        })
        .collect();

    let scored: Vec<(bool, usize)> = truth_pairs
        .par_iter()
        .map(|t| {
            let fa = a.feature(t.pixel_a);
            let d_true = dist(fa, b.feature(t.pixel_b));
            let closer = pb.iter().filter(|&&q| dist(fa, b.feature(q)) < d_true).count();
            let nn = nearest(fa, b, &pb).0;
            (nn == t.pixel_b, 1 + closer)
        })
        .collect();
    let n = scored.len() as f64;
    let passing: Vec<&Correspondence> = correspondences.iter().filter(|c| c.ratio < ratio).collect();
    let metrics = MatchMetrics {
        top1_accuracy: scored.iter().filter(|s| s.0).count() as f64 / n,
        mean_rank: scored.iter().map(|s| s.1 as f64).sum::<f64>() / n,
        precision_at_ratio: if passing.is_empty() {
            0.0
        } else {
            passing.iter().filter(|c| c.correct).count() as f64 / passing.len() as f64
        },
        queries: scored.len(),
        mutual_matches: correspondences.len(),
        ratio_matches: passing.len(),
    };
    Ok(MatchReport {
        correspondences,
        metrics,
    })
}

/// The stack's per-pixel measurement vectors (all channels) as features.
pub fn stack_features(stack: &MeasurementStack) -> Result<FeatureMap> {
    let dim = stack.channels * stack.measurements;
    let mut map = FeatureMap::new(stack.height, stack.width, dim, stack.theta)?;
    map.data.clone_from(&stack.data);
    map.mask.clone_from(&stack.mask);
    Ok(map)
}

/// Matching on raw measurements, the control for learned features.
pub fn baseline_raw_ssd(
    a: &MeasurementStack,
    b: &MeasurementStack,
    truth: &SceneTruth,
    ratio: f64,
) -> Result<MatchReport> {
    if a.measurements != b.measurements || a.channels != b.channels {
        return Err(contract("stacks hold different measurements"));
    }
    match_nn(&stack_features(a)?, &stack_features(b)?, truth, ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    /// Mean distance between the two views' features of the same point.
    pub intra: f64,
    /// Mean distance between view-A and view-B features of different points.
    pub inter: f64,
    pub ratio: f64,
}

/// Same-point against different-point feature distances over co-visible
/// points.
pub fn distance_stats(a: &FeatureMap, b: &FeatureMap, truth: &SceneTruth) -> Result<DistanceStats> {
    let (va, vb) = check_pair(a, b, truth)?;
    let pairs: Vec<_> = truth
        .correspondences(va, vb)?
        .into_iter()
        .filter(|t| a.mask[t.pixel_a] && b.mask[t.pixel_b])
        .collect();
    if pairs.len() < 2 {
        return Err(Error::Empty("need two co-visible points with valid features".into()));
    }
    let rows: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|s| {
            let fa = a.feature(s.pixel_a);
            let mut inter = 0.0;
            for t in &pairs {
                if t.point != s.point {
                    inter += dist(fa, b.feature(t.pixel_b));
                }
            }
            (dist(fa, b.feature(s.pixel_b)), inter)
        })
        .collect();
    let n = pairs.len() as f64;
    let intra = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let inter = rows.iter().map(|r| r.1).sum::<f64>() / (n * (n - 1.0));
    Ok(DistanceStats {
        intra,
        inter,
        ratio: intra / inter,
    })
}
