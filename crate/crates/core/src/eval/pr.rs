//! Threshold sweeps of slack confusion counts.
//!
//! Counts at every threshold are exact: for each frame the heatmap values in
//! and out of the dilated ground truth, and the max-filtered heatmap at
//! ground-truth pixels, are sorted once and each threshold is a binary search.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::eval::slack::{binary_planes, max_filter, ratio, Confusion};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// Liquid that is not occluded (detection).
    VisibleLiquid,
    /// All liquid, occluded included (tracking).
    AllLiquid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub slacks: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub target: Target,
}

/// `0.00, 0.01, …, 1.00`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

impl EvalConfig {
    pub fn new(target: Target) -> Self {
        EvalConfig {
            slacks: vec![0, 1, 2, 4],
            thresholds: default_thresholds(),
            target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slacks.is_empty() || self.thresholds.is_empty() {
            return Err(Error::Config("slacks and thresholds must be non-empty".into()));
        }
        if self.slacks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("slacks {:?} must be strictly ascending", self.slacks)));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1])
            || self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t))
        {
            return Err(Error::Config("thresholds must increase strictly within [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub counts: Confusion,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub slacks: Vec<usize>,
    pub thresholds: Vec<f64>,
    /// `points[slack_index][threshold_index]`.
    pub points: Vec<Vec<PrPoint>>,
}

impl PrCurve {
    pub fn for_slack(&self, slack: usize) -> Option<&[PrPoint]> {
        self.slacks.iter().position(|&s| s == slack).map(|i| self.points[i].as_slice())
    }
}

/// Accumulates exact counts frame by frame.
#[derive(Clone, Debug)]
pub struct PrAccumulator {
    config: EvalConfig,
    /// `counts[slack][threshold]`.
    counts: Vec<Vec<Confusion>>,
}

fn count_at_least(sorted: &[f64], t: f64) -> u64 {
    (sorted.len() - sorted.partition_point(|&v| v < t)) as u64
}

impl PrAccumulator {
    pub fn new(config: EvalConfig) -> Result<Self> {
        config.validate()?;
        let counts = vec![vec![Confusion::default(); config.thresholds.len()]; config.slacks.len()];
        Ok(PrAccumulator { config, counts })
    }

    /// Adds one `w × h` plane of heatmap values and its ground truth.
    pub fn add_plane(&mut self, heat: &[f64], gt: &[bool], w: usize, h: usize) {
        assert_eq!(heat.len(), w * h);
        assert_eq!(gt.len(), w * h);
        for (si, &slack) in self.config.slacks.iter().enumerate() {
            let gt_d = max_filter(gt, w, h, slack);
            let heat_d = max_filter(heat, w, h, slack);
            let mut inside = Vec::new();
            let mut outside = Vec::new();
            let mut reach = Vec::new();
            for i in 0..w * h {
                if gt_d[i] {
                    inside.push(heat[i]);
                } else {
                    outside.push(heat[i]);
                }
                if gt[i] {
                    reach.push(heat_d[i]);
                }
            }
            for v in [&mut inside, &mut outside, &mut reach] {
                v.sort_by(f64::total_cmp);
            }
            for (ti, &t) in self.config.thresholds.iter().enumerate() {
                let c = &mut self.counts[si][ti];
                c.tp += count_at_least(&inside, t);
                c.fp += count_at_least(&outside, t);
                c.fn_ += reach.len() as u64 - count_at_least(&reach, t);
            }
        }
    }

    /// Adds a batch of single-channel heatmaps with binary ground truth.
    pub fn add<T: Real>(&mut self, heat: &Tensor<T>, gt: &Tensor<T>) -> Result<()> {
        contract!(
            heat.shape() == gt.shape(),
            "heatmap {} and ground truth {} differ in shape",
            heat.shape(),
            gt.shape()
        );
        let s = heat.shape();
        let planes = binary_planes(gt, "ground truth")?;
        for (n, g) in planes.iter().enumerate() {
            let h: Vec<f64> = heat.plane(n, 0).iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
            contract!(
                h.iter().all(|v| (0.0..=1.0).contains(v)),
                "heatmap values must lie in [0, 1]"
            );
            self.add_plane(&h, g, s.w, s.h);
        }
        Ok(())
    }

    pub fn finish(&self) -> PrCurve {
        let points = self
            .counts
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.config.thresholds)
                    .map(|(c, &threshold)| PrPoint {
                        threshold,
                        counts: *c,
                        precision: ratio(c.tp, c.tp + c.fp),
                        recall: ratio(c.tp, c.tp + c.fn_),
                    })
                    .collect()
            })
            .collect();
        PrCurve {
            slacks: self.config.slacks.clone(),
            thresholds: self.config.thresholds.clone(),
            points,
        }
    }
}

pub fn pr_curve<T: Real>(heatmaps: &[Tensor<T>], gt_masks: &[Tensor<T>], config: &EvalConfig) -> Result<PrCurve> {
    contract!(
        heatmaps.len() == gt_masks.len(),
        "{} heatmaps but {} ground-truth masks",
        heatmaps.len(),
        gt_masks.len()
    );
    let mut acc = PrAccumulator::new(config.clone())?;
    for (h, g) in heatmaps.iter().zip(gt_masks) {
        acc.add(h, g)?;
    }
    Ok(acc.finish())
}

/// Trapezoid area under (recall, precision) points ordered by decreasing
/// threshold, starting from recall 0 at the first point's precision.
///
/// A threshold of 0 marks every pixel positive whatever the heatmap, so that
/// operating point is left out of the area.
pub fn average_precision_points(points: &[PrPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .rev()
        .filter(|p| p.threshold > 0.0)
        .map(|p| (p.recall, p.precision))
        .collect();
    if pts.is_empty() {
        return 0.0;
    }
    pts.insert(0, (0.0, pts[0].1));
    let area: f64 = pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    area.clamp(0.0, 1.0)
}

pub fn average_precision(curve: &PrCurve, slack: usize) -> Option<f64> {
    curve.for_slack(slack).map(average_precision_points)
}
