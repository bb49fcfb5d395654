//! Browser bindings: simulate and render a pour, inspect its labels, and
//! explore slack-tolerant matching and precision/recall on a frame.
//!
//! Images cross the boundary as row-major RGBA bytes ready for `ImageData`.

use liquidnet::eval::pr::{average_precision_points, default_thresholds, PrAccumulator};
use liquidnet::eval::slack::{max_filter, slack_confusion_mask};
use liquidnet::eval::{Confusion, EvalConfig, Target};
use liquidnet::simgen::dataset::{generate_sequence, Sequence};
use liquidnet::simgen::hash::unit;
use liquidnet::simgen::raster::{LabelRaster, VisibleClass};
use liquidnet::simgen::render::RenderSettings;
use liquidnet::simgen::scenario::{DEFAULT_FPS, FILL_LEVELS};
use liquidnet::simgen::{BowlShape, CupShape, PourProfile, Scenario};
use wasm_bindgen::prelude::*;

pub const SLACKS: [usize; 4] = [0, 1, 2, 4];

fn pick<T: Copy>(all: &[T], i: u32, what: &str) -> Result<T, String> {
    all.get(i as usize)
        .copied()
        .ok_or_else(|| format!("{what} index {i} out of range 0..{}", all.len()))
}

/// What the label canvas shows.
#[wasm_bindgen]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelView {
    /// Frontmost object per pixel, occluded liquid highlighted.
    Classes = 0,
    /// Visible liquid only.
    Detection = 1,
    /// All liquid, occluded included.
    Tracking = 2,
}

const COLORS: [[u8; 3]; 4] = [[40, 40, 48], [176, 120, 72], [90, 110, 190], [80, 220, 230]];
const OCCLUDED: [u8; 3] = [240, 60, 200];

pub fn label_rgba(label: &LabelRaster, view: LabelView) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * label.len());
    for i in 0..label.len() {
        let vis = label.visible[i];
        let liquid = label.liquid[i] != 0;
        let rgb = match view {
            LabelView::Classes if liquid && vis != VisibleClass::Liquid as u8 => OCCLUDED,
            LabelView::Classes => COLORS[vis as usize],
            LabelView::Detection if vis == VisibleClass::Liquid as u8 => [255; 3],
            LabelView::Tracking if liquid => [255; 3],
            _ => [0; 3],
        };
        out.extend_from_slice(&[rgb[0], rgb[1], rgb[2], 255]);
    }
    out
}

fn rgb_to_rgba(rgb: &[u8]) -> Vec<u8> {
    rgb.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

/// A simulated, labelled and rendered pouring sequence.
#[wasm_bindgen]
pub struct Scene {
    seq: Sequence,
}

#[wasm_bindgen]
impl Scene {
    /// Indices select from the cup, bowl, fill and pour-profile lists in
    /// their declaration order.
    #[wasm_bindgen(constructor)]
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cup: u32,
        bowl: u32,
        fill: u32,
        profile: u32,
        background: u32,
        seed: u64,
        frames: usize,
        width: usize,
        height: usize,
    ) -> Result<Scene, String> {
        let has_liquid = fill > 0;
        let scenario = Scenario {
            cup_shape: pick(&CupShape::ALL, cup, "cup")?,
            bowl_shape: pick(&BowlShape::ALL, bowl, "bowl")?,
            fill_fraction: if has_liquid { pick(&FILL_LEVELS, fill - 1, "fill")? } else { 0.0 },
            pour_profile: pick(&PourProfile::ALL, profile, "profile")?,
            background_id: background,
            has_liquid,
            seed,
            duration_frames: frames,
            fps: DEFAULT_FPS,
        };
        let seq = generate_sequence(&scenario, height, width, &RenderSettings::default()).map_err(|e| e.to_string())?;
        Ok(Scene { seq })
    }

    pub fn frames(&self) -> usize {
        self.seq.len()
    }

    pub fn width(&self) -> usize {
        self.seq.width
    }

    pub fn height(&self) -> usize {
        self.seq.height
    }

    /// Rendered camera frame.
    pub fn image(&self, t: usize) -> Vec<u8> {
        rgb_to_rgba(&self.seq.frames[self.clamp(t)])
    }

    pub fn labels(&self, t: usize, view: LabelView) -> Vec<u8> {
        label_rgba(&self.seq.labels[self.clamp(t)], view)
    }

    /// `[visible liquid, occluded liquid]` pixel counts.
    pub fn liquid_counts(&self, t: usize) -> Vec<u32> {
        let l = &self.seq.labels[self.clamp(t)];
        vec![l.visible_liquid_count() as u32, l.occluded_liquid_count() as u32]
    }

    /// Ground truth of frame `t` for the detection (visible) or tracking
    /// (all liquid) target, one byte per pixel.
    pub fn target_mask(&self, t: usize, tracking: bool) -> Vec<u8> {
        let l = &self.seq.labels[self.clamp(t)];
        if tracking {
            l.liquid.clone()
        } else {
            l.visible_liquid().map(u8::from).collect()
        }
    }

    fn clamp(&self, t: usize) -> usize {
        t.min(self.seq.len() - 1)
    }
}

/// Per-pixel outcome of slack matching.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Outcome {
    Negative = 0,
    TruePositive = 1,
    FalsePositive = 2,
    /// Truth pixel with no prediction within the slack.
    Missed = 3,
    /// Truth pixel reached by some prediction within the slack.
    Reached = 4,
}

/// Slack matching of two painted masks.
#[wasm_bindgen]
pub struct SlackView {
    outcomes: Vec<u8>,
    counts: Confusion,
}

#[wasm_bindgen]
impl SlackView {
    #[wasm_bindgen(constructor)]
    pub fn new(pred: &[u8], gt: &[u8], width: usize, height: usize, slack: usize) -> Result<SlackView, String> {
        let n = width * height;
        if pred.len() != n || gt.len() != n {
            return Err(format!("masks must have {width}x{height} = {n} pixels"));
        }
        let pred: Vec<bool> = pred.iter().map(|&v| v != 0).collect();
        let gt: Vec<bool> = gt.iter().map(|&v| v != 0).collect();
        let gt_d = max_filter(&gt, width, height, slack);
        let pred_d = max_filter(&pred, width, height, slack);
        let outcomes = (0..n)
            .map(|i| {
                let o = match (pred[i], gt[i]) {
                    (true, _) if gt_d[i] => Outcome::TruePositive,
                    (true, _) => Outcome::FalsePositive,
                    (false, true) if pred_d[i] => Outcome::Reached,
                    (false, true) => Outcome::Missed,
                    (false, false) => Outcome::Negative,
                };
                o as u8
            })
            .collect();
        Ok(SlackView {
            outcomes,
            counts: slack_confusion_mask(&pred, &gt, width, height, slack),
        })
    }

    /// One [`Outcome`] code per pixel.
    pub fn outcomes(&self) -> Vec<u8> {
        self.outcomes.clone()
    }

    pub fn tp(&self) -> u32 {
        self.counts.tp as u32
    }

    pub fn fp(&self) -> u32 {
        self.counts.fp as u32
    }

    pub fn fn_count(&self) -> u32 {
        self.counts.fn_ as u32
    }

    pub fn precision(&self) -> f64 {
        self.counts.precision()
    }

    pub fn recall(&self) -> f64 {
        self.counts.recall()
    }
}

/// Stand-in heatmap for a ground-truth mask: a box blur of radius `blur`,
/// shifted right by `shift` pixels, plus deterministic uniform noise of
/// amplitude `noise`, clamped to [0, 1].
pub fn synthetic_heatmap(gt: &[u8], width: usize, height: usize, blur: usize, shift: usize, noise: f64, seed: u64) -> Vec<f64> {
    let r = blur as isize;
    let mut heat = vec![0.0; width * height];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let (mut sum, mut count) = (0.0f64, 0.0f64);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sy, sx) = (y + dy, x + dx - shift as isize);
                    if sy >= 0 && sx >= 0 && (sy as usize) < height && (sx as usize) < width {
                        sum += gt[sy as usize * width + sx as usize] as f64;
                        count += 1.0;
                    }
                }
            }
            let i = y as usize * width + x as usize;
            let jitter = noise * (unit(&[seed, i as u64]) - 0.5) * 2.0;
            heat[i] = (sum / count.max(1.0) + jitter).clamp(0.0, 1.0);
        }
    }
    heat
}

/// Precision/recall curves of a heatmap at each of [`SLACKS`].
#[wasm_bindgen]
pub struct PrView {
    heat: Vec<f64>,
    precision: Vec<Vec<f64>>,
    recall: Vec<Vec<f64>>,
    ap: Vec<f64>,
}

#[wasm_bindgen]
impl PrView {
    #[wasm_bindgen(constructor)]
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gt: &[u8],
        width: usize,
        height: usize,
        blur: usize,
        shift: usize,
        noise: f64,
        seed: u64,
    ) -> Result<PrView, String> {
        if gt.len() != width * height {
            return Err(format!("mask must have {} pixels", width * height));
        }
        let heat = synthetic_heatmap(gt, width, height, blur, shift, noise, seed);
        let config = EvalConfig {
            slacks: SLACKS.to_vec(),
            thresholds: default_thresholds(),
            target: Target::AllLiquid,
        };
        let mut acc = PrAccumulator::new(config).map_err(|e| e.to_string())?;
        let truth: Vec<bool> = gt.iter().map(|&v| v != 0).collect();
        acc.add_plane(&heat, &truth, width, height);
        let curve = acc.finish();
        Ok(PrView {
            precision: curve.points.iter().map(|ps| ps.iter().map(|p| p.precision).collect()).collect(),
            recall: curve.points.iter().map(|ps| ps.iter().map(|p| p.recall).collect()).collect(),
            ap: curve.points.iter().map(|ps| average_precision_points(ps)).collect(),
            heat,
        })
    }

    pub fn slacks(&self) -> Vec<u32> {
        SLACKS.iter().map(|&s| s as u32).collect()
    }

    /// Precision per threshold (0.00 to 1.00) for the `i`-th slack.
    pub fn precision(&self, i: usize) -> Vec<f64> {
        self.precision[i].clone()
    }

    pub fn recall(&self, i: usize) -> Vec<f64> {
        self.recall[i].clone()
    }

    pub fn average_precision(&self, i: usize) -> f64 {
        self.ap[i]
    }

    /// The heatmap as grey RGBA.
    pub fn heatmap(&self) -> Vec<u8> {
        self.heat
            .iter()
            .flat_map(|&v| {
                let g = (v * 255.0).round() as u8;
                [g, g, g, 255]
            })
            .collect()
    }
}
