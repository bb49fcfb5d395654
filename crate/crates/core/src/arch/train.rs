//! Two-phase training: crops around liquid first, then full frames.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::data::{TaskDataset, TaskSequence};
use crate::arch::network::{BpttOptions, InitMode, NetParams, Network};
use crate::arch::spec::Variant;
use crate::error::{contract, Error, Result};
use crate::eval::report::write_csv;
use crate::nn::sgd::{sgd_step, OptimizerConfig, OptimizerState};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub phase1_iters: usize,
    pub phase2_iters: usize,
    /// Phase-1 crop as `[height, width]`.
    pub crop_size: [usize; 2],
    pub batch: usize,
    pub optimizer: OptimizerConfig,
    /// Weight of positive pixels in the loss.
    pub pos_weight: f64,
    /// Share of phase-1 crops placed uniformly instead of on liquid.
    pub negative_crop_fraction: f64,
}

impl TrainConfig {
    pub fn desk(variant: Variant) -> Self {
        TrainConfig {
            phase1_iters: 600,
            phase2_iters: 400,
            crop_size: [32, 32],
            // every LSTM sample already spans `unroll` frames
            batch: if variant == Variant::LstmCnn { 1 } else { 4 },
            optimizer: OptimizerConfig {
                learning_rate: 0.05,
                momentum: 0.9,
                grad_clip_norm: (variant == Variant::LstmCnn).then_some(10.0),
            },
            // visible liquid covers a few percent of a frame
            pos_weight: 10.0,
            negative_crop_fraction: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.phase1_iters == 0 || self.phase2_iters == 0 {
            problems.push("phase1_iters and phase2_iters must be positive".to_string());
        }
        if self.batch == 0 {
            problems.push("batch must be positive".to_string());
        }
        if self.crop_size.contains(&0) {
            problems.push("crop_size entries must be positive".to_string());
        }
        if !(self.pos_weight > 0.0) {
            problems.push(format!("pos_weight {} must be positive", self.pos_weight));
        }
        if !(0.0..=1.0).contains(&self.negative_crop_fraction) {
            problems.push("negative_crop_fraction must lie in [0, 1]".to_string());
        }
        if let Err(e) = self.optimizer.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Crops,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub phase: Phase,
    /// Mean per-pixel loss (per timestep for the LSTM).
    pub loss: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.rows, &["iteration", "phase", "loss", "wall_ms"])
    }

    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }

    /// Mean loss over the first and last `k` iterations.
    pub fn window_means(&self, k: usize) -> (f64, f64) {
        let l = self.losses();
        let k = k.min(l.len()).max(1);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        (mean(&l[..k]), mean(&l[l.len() - k..]))
    }
}

/// Crop placement for one training sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub seq: usize,
    /// Frame the sample is anchored on (last frame for windows).
    pub frame: usize,
    pub y0: usize,
    pub x0: usize,
    pub h: usize,
    pub w: usize,
}

/// Draws phase-1 crops: mostly centred on a positive target pixel, the rest
/// uniform. Frames without liquid only ever yield uniform crops.
pub struct CropSampler<'a> {
    data: &'a TaskDataset,
    pool: &'a [usize],
    positives: Vec<(usize, usize)>,
    crop: (usize, usize),
    negative_fraction: f64,
}

impl<'a> CropSampler<'a> {
    pub fn new(data: &'a TaskDataset, pool: &'a [usize], crop: (usize, usize), negative_fraction: f64) -> Result<Self> {
        contract!(!pool.is_empty(), "no training sequences");
        let (fh, fw) = data.frame_size();
        contract!(
            crop.0 <= fh && crop.1 <= fw,
            "crop {}×{} exceeds frame {fw}×{fh}",
            crop.1,
            crop.0
        );
        let positives = pool
            .iter()
            .flat_map(|&s| (0..data.sequences[s].len()).map(move |t| (s, t)))
            .filter(|&(s, t)| data.sequences[s].positive_count(t) > 0)
            .collect();
        Ok(CropSampler {
            data,
            pool,
            positives,
            crop,
            negative_fraction,
        })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Window {
        let (fh, fw) = self.data.frame_size();
        let (ch, cw) = self.crop;
        let uniform = self.positives.is_empty() || rng.gen::<f64>() < self.negative_fraction;
        if uniform {
            let seq = self.pool[rng.gen_range(0..self.pool.len())];
            let frame = rng.gen_range(0..self.data.sequences[seq].len());
            return Window {
                seq,
                frame,
                y0: rng.gen_range(0..=fh - ch),
                x0: rng.gen_range(0..=fw - cw),
                h: ch,
                w: cw,
            };
        }
        let (seq, frame) = self.positives[rng.gen_range(0..self.positives.len())];
        let s = &self.data.sequences[seq];
        let k = rng.gen_range(0..s.positive_count(frame));
        let idx = s
            .target_bytes(frame)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .nth(k)
            .map(|(i, _)| i)
            .expect("positive pixel");
        let (py, px) = (idx / fw, idx % fw);
        Window {
            seq,
            frame,
            y0: py.saturating_sub(ch / 2).min(fh - ch),
            x0: px.saturating_sub(cw / 2).min(fw - cw),
            h: ch,
            w: cw,
        }
    }
}

fn full_window(data: &TaskDataset, pool: &[usize], rng: &mut ChaCha8Rng) -> Window {
    let (h, w) = data.frame_size();
    let seq = pool[rng.gen_range(0..pool.len())];
    Window {
        seq,
        frame: rng.gen_range(0..data.sequences[seq].len()),
        y0: 0,
        x0: 0,
        h,
        w,
    }
}

fn stack(items: Vec<Tensor>) -> Result<Tensor> {
    let refs: Vec<&Tensor> = items.iter().collect();
    Tensor::stack_batch(&refs)
}

/// Frames `[start, start + len)` under each window's crop, batched per step.
fn batched_frames(data: &TaskDataset, wins: &[Window], starts: &[usize], len: usize, targets: bool) -> Result<Vec<Tensor>> {
    (0..len)
        .map(|k| {
            stack(
                wins.iter()
                    .zip(starts)
                    .map(|(w, &s)| {
                        let seq: &TaskSequence = &data.sequences[w.seq];
                        let t = s + k;
                        if targets {
                            seq.target_crop(t, w.y0, w.x0, w.h, w.w)
                        } else {
                            seq.input_crop(t, w.y0, w.x0, w.h, w.w)
                        }
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Loss and gradients of one batch drawn from `wins`.
fn batch_step(
    net: &Network,
    data: &TaskDataset,
    wins: &[Window],
    pos_weight: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, NetParams)> {
    let spec = net.spec();
    match spec.variant {
        Variant::SingleFrameCnn => {
            let starts: Vec<usize> = wins.iter().map(|w| w.frame).collect();
            let x = batched_frames(data, wins, &starts, 1, false)?.remove(0);
            let y = batched_frames(data, wins, &starts, 1, true)?.remove(0);
            let (l, g) = net.loss_and_grads_single(&x, &y, pos_weight)?;
            Ok((l as f64, g))
        }
        Variant::MultiFrameCnn => {
            let win = spec.window;
            let frames = (0..win)
                .map(|k| {
                    stack(
                        wins.iter()
                            .map(|w| {
                                let t = (w.frame + k + 1).saturating_sub(win);
                                data.sequences[w.seq].input_crop(t, w.y0, w.x0, w.h, w.w)
                            })
                            .collect(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let starts: Vec<usize> = wins.iter().map(|w| w.frame).collect();
            let y = batched_frames(data, wins, &starts, 1, true)?.remove(0);
            let (l, g) = net.loss_and_grads_window(&frames, &y, pos_weight)?;
            Ok((l as f64, g))
        }
        Variant::LstmCnn => {
            let len = wins.iter().map(|w| data.sequences[w.seq].len()).min().expect("non-empty batch");
            let u = spec.unroll.min(len);
            // the anchor frame lies inside the unrolled span
            let starts: Vec<usize> = wins
                .iter()
                .map(|w| {
                    let back = rng.gen_range(0..u);
                    w.frame.saturating_sub(back).min(len - u)
                })
                .collect();
            let xs = batched_frames(data, wins, &starts, u, false)?;
            let ys = batched_frames(data, wins, &starts, u, true)?;
            let opts = BpttOptions {
                pos_weight,
                feedback_gradient: true,
            };
            let (l, mut g) = net.backward_through_time(&xs, &ys, InitMode::GroundTruthFirst, &opts)?;
            g.scale(1.0 / u as f32);
            Ok((l as f64 / u as f64, g))
        }
    }
}

/// Trains `net` on sequences `pool` of `data`. `seed` fixes sampling;
/// `on_phase_end` runs after each phase with the current weights.
pub fn train(
    net: &mut Network,
    data: &TaskDataset,
    pool: &[usize],
    config: &TrainConfig,
    seed: u64,
    mut on_phase_end: impl FnMut(Phase, &Network) -> Result<()>,
) -> Result<TrainingLog> {
    config.validate()?;
    contract!(
        data.task == net.spec().task,
        "dataset is for task {} but the network is for {}",
        data.task,
        net.spec().task
    );
    contract!(!pool.is_empty(), "no training sequences");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = OptimizerState::new(config.optimizer.clone());
    let crop = (config.crop_size[0], config.crop_size[1]);
    let sampler = CropSampler::new(data, pool, crop, config.negative_crop_fraction)?;
    let started = Instant::now();
    let mut log = TrainingLog::default();
    let mut iteration = 0;
    for (phase, iters) in [(Phase::Crops, config.phase1_iters), (Phase::Full, config.phase2_iters)] {
        for _ in 0..iters {
            let wins: Vec<Window> = (0..config.batch)
                .map(|_| match phase {
                    Phase::Crops => sampler.sample(&mut rng),
                    Phase::Full => full_window(data, pool, &mut rng),
                })
                .collect();
            let (loss, grads) = batch_step(net, data, &wins, config.pos_weight, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Contract(format!("loss diverged at iteration {iteration}")));
            }
            {
                let g_slots = grads.slots();
                let g: Vec<&[f32]> = g_slots.iter().map(|s| s.data).collect();
                let mut p_slots = net.params.slots_mut();
                let mut p: Vec<&mut [f32]> = p_slots.iter_mut().map(|s| &mut *s.data).collect();
                sgd_step(&mut p, &g, &mut opt)?;
            }
            log.rows.push(LogRow {
                iteration,
                phase,
                loss,
                wall_ms: started.elapsed().as_millis() as u64,
            });
            iteration += 1;
        }
        on_phase_end(phase, net)?;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::spec::{NetworkSpec, Task};
    use crate::simgen::dataset::{generate_sequence, DatasetConfig};
    use crate::simgen::render::RenderSettings;

    fn toy(n: usize, frames: usize) -> TaskDataset {
        let cfg = DatasetConfig {
            n_sequences: n,
            negative_fraction: 0.0,
            duration_frames: frames,
            ..DatasetConfig::default()
        };
        let seqs: Vec<_> = cfg
            .scenarios()
            .iter()
            .map(|s| generate_sequence(s, 48, 64, &RenderSettings::default()).unwrap())
            .collect();
        TaskDataset::new(Task::Detection, &seqs).unwrap()
    }

    #[test]
    fn empty_frames_yield_only_uniform_crops() {
        let mut data = toy(1, 4);
        let mut seq = data.sequences[0].clone();
        seq.has_liquid = false;
        let blank = crate::simgen::dataset::Sequence {
            scenario: crate::simgen::scenario::Scenario::sample(1, false, 4),
            width: 64,
            height: 48,
            frames: vec![vec![0; 64 * 48 * 3]; 4],
            labels: vec![
                crate::simgen::raster::LabelRaster {
                    width: 64,
                    height: 48,
                    cup: vec![0; 3072],
                    bowl: vec![0; 3072],
                    liquid: vec![0; 3072],
                    visible: vec![0; 3072],
                };
                4
            ],
        };
        data.sequences = vec![TaskSequence::from_sequence(Task::Detection, &blank)];
        let pool = [0];
        let s = CropSampler::new(&data, &pool, (32, 32), 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let w = s.sample(&mut rng);
            assert_eq!(data.sequences[0].target_crop(w.frame, w.y0, w.x0, 32, 32).sum(), 0.0);
        }
    }

    #[test]
    fn positive_crops_contain_liquid() {
        let data = toy(2, 40);
        let pool = [0, 1];
        let s = CropSampler::new(&data, &pool, (32, 32), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let w = s.sample(&mut rng);
            assert!(data.sequences[w.seq].target_crop(w.frame, w.y0, w.x0, 32, 32).sum() > 0.0);
        }
    }

    #[test]
    fn oversized_crop_is_rejected() {
        let data = toy(1, 2);
        assert!(CropSampler::new(&data, &[0], (64, 64), 0.1).is_err());
    }

    #[test]
    fn training_is_reproducible_and_reduces_loss() {
        let data = toy(3, 30);
        let pool = [0, 1, 2];
        for v in Variant::ALL {
            let mut spec = NetworkSpec::desk(v, Task::Detection);
            spec.unroll = 4;
            spec.window = 3;
            let mut cfg = TrainConfig::desk(v);
            cfg.phase1_iters = 30;
            cfg.phase2_iters = 10;
            cfg.batch = 2;
            let run = || {
                let mut net = Network::new(spec.clone(), 5).unwrap();
                let log = train(&mut net, &data, &pool, &cfg, 9, |_, _| Ok(())).unwrap();
                (net, log)
            };
            let (a, la) = run();
            let (b, lb) = run();
            assert_eq!(a, b, "{v}");
            assert_eq!(la.losses(), lb.losses());
            let (first, last) = la.window_means(10);
            assert!(last < first, "{v}: {first} -> {last}");
        }
    }
}
