//! Task views of generated sequences: network inputs and targets per frame.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::spec::Task;
use crate::error::{contract, Result};
use crate::simgen::dataset::Sequence;
use crate::simgen::hash::mix;
use crate::tensor::{Shape, Tensor};

/// One sequence prepared for a task. Inputs are planar `C×H×W` bytes mapped
/// by `byte·scale + offset` (RGB to [−0.5, 0.5], one-hot unchanged); targets
/// are 0/1 bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSequence {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub has_liquid: bool,
    inputs: Vec<Vec<u8>>,
    targets: Vec<Vec<u8>>,
    scale: f32,
    offset: f32,
}

impl TaskSequence {
    pub fn from_sequence(task: Task, seq: &Sequence) -> Self {
        let (h, w) = (seq.height, seq.width);
        let n = h * w;
        let (inputs, scale, offset) = match task {
            Task::Detection => {
                let planar = seq
                    .frames
                    .iter()
                    .map(|rgb| {
                        let mut out = vec![0u8; 3 * n];
                        for i in 0..n {
                            for c in 0..3 {
                                out[c * n + i] = rgb[3 * i + c];
                            }
                        }
                        out
                    })
                    .collect();
                (planar, 1.0 / 255.0, -0.5)
            }
            Task::Tracking => {
                let onehot = seq
                    .labels
                    .iter()
                    .map(|l| {
                        let mut out = vec![0u8; 4 * n];
                        for (i, &v) in l.visible.iter().enumerate() {
                            out[v as usize * n + i] = 1;
                        }
                        out
                    })
                    .collect();
                (onehot, 1.0, 0.0)
            }
        };
        let targets = seq
            .labels
            .iter()
            .map(|l| match task {
                Task::Detection => l.visible_liquid().map(u8::from).collect(),
                Task::Tracking => l.liquid.clone(),
            })
            .collect();
        TaskSequence {
            height: h,
            width: w,
            channels: task.input_channels(),
            has_liquid: seq.scenario.has_liquid,
            inputs,
            targets,
            scale,
            offset,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn target_bytes(&self, t: usize) -> &[u8] {
        &self.targets[t]
    }

    pub fn positive_count(&self, t: usize) -> usize {
        self.targets[t].iter().filter(|&&v| v != 0).count()
    }

    /// Input window `[y0, y0+h) × [x0, x0+w)` of frame `t` as a `1×C×h×w` tensor.
    pub fn input_crop(&self, t: usize, y0: usize, x0: usize, h: usize, w: usize) -> Tensor {
        let src = &self.inputs[t];
        let plane = self.height * self.width;
        Tensor::from_fn(Shape::new(1, self.channels, h, w), |_, c, y, x| {
            src[c * plane + (y0 + y) * self.width + x0 + x] as f32 * self.scale + self.offset
        })
    }

    pub fn target_crop(&self, t: usize, y0: usize, x0: usize, h: usize, w: usize) -> Tensor {
        let src = &self.targets[t];
        Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, y, x| src[(y0 + y) * self.width + x0 + x] as f32)
    }

    pub fn input(&self, t: usize) -> Tensor {
        self.input_crop(t, 0, 0, self.height, self.width)
    }

    pub fn target(&self, t: usize) -> Tensor {
        self.target_crop(t, 0, 0, self.height, self.width)
    }

    pub fn inputs(&self) -> Vec<Tensor> {
        (0..self.len()).map(|t| self.input(t)).collect()
    }

    pub fn targets(&self) -> Vec<Tensor> {
        (0..self.len()).map(|t| self.target(t)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset {
    pub task: Task,
    pub sequences: Vec<TaskSequence>,
}

impl TaskDataset {
    pub fn new(task: Task, sequences: &[Sequence]) -> Result<Self> {
        contract!(!sequences.is_empty(), "dataset has no sequences");
        let ds = TaskDataset {
            task,
            sequences: sequences.iter().map(|s| TaskSequence::from_sequence(task, s)).collect(),
        };
        let (h, w) = (ds.sequences[0].height, ds.sequences[0].width);
        contract!(
            ds.sequences.iter().all(|s| s.height == h && s.width == w && !s.is_empty()),
            "sequences differ in frame size or are empty"
        );
        Ok(ds)
    }

    pub fn frame_size(&self) -> (usize, usize) {
        (self.sequences[0].height, self.sequences[0].width)
    }
}

/// Splits sequence indices into (train, validation), separately for liquid
/// and liquid-free sequences so both sides see negatives. Deterministic in `seed`.
pub fn split_sequences(has_liquid: &[bool], validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x5911));
    let mut train = Vec::new();
    let mut val = Vec::new();
    for want in [true, false] {
        let mut idx: Vec<usize> = (0..has_liquid.len()).filter(|&i| has_liquid[i] == want).collect();
        idx.shuffle(&mut rng);
        let mut n_val = (idx.len() as f64 * validation_fraction).round() as usize;
        if idx.len() >= 2 {
            n_val = n_val.clamp(1, idx.len() - 1);
        }
        val.extend_from_slice(&idx[..n_val.min(idx.len())]);
        train.extend_from_slice(&idx[n_val.min(idx.len())..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified_and_disjoint() {
        let liquid: Vec<bool> = (0..20).map(|i| i % 5 != 0).collect();
        let (train, val) = split_sequences(&liquid, 0.25, 3);
        assert_eq!(train.len() + val.len(), 20);
        assert!(train.iter().all(|i| !val.contains(i)));
        assert_eq!(val.iter().filter(|&&i| !liquid[i]).count(), 1);
        assert_eq!((train.clone(), val.clone()), split_sequences(&liquid, 0.25, 3));
    }
}
