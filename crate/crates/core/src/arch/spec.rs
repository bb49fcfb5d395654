use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "cnn")]
    SingleFrameCnn,
    #[serde(rename = "mf")]
    MultiFrameCnn,
    #[serde(rename = "lstm")]
    LstmCnn,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::SingleFrameCnn, Variant::MultiFrameCnn, Variant::LstmCnn];

    pub fn short_name(self) -> &'static str {
        match self {
            Variant::SingleFrameCnn => "cnn",
            Variant::MultiFrameCnn => "mf",
            Variant::LstmCnn => "lstm",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(Variant::SingleFrameCnn),
            "mf" => Ok(Variant::MultiFrameCnn),
            "lstm" => Ok(Variant::LstmCnn),
            _ => Err(Error::Config(format!("unknown network {s:?} (cnn|mf|lstm)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    /// Visible liquid from rendered RGB frames.
    #[serde(rename = "detect")]
    Detection,
    /// All liquid, occluded included, from one-hot segmented frames.
    #[serde(rename = "track")]
    Tracking,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Detection, Task::Tracking];

    pub fn short_name(self) -> &'static str {
        match self {
            Task::Detection => "detect",
            Task::Tracking => "track",
        }
    }

    pub fn input_channels(self) -> usize {
        match self {
            Task::Detection => 3,
            Task::Tracking => 4,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detect" => Ok(Task::Detection),
            "track" => Ok(Task::Tracking),
            _ => Err(Error::Config(format!("unknown task {s:?} (detect|track)"))),
        }
    }
}

/// Declarative description of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub variant: Variant,
    pub task: Task,
    /// Number of conv+relu+pool blocks on the frame input.
    pub tower_depth: usize,
    pub tower_channels: Vec<usize>,
    /// Square kernel of the tower convolutions (padding keeps size).
    pub kernel: usize,
    /// Width of the 1×1 convolution layers.
    pub head_channels: usize,
    pub lstm_hidden: usize,
    /// Frames consumed by the multi-frame network.
    pub window: usize,
    /// Backpropagation-through-time length of the LSTM network.
    pub unroll: usize,
    /// Conv blocks applied to the previous prediction before the LSTM.
    pub feedback_tower_depth: usize,
    pub feedback_channels: usize,
}

impl NetworkSpec {
    /// Small-scale defaults used throughout the workbench.
    pub fn desk(variant: Variant, task: Task) -> Self {
        let (tower_depth, tower_channels, unroll) = match task {
            Task::Detection => (5, vec![16, 16, 32, 32, 32], 16),
            Task::Tracking => (3, vec![16, 32, 32], 64),
        };
        NetworkSpec {
            variant,
            task,
            tower_depth,
            tower_channels,
            kernel: 3,
            head_channels: 64,
            lstm_hidden: 32,
            window: 8,
            unroll,
            feedback_tower_depth: 3,
            feedback_channels: 8,
        }
    }

    /// Desk channel widths with the full-scale window and unroll lengths.
    pub fn full_scale(variant: Variant, task: Task) -> Self {
        NetworkSpec {
            window: 32,
            unroll: match task {
                Task::Detection => 32,
                Task::Tracking => 180,
            },
            ..Self::desk(variant, task)
        }
    }

    pub fn input_channels(&self) -> usize {
        self.task.input_channels()
    }

    /// Total downsampling of the tower, which the deconvolution undoes.
    pub fn deconv_stride(&self) -> usize {
        1 << self.tower_depth
    }

    pub fn deconv_kernel(&self) -> usize {
        2 * self.deconv_stride()
    }

    /// Frames per training/evaluation sample for this variant.
    pub fn frames_per_sample(&self) -> usize {
        match self.variant {
            Variant::SingleFrameCnn => 1,
            Variant::MultiFrameCnn => self.window,
            Variant::LstmCnn => self.unroll,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.tower_depth == 0 {
            problems.push("tower_depth must be at least 1".to_string());
        }
        if self.tower_depth > 12 {
            problems.push(format!("tower_depth {} is unreasonably deep", self.tower_depth));
        }
        if self.tower_channels.len() != self.tower_depth {
            problems.push(format!(
                "tower_channels has {} entries but tower_depth is {}",
                self.tower_channels.len(),
                self.tower_depth
            ));
        }
        if self.tower_channels.iter().any(|&c| c == 0) {
            problems.push("tower_channels entries must be positive".to_string());
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            problems.push(format!("kernel {} must be odd", self.kernel));
        }
        if self.head_channels == 0 {
            problems.push("head_channels must be positive".to_string());
        }
        match self.variant {
            Variant::MultiFrameCnn if self.window == 0 => {
                problems.push("window must be positive".to_string())
            }
            Variant::LstmCnn => {
                if self.lstm_hidden == 0 {
                    problems.push("lstm_hidden must be positive".to_string());
                }
                if self.unroll == 0 {
                    problems.push("unroll must be positive".to_string());
                }
                if self.feedback_tower_depth == 0 || self.feedback_tower_depth > self.tower_depth {
                    problems.push(format!(
                        "feedback_tower_depth {} must lie in 1..={}",
                        self.feedback_tower_depth, self.tower_depth
                    ));
                }
                if self.feedback_channels == 0 {
                    problems.push("feedback_channels must be positive".to_string());
                }
            }
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(problems.join("; ")))
        }
    }
}
