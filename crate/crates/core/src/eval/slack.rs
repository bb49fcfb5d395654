//! Slack-tolerant confusion counts.
//!
//! A predicted positive is a true positive when some ground-truth positive
//! lies within Chebyshev distance `slack`; otherwise it is a false positive.
//! Symmetrically, a ground-truth positive is a false negative when no
//! predicted positive lies within `slack` of it.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    /// 1 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// 1 when there is nothing to find.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

impl std::ops::AddAssign for Confusion {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

pub(crate) fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Sliding maximum over a `(2r+1)²` square window, clipped at the borders.
pub fn max_filter<T: Copy + PartialOrd>(data: &[T], w: usize, h: usize, r: usize) -> Vec<T> {
    if r == 0 {
        return data.to_vec();
    }
    let mut rows = data.to_vec();
    for y in 0..h {
        for x in 0..w {
            let mut m = data[y * w + x];
            for nx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                let v = data[y * w + nx];
                if v > m {
                    m = v;
                }
            }
            rows[y * w + x] = m;
        }
    }
    let mut out = rows.clone();
    for y in 0..h {
        for x in 0..w {
            let mut m = rows[y * w + x];
            for ny in y.saturating_sub(r)..=(y + r).min(h - 1) {
                let v = rows[ny * w + x];
                if v > m {
                    m = v;
                }
            }
            out[y * w + x] = m;
        }
    }
    out
}

/// Confusion of two boolean planes of size `w × h`.
pub fn slack_confusion_mask(pred: &[bool], gt: &[bool], w: usize, h: usize, slack: usize) -> Confusion {
    assert_eq!(pred.len(), w * h);
    assert_eq!(gt.len(), w * h);
    let gt_d = max_filter(gt, w, h, slack);
    let pred_d = max_filter(pred, w, h, slack);
    let mut c = Confusion::default();
    for i in 0..w * h {
        if pred[i] {
            if gt_d[i] {
                c.tp += 1;
            } else {
                c.fp += 1;
            }
        }
        if gt[i] && !pred_d[i] {
            c.fn_ += 1;
        }
    }
    c
}

pub(crate) fn binary_planes<T: Real>(t: &Tensor<T>, what: &str) -> Result<Vec<Vec<bool>>> {
    let s = t.shape();
    contract!(s.c == 1, "{what} must have one channel, got {s}");
    let mut planes = Vec::with_capacity(s.n);
    for n in 0..s.n {
        let plane = t.plane(n, 0);
        contract!(
            plane.iter().all(|&v| v == T::zero() || v == T::one()),
            "{what} is not binary"
        );
        planes.push(plane.iter().map(|&v| v == T::one()).collect());
    }
    Ok(planes)
}

/// Confusion counts of binary single-channel tensors, summed over the batch.
pub fn slack_confusion<T: Real>(pred: &Tensor<T>, gt: &Tensor<T>, slack: usize) -> Result<Confusion> {
    contract!(
        pred.shape() == gt.shape(),
        "prediction {} and ground truth {} differ in shape",
        pred.shape(),
        gt.shape()
    );
    let s = pred.shape();
    let mut total = Confusion::default();
    for (p, g) in binary_planes(pred, "prediction")?.iter().zip(&binary_planes(gt, "ground truth")?) {
        total += slack_confusion_mask(p, g, s.w, s.h, slack);
    }
    Ok(total)
}
