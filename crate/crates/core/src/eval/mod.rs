//! Slack-tolerant precision/recall evaluation and comparison reports.

pub mod pr;
pub mod report;
pub mod slack;

pub use pr::{average_precision, pr_curve, EvalConfig, PrAccumulator, PrCurve, PrPoint, Target};
pub use slack::{slack_confusion, Confusion};
