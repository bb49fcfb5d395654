//! Synthetic pouring sequences: particle simulation, labels and rendering.

pub mod dataset;
pub mod geometry;
pub mod hash;
pub mod raster;
pub mod render;
pub mod scenario;
pub mod sim;

pub use scenario::{BowlShape, CupShape, PourProfile, Scenario};
pub use sim::{simulate_pour, Particle, SimState, Simulator};
pub use raster::{make_segmented_input, rasterize_labels, LabelRaster, VisibleClass};
pub use render::{render_frame, Image, RenderSettings};
pub use dataset::{generate_dataset, generate_sequence, load_dataset, DatasetConfig, Sequence, SequenceManifest};
