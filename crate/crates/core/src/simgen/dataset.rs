//! Dataset generation and loading.
//!
//! Layout: `<root>/dataset.json` plus one `seq_XXXX/` directory per sequence
//! holding `frame_%04d.png` (RGB), `label_%04d.png` (RGBA) and `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, read_png, write_json, write_png, PixelFormat};
use crate::simgen::geometry::SceneGeometry;
use crate::simgen::hash::mix;
use crate::simgen::raster::{rasterize_labels, LabelRaster, SPLAT_RADIUS};
use crate::simgen::render::{render_frame, RenderSettings};
use crate::simgen::scenario::{negative_mask, Scenario};
use crate::simgen::sim::{simulate_pour, SUBSTEPS};

pub const DATASET_FORMAT: &str = "liquidnet-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_sequences: usize,
    pub negative_fraction: f64,
    pub height: usize,
    pub width: usize,
    pub duration_frames: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_sequences: 40,
            negative_fraction: 0.2,
            height: 48,
            width: 64,
            duration_frames: 90,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_sequences == 0 {
            problems.push("n_sequences must be positive".to_string());
        }
        if !(0.0..=1.0).contains(&self.negative_fraction) {
            problems.push(format!("negative_fraction {} must lie in [0, 1]", self.negative_fraction));
        }
        if self.height < 8 || self.width < 8 {
            problems.push(format!("frame size {}×{} is below 8×8", self.width, self.height));
        }
        if self.duration_frames == 0 {
            problems.push("duration_frames must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Scenarios in sequence order; seeds derive from (config seed, index).
    pub fn scenarios(&self) -> Vec<Scenario> {
        negative_mask(self.n_sequences, self.negative_fraction, self.seed)
            .into_iter()
            .enumerate()
            .map(|(i, negative)| Scenario::sample(mix(self.seed, i as u64), !negative, self.duration_frames))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub image: String,
    pub label: String,
    pub visible_liquid_pixels: usize,
    pub total_liquid_pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub format_version: u32,
    pub scenario: Scenario,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub substeps: usize,
    pub splat_radius: f64,
    pub render: RenderSettings,
    pub frames: Vec<FrameEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub dir: String,
    pub has_liquid: bool,
    pub frame_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub format: String,
    pub format_version: u32,
    pub config: DatasetConfig,
    pub sequences: Vec<SequenceEntry>,
}

/// One sequence held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub scenario: Scenario,
    pub width: usize,
    pub height: usize,
    /// Interleaved 8-bit RGB per frame.
    pub frames: Vec<Vec<u8>>,
    pub labels: Vec<LabelRaster>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Simulates, labels and renders one scenario.
pub fn generate_sequence(scenario: &Scenario, height: usize, width: usize, settings: &RenderSettings) -> Result<Sequence> {
    scenario.validate()?;
    let geometry = SceneGeometry::new(scenario);
    let mut frames = Vec::with_capacity(scenario.duration_frames);
    let mut labels = Vec::with_capacity(scenario.duration_frames);
    for (t, state) in simulate_pour(scenario).iter().enumerate() {
        let label = rasterize_labels(state, &geometry, height, width);
        frames.push(render_frame(&label, &geometry, state.tilt, scenario, t, settings).to_rgb8());
        labels.push(label);
    }
    Ok(Sequence {
        scenario: scenario.clone(),
        width,
        height,
        frames,
        labels,
    })
}

fn sequence_dir_name(i: usize) -> String {
    format!("seq_{i:04}")
}

fn write_sequence(dir: &Path, seq: &Sequence, settings: &RenderSettings) -> Result<SequenceManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(seq.len());
    for (t, (rgb, label)) in seq.frames.iter().zip(&seq.labels).enumerate() {
        let image = format!("frame_{t:04}.png");
        let label_name = format!("label_{t:04}.png");
        write_png(&dir.join(&image), seq.width, seq.height, PixelFormat::Rgb, rgb)?;
        write_png(&dir.join(&label_name), seq.width, seq.height, PixelFormat::Rgba, &label.to_rgba())?;
        entries.push(FrameEntry {
            image,
            label: label_name,
            visible_liquid_pixels: label.visible_liquid_count(),
            total_liquid_pixels: label.liquid_count(),
        });
    }
    let manifest = SequenceManifest {
        format_version: FORMAT_VERSION,
        scenario: seq.scenario.clone(),
        width: seq.width,
        height: seq.height,
        frame_count: seq.len(),
        substeps: SUBSTEPS,
        splat_radius: SPLAT_RADIUS,
        render: *settings,
        frames: entries,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn staging_path(out_dir: &Path) -> Result<PathBuf> {
    let name = out_dir
        .file_name()
        .ok_or_else(|| Error::Config(format!("output path {} has no final component", out_dir.display())))?;
    let mut staged = name.to_os_string();
    staged.push(".partial");
    Ok(out_dir.with_file_name(staged))
}

/// Generates the dataset into `out_dir`, replacing a previous dataset there.
/// The tree is built in a sibling staging directory and renamed into place.
pub fn generate_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<Vec<SequenceManifest>> {
    config.validate()?;
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    if !parent.is_dir() {
        return Err(Error::Prerequisite(format!(
            "parent directory {} of the dataset output does not exist",
            parent.display()
        )));
    }
    if out_dir.exists() {
        let is_dataset = out_dir.join("dataset.json").is_file();
        let is_empty = fs::read_dir(out_dir).map_err(|e| Error::io(out_dir, e))?.next().is_none();
        if !is_dataset && !is_empty {
            return Err(Error::Prerequisite(format!(
                "{} exists and is not a dataset; refusing to overwrite it",
                out_dir.display()
            )));
        }
    }
    let staging = staging_path(out_dir)?;
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    let settings = RenderSettings::default();
    let mut manifests = Vec::with_capacity(config.n_sequences);
    let mut entries = Vec::with_capacity(config.n_sequences);
    for (i, scenario) in config.scenarios().iter().enumerate() {
        let seq = generate_sequence(scenario, config.height, config.width, &settings)?;
        let dir = sequence_dir_name(i);
        manifests.push(write_sequence(&staging.join(&dir), &seq, &settings)?);
        entries.push(SequenceEntry {
            dir,
            has_liquid: scenario.has_liquid,
            frame_count: seq.len(),
        });
    }
    let index = DatasetIndex {
        format: DATASET_FORMAT.into(),
        format_version: FORMAT_VERSION,
        config: config.clone(),
        sequences: entries,
    };
    write_json(&staging.join("dataset.json"), &index)?;
    if out_dir.exists() {
        fs::remove_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    fs::rename(&staging, out_dir).map_err(|e| Error::io(out_dir, e))?;
    Ok(manifests)
}

pub fn read_index(root: &Path) -> Result<DatasetIndex> {
    let path = root.join("dataset.json");
    if !path.is_file() {
        return Err(Error::Prerequisite(format!(
            "no dataset at {} (run gen-data first)",
            root.display()
        )));
    }
    let index: DatasetIndex = read_json(&path)?;
    if index.format != DATASET_FORMAT || index.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &path,
            format!("unsupported dataset {} v{}", index.format, index.format_version),
        ));
    }
    Ok(index)
}

/// Loads one sequence directory and checks it against its manifest.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let manifest_path = dir.join("manifest.json");
    let m: SequenceManifest = read_json(&manifest_path)?;
    if m.frames.len() != m.frame_count {
        return Err(Error::format(
            &manifest_path,
            format!("frame_count {} but {} entries", m.frame_count, m.frames.len()),
        ));
    }
    let mut frames = Vec::with_capacity(m.frame_count);
    let mut labels = Vec::with_capacity(m.frame_count);
    for e in &m.frames {
        let ip = dir.join(&e.image);
        let img = read_png(&ip)?;
        if (img.width, img.height, img.channels) != (m.width, m.height, 3) {
            return Err(Error::format(&ip, "frame is not an RGB image of the manifest size"));
        }
        let lp = dir.join(&e.label);
        let raw = read_png(&lp)?;
        if (raw.width, raw.height, raw.channels) != (m.width, m.height, 4) {
            return Err(Error::format(&lp, "label is not an RGBA image of the manifest size"));
        }
        let label = LabelRaster::from_rgba(m.width, m.height, &raw.pixels)
            .map_err(|e| Error::format(&lp, e.to_string()))?;
        if label.visible_liquid_count() != e.visible_liquid_pixels || label.liquid_count() != e.total_liquid_pixels {
            return Err(Error::format(&lp, "liquid pixel counts disagree with the manifest"));
        }
        frames.push(img.pixels);
        labels.push(label);
    }
    Ok(Sequence {
        scenario: m.scenario,
        width: m.width,
        height: m.height,
        frames,
        labels,
    })
}

pub fn load_dataset(root: &Path) -> Result<(DatasetIndex, Vec<Sequence>)> {
    let index = read_index(root)?;
    let seqs = index
        .sequences
        .iter()
        .map(|e| load_sequence(&root.join(&e.dir)))
        .collect::<Result<Vec<_>>>()?;
    Ok((index, seqs))
}
