//! Config-driven pipeline: generate data, train, evaluate, plot.
//!
//! Output layout under `out_dir`:
//! `data/` dataset tree, `split.json`, `checkpoints/{task}_{net}.ckpt`,
//! `logs/{task}_{net}.csv`, `eval/{task}/` reports and heatmaps, `plots/`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::{split_sequences, train, NetworkSpec, Network, Task, TaskDataset, TrainConfig, TrainingLog, Variant};
use crate::error::{Error, Result};
use crate::eval::report::{compare_report, plot_report, read_report, NamedCurve, NegativeRow, ReportFiles, REPORT_CSV};
use crate::eval::{EvalConfig, PrAccumulator, Target};
use crate::io::{create_dir_all, write_json, write_png, PixelFormat};
use crate::simgen::dataset::{generate_dataset, load_dataset, read_index, DatasetConfig, DatasetIndex};
use crate::simgen::hash::mix;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub n_sequences: usize,
    pub negative_fraction: f64,
    pub height: usize,
    pub width: usize,
    pub duration_frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkEntry {
    pub spec: NetworkSpec,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub slacks: Vec<usize>,
    pub thresholds: Vec<f64>,
    /// Heatmap cut used for false-positive rates on liquid-free sequences.
    pub negative_threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    /// Fixes dataset bytes, the split, initial weights and sampling.
    pub seed: u64,
    /// Relative paths resolve against the config file's directory.
    pub out_dir: PathBuf,
    /// Share of sequences held out for evaluation, in (0, 1).
    pub validation_fraction: f64,
    pub dataset: DataSection,
    pub networks: Vec<NetworkEntry>,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    /// Desk-scale setup with all six (network, task) pairs.
    pub fn desk(out_dir: impl Into<PathBuf>) -> Self {
        let defaults = DatasetConfig::default();
        let networks = Task::ALL
            .iter()
            .flat_map(|&t| {
                Variant::ALL.iter().map(move |&v| NetworkEntry {
                    spec: NetworkSpec::desk(v, t),
                    train: TrainConfig::desk(v),
                })
            })
            .collect();
        let eval = EvalConfig::new(Target::VisibleLiquid);
        ExperimentConfig {
            format_version: CONFIG_VERSION,
            seed: 0,
            out_dir: out_dir.into(),
            validation_fraction: 0.2,
            dataset: DataSection {
                n_sequences: defaults.n_sequences,
                negative_fraction: defaults.negative_fraction,
                height: defaults.height,
                width: defaults.width,
                duration_frames: defaults.duration_frames,
            },
            networks,
            eval: EvalSection {
                slacks: eval.slacks,
                thresholds: eval.thresholds,
                negative_threshold: 0.5,
            },
        }
    }

    /// Reads and validates a config file, resolving `out_dir` against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.out_dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new(""));
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.format_version != CONFIG_VERSION {
            problems.push(format!(
                "format_version {} is not supported (expected {CONFIG_VERSION})",
                self.format_version
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            problems.push(format!("validation_fraction {} must lie in (0, 1)", self.validation_fraction));
        }
        if let Err(e) = self.dataset_config().validate() {
            problems.push(e.to_string());
        }
        for (i, n) in self.networks.iter().enumerate() {
            let tag = format!("networks[{i}] ({} {})", n.spec.task, n.spec.variant);
            if let Err(e) = n.spec.validate() {
                problems.push(format!("{tag}: {e}"));
            }
            if let Err(e) = n.train.validate() {
                problems.push(format!("{tag}: {e}"));
            }
            let crop = n.train.crop_size;
            if crop[0] > self.dataset.height || crop[1] > self.dataset.width {
                problems.push(format!("{tag}: crop {}×{} exceeds the frame size", crop[1], crop[0]));
            }
            if self.networks[..i]
                .iter()
                .any(|m| (m.spec.variant, m.spec.task) == (n.spec.variant, n.spec.task))
            {
                problems.push(format!("{tag}: duplicate entry"));
            }
            if n.spec.variant == Variant::LstmCnn {
                match self.entry(Variant::SingleFrameCnn, n.spec.task) {
                    None => problems.push(format!("{tag}: needs a cnn entry for the same task to initialise from")),
                    Some(c) if !same_tower(&c.spec, &n.spec) => {
                        problems.push(format!("{tag}: tower differs from the cnn entry it initialises from"))
                    }
                    _ => {}
                }
            }
        }
        if let Err(e) = self.eval_config(Task::Detection).validate() {
            problems.push(format!("eval: {e}"));
        }
        if !(0.0..=1.0).contains(&self.eval.negative_threshold) {
            problems.push("eval.negative_threshold must lie in [0, 1]".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            n_sequences: self.dataset.n_sequences,
            negative_fraction: self.dataset.negative_fraction,
            height: self.dataset.height,
            width: self.dataset.width,
            duration_frames: self.dataset.duration_frames,
            seed: self.seed,
        }
    }

    pub fn eval_config(&self, task: Task) -> EvalConfig {
        EvalConfig {
            slacks: self.eval.slacks.clone(),
            thresholds: self.eval.thresholds.clone(),
            target: target_for(task),
        }
    }

    fn entry(&self, variant: Variant, task: Task) -> Option<&NetworkEntry> {
        self.networks
            .iter()
            .find(|n| n.spec.variant == variant && n.spec.task == task)
    }

    pub fn network(&self, variant: Variant, task: Task) -> Result<&NetworkEntry> {
        self.entry(variant, task)
            .ok_or_else(|| Error::Config(format!("config has no network entry for {variant} on {task}")))
    }

    pub fn layout(&self) -> Layout {
        Layout {
            root: self.out_dir.clone(),
        }
    }

    /// Seed of the initial weights of one network.
    pub fn init_seed(&self, variant: Variant, task: Task) -> u64 {
        mix(mix(self.seed, 0x1417), pair_key(variant, task))
    }

    /// Seed of the crop/window sampling of one training run.
    pub fn train_seed(&self, variant: Variant, task: Task) -> u64 {
        mix(mix(self.seed, 0x7a19), pair_key(variant, task))
    }

    /// Sequence indices held out for evaluation (and the rest for training).
    pub fn split(&self, index: &DatasetIndex) -> (Vec<usize>, Vec<usize>) {
        let liquid: Vec<bool> = index.sequences.iter().map(|s| s.has_liquid).collect();
        split_sequences(&liquid, self.validation_fraction, self.seed)
    }
}

fn pair_key(variant: Variant, task: Task) -> u64 {
    let v = Variant::ALL.iter().position(|&x| x == variant).expect("known variant") as u64;
    let t = Task::ALL.iter().position(|&x| x == task).expect("known task") as u64;
    1 + 4 * t + v
}

fn same_tower(a: &NetworkSpec, b: &NetworkSpec) -> bool {
    (a.task, a.tower_depth, &a.tower_channels, a.kernel) == (b.task, b.tower_depth, &b.tower_channels, b.kernel)
}

pub fn target_for(task: Task) -> Target {
    match task {
        Task::Detection => Target::VisibleLiquid,
        Task::Tracking => Target::AllLiquid,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn split_file(&self) -> PathBuf {
        self.root.join("split.json")
    }

    pub fn checkpoint(&self, variant: Variant, task: Task) -> PathBuf {
        self.root.join("checkpoints").join(format!("{task}_{variant}.ckpt"))
    }

    pub fn log(&self, variant: Variant, task: Task) -> PathBuf {
        self.root.join("logs").join(format!("{task}_{variant}.csv"))
    }

    pub fn eval_dir(&self, task: Task) -> PathBuf {
        self.root.join("eval").join(task.short_name())
    }

    pub fn heatmap_dir(&self, variant: Variant, task: Task) -> PathBuf {
        self.eval_dir(task).join("heatmaps").join(variant.short_name())
    }

    pub fn plots_dir(&self) -> PathBuf {
        self.root.join("plots")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub validation_fraction: f64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenSummary {
    pub data_dir: PathBuf,
    pub sequences: usize,
    pub negatives: usize,
    pub frames: usize,
    pub visible_liquid_pixels: usize,
    pub total_liquid_pixels: usize,
}

fn ensure_out_dir(cfg: &ExperimentConfig) -> Result<()> {
    let out = &cfg.out_dir;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(Error::Config(format!(
                "parent directory {} of out_dir does not exist",
                parent.display()
            )));
        }
    }
    create_dir_all(out)
}

/// Generates the dataset and records the train/validation split.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<GenSummary> {
    cfg.validate()?;
    ensure_out_dir(cfg)?;
    let layout = cfg.layout();
    let manifests = generate_dataset(&cfg.dataset_config(), &layout.data_dir())?;
    let index = read_index(&layout.data_dir())?;
    let (train_idx, val_idx) = cfg.split(&index);
    let names = |ix: &[usize]| ix.iter().map(|&i| index.sequences[i].dir.clone()).collect();
    write_json(
        &layout.split_file(),
        &SplitRecord {
            seed: cfg.seed,
            validation_fraction: cfg.validation_fraction,
            train: names(&train_idx),
            validation: names(&val_idx),
        },
    )?;
    let frames = manifests.iter().flat_map(|m| &m.frames);
    Ok(GenSummary {
        data_dir: layout.data_dir(),
        sequences: manifests.len(),
        negatives: manifests.iter().filter(|m| !m.scenario.has_liquid).count(),
        frames: manifests.iter().map(|m| m.frame_count).sum(),
        visible_liquid_pixels: frames.clone().map(|f| f.visible_liquid_pixels).sum(),
        total_liquid_pixels: frames.map(|f| f.total_liquid_pixels).sum(),
    })
}

fn load_task_data(cfg: &ExperimentConfig, task: Task) -> Result<(DatasetIndex, TaskDataset)> {
    let (index, seqs) = load_dataset(&cfg.layout().data_dir())?;
    if (index.config.height, index.config.width) != (cfg.dataset.height, cfg.dataset.width) {
        return Err(Error::Prerequisite(format!(
            "dataset frames are {}×{} but the config asks for {}×{} (rerun gen-data)",
            index.config.width, index.config.height, cfg.dataset.width, cfg.dataset.height
        )));
    }
    let data = TaskDataset::new(task, &seqs)?;
    Ok((index, data))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log_path: PathBuf,
    pub log: TrainingLog,
    /// Parameters copied from the single-frame checkpoint (LSTM only).
    pub inherited: Vec<String>,
}

/// Freshly initialised network; the LSTM copies every matching tensor of
/// the single-frame checkpoint of the same task. Returns the copied names.
pub fn initial_network(cfg: &ExperimentConfig, variant: Variant, task: Task) -> Result<(Network, Vec<String>)> {
    let entry = cfg.network(variant, task)?;
    let mut net = Network::new(entry.spec.clone(), cfg.init_seed(variant, task))?;
    let mut inherited = Vec::new();
    if variant == Variant::LstmCnn {
        let cnn_path = cfg.layout().checkpoint(Variant::SingleFrameCnn, task);
        if !cnn_path.is_file() {
            return Err(Error::Prerequisite(format!(
                "the lstm network initialises from {}; run `train --net cnn --task {task}` first",
                cnn_path.display()
            )));
        }
        let cnn = Network::load(&cnn_path)?;
        inherited = net.copy_matching_from(&cnn);
        if !inherited.iter().any(|n| n.starts_with("tower.")) {
            return Err(Error::Prerequisite(format!(
                "{} shares no tower weights with the lstm spec; retrain the cnn",
                cnn_path.display()
            )));
        }
    }
    Ok((net, inherited))
}

/// Trains one network on the training split, starting from [`initial_network`].
pub fn train_network(cfg: &ExperimentConfig, variant: Variant, task: Task) -> Result<TrainSummary> {
    cfg.validate()?;
    let entry = cfg.network(variant, task)?;
    let layout = cfg.layout();
    let (mut net, inherited) = initial_network(cfg, variant, task)?;
    let (index, data) = load_task_data(cfg, task)?;
    let (train_idx, _) = cfg.split(&index);
    if train_idx.is_empty() {
        return Err(Error::Config("the training split is empty".into()));
    }
    let log = train(&mut net, &data, &train_idx, &entry.train, cfg.train_seed(variant, task), |_, _| Ok(()))?;
    let checkpoint = layout.checkpoint(variant, task);
    create_dir_all(checkpoint.parent().expect("checkpoint has a parent"))?;
    net.save(&checkpoint)?;
    let log_path = layout.log(variant, task);
    create_dir_all(log_path.parent().expect("log has a parent"))?;
    log.write_csv(&log_path)?;
    Ok(TrainSummary {
        checkpoint,
        log_path,
        log,
        inherited,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub files: ReportFiles,
    pub curves: Vec<NamedCurve>,
    pub negatives: Vec<NegativeRow>,
    pub heatmaps: usize,
    pub validation_frames: usize,
}

fn heat_png(heat: &[f32]) -> Vec<u8> {
    heat.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

/// Evaluates the given networks (all trained ones when `variants` is empty)
/// on the validation split and writes the comparison report.
pub fn evaluate(cfg: &ExperimentConfig, task: Task, variants: &[Variant]) -> Result<EvalSummary> {
    cfg.validate()?;
    let layout = cfg.layout();
    let chosen: Vec<Variant> = if variants.is_empty() {
        Variant::ALL
            .into_iter()
            .filter(|&v| layout.checkpoint(v, task).is_file())
            .collect()
    } else {
        variants.to_vec()
    };
    if chosen.is_empty() {
        return Err(Error::Prerequisite(format!("no trained {task} checkpoints (run train first)")));
    }
    let (index, data) = load_task_data(cfg, task)?;
    let (_, val_idx) = cfg.split(&index);
    if val_idx.is_empty() {
        return Err(Error::Config("the validation split is empty; nothing to evaluate".into()));
    }
    let (h, w) = data.frame_size();
    let validation_frames = val_idx.iter().map(|&i| data.sequences[i].len()).sum();
    let mut curves = Vec::new();
    let mut negatives = Vec::new();
    let mut heatmaps = 0;
    for v in chosen {
        let path = layout.checkpoint(v, task);
        if !path.is_file() {
            return Err(Error::Prerequisite(format!(
                "no checkpoint at {} (run `train --net {v} --task {task}`)",
                path.display()
            )));
        }
        let net = Network::load(&path)?;
        if net.spec() != &cfg.network(v, task)?.spec {
            return Err(Error::format(&path, "checkpoint architecture differs from the config entry"));
        }
        let heat_dir = layout.heatmap_dir(v, task);
        if heat_dir.exists() {
            fs::remove_dir_all(&heat_dir).map_err(|e| Error::io(&heat_dir, e))?;
        }
        let mut acc = PrAccumulator::new(cfg.eval_config(task))?;
        let mut neg = NegativeRow {
            network: v.to_string(),
            task: task.to_string(),
            threshold: cfg.eval.negative_threshold,
            pixels: 0,
            false_positive_pixels: 0,
            false_positive_rate: 0.0,
        };
        for &i in &val_idx {
            let seq = &data.sequences[i];
            let preds = net.predict_sequence(&seq.inputs())?;
            let dir = heat_dir.join(&index.sequences[i].dir);
            create_dir_all(&dir)?;
            for (t, p) in preds.iter().enumerate() {
                acc.add(p, &seq.target(t))?;
                write_png(&dir.join(format!("{t:04}.png")), w, h, PixelFormat::Gray, &heat_png(p.data()))?;
                heatmaps += 1;
                if !seq.has_liquid {
                    neg.pixels += p.len() as u64;
                    neg.false_positive_pixels +=
                        p.data().iter().filter(|&&x| x as f64 >= cfg.eval.negative_threshold).count() as u64;
                }
            }
        }
        if neg.pixels > 0 {
            neg.false_positive_rate = neg.false_positive_pixels as f64 / neg.pixels as f64;
            negatives.push(neg);
        }
        curves.push(NamedCurve {
            network: v.to_string(),
            task: task.to_string(),
            curve: acc.finish(),
        });
    }
    let files = compare_report(&curves, &negatives, &layout.eval_dir(task))?;
    Ok(EvalSummary {
        files,
        curves,
        negatives,
        heatmaps,
        validation_frames,
    })
}

/// Renders PR overlays from report CSVs into `out_dir`.
pub fn plot(reports: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::Prerequisite("no report CSVs to plot (run eval first)".into()));
    }
    let mut rows = Vec::new();
    for r in reports {
        rows.extend(read_report(r)?);
    }
    if rows.is_empty() {
        return Err(Error::Contract("the report has no rows; nothing to plot".into()));
    }
    create_dir_all(out_dir)?;
    plot_report(&rows, out_dir)
}

/// Report CSVs written by `evaluate` for this experiment.
pub fn existing_reports(cfg: &ExperimentConfig) -> Vec<PathBuf> {
    Task::ALL
        .iter()
        .map(|&t| cfg.layout().eval_dir(t).join(REPORT_CSV))
        .filter(|p| p.is_file())
        .collect()
}

