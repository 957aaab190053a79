//! Run orchestration behind the CLI: config files, run directories and the
//! train / eval / decode / trace / filters / refine / synth commands.
//!
//! Every run directory holds a `manifest.toml` snapshot of the fully
//! resolved configuration, so a run can be reproduced from its manifest
//! alone (given the dataset).

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Checkpoint, CheckpointModel};
use crate::dataio::{
    compute_mean, load_ntu_file, make_dataset, split, synth_generate, Dataset, DimLayout,
    MeanSkeleton, Protocol, SyntheticSpec, CS_TRAIN_SUBJECTS, CV_TRAIN_CAMERAS,
};
use crate::error::{Error, Result};
use crate::export;
use crate::fmd;
use crate::msnet::{build_ms, MSResTCNConfig, MaskSpec, PipeSigma};
use crate::optim::SGDConfig;
use crate::render;
use crate::restcn::{build_restcn, response_trace, ResTCNConfig};
use crate::tensor::{read_named_tensors, write_named_tensors, Tensor};

/// Environment variable that overrides the run-root directory.
pub const RUN_ROOT_ENV: &str = "RESTCN_RUN_ROOT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    /// Sequences are padded/cropped to this temporal length.
    pub target_len: usize,
    /// Subtract the mean before padding instead of after.
    pub pad_after_mean: bool,
}

impl Default for TrainParams {
    fn default() -> TrainParams {
        TrainParams { epochs: 100, batch_size: 128, target_len: 300, pad_after_mean: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// A directory of NTU `.skeleton` files, split by protocol.
    Ntu,
    /// The built-in synthetic generator.
    Synthetic,
    /// A dataset directory produced by the `synth` command.
    Cached,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataParams {
    pub kind: DataKind,
    /// NTU directory or cached-dataset directory.
    pub root: Option<PathBuf>,
    pub protocol: Protocol,
    /// Overrides the protocol's default train-side id list.
    pub train_ids: Option<Vec<u32>>,
}

impl Default for DataParams {
    fn default() -> DataParams {
        DataParams { kind: DataKind::Synthetic, root: None, protocol: Protocol::CrossSubject, train_ids: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub num_classes: usize,
    pub joints: usize,
    pub frames: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub fine_motion_dims: Vec<usize>,
    pub distractor_amplitude: f64,
    pub fine_amplitude: f64,
    pub noise: f64,
}

impl Default for SynthParams {
    fn default() -> SynthParams {
        let desk = SyntheticSpec::default_desk(200, 0);
        SynthParams {
            num_classes: desk.num_classes,
            joints: desk.joints,
            frames: desk.frames,
            train_per_class: 200,
            test_per_class: 50,
            fine_motion_dims: desk.fine_motion_dims,
            distractor_amplitude: desk.distractor_amplitude,
            fine_amplitude: desk.fine_amplitude,
            noise: desk.noise,
        }
    }
}

impl SynthParams {
    pub fn spec(&self, samples_per_class: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            num_classes: self.num_classes,
            joints: self.joints,
            frames: self.frames,
            samples_per_class,
            fine_motion_dims: self.fine_motion_dims.clone(),
            distractor_amplitude: self.distractor_amplitude,
            fine_amplitude: self.fine_amplitude,
            noise: self.noise,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineParams {
    pub pipe_filter_len: usize,
    pub pipe_sigma: PipeSigma,
    pub mask_file: Option<PathBuf>,
}

impl Default for RefineParams {
    fn default() -> RefineParams {
        RefineParams { pipe_filter_len: 1, pipe_sigma: PipeSigma::ReluOnly, mask_file: None }
    }
}

/// The fully resolved configuration of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub run_root: PathBuf,
    pub model: ResTCNConfig,
    pub sgd: SGDConfig,
    pub train: TrainParams,
    pub data: DataParams,
    pub synth: SynthParams,
    pub refine: RefineParams,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            seed: 7,
            run_root: PathBuf::from("runs"),
            model: ResTCNConfig::default(),
            sgd: SGDConfig::default(),
            train: TrainParams::default(),
            data: DataParams::default(),
            synth: SynthParams::default(),
            refine: RefineParams::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::parse(format!("{path:?}"), e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("config serialization failed: {e}")))?;
        fs::write(path, text)?;
        Ok(())
    }

    /// Run root after the environment override.
    pub fn effective_run_root(&self) -> PathBuf {
        std::env::var_os(RUN_ROOT_ENV).map_or_else(|| self.run_root.clone(), PathBuf::from)
    }
}

/// Everything a training or diagnosis command needs from the data side.
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    pub mean: MeanSkeleton,
    pub layout: DimLayout,
}

/// Loads, splits and preprocesses the configured dataset. For synthetic
/// data the test split uses `seed + 1` so train and test never share draws.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    match cfg.data.kind {
        DataKind::Synthetic => {
            let train_spec = cfg.synth.spec(cfg.synth.train_per_class, cfg.seed);
            let test_spec = cfg.synth.spec(cfg.synth.test_per_class, cfg.seed + 1);
            let train_seqs = synth_generate(&train_spec)?;
            let test_seqs = synth_generate(&test_spec)?;
            let mean = compute_mean(&train_seqs)?;
            let layout = train_spec.layout();
            let target = cfg.train.target_len.min(train_spec.frames);
            let train = make_dataset(&train_seqs, target, &mean, cfg.train.pad_after_mean, train_spec.num_classes)?;
            let test = make_dataset(&test_seqs, target, &mean, cfg.train.pad_after_mean, train_spec.num_classes)?;
            Ok(PreparedData { train, test, mean, layout })
        }
        DataKind::Ntu => {
            let root = cfg
                .data
                .root
                .as_ref()
                .ok_or_else(|| Error::Config("data.root is required for NTU data".into()))?;
            let mut seqs = Vec::new();
            let mut paths: Vec<PathBuf> = fs::read_dir(root)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "skeleton"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(Error::Data(format!("no .skeleton files under {root:?}")));
            }
            for path in &paths {
                let (seq, warnings) = load_ntu_file(path)?;
                for w in warnings {
                    eprintln!("warning: {}: {w}", seq.id);
                }
                seqs.push(seq);
            }
            let default_ids: Vec<u32> = match cfg.data.protocol {
                Protocol::CrossSubject => CS_TRAIN_SUBJECTS.to_vec(),
                Protocol::CrossView => CV_TRAIN_CAMERAS.to_vec(),
            };
            let ids = cfg.data.train_ids.clone().unwrap_or(default_ids);
            let (train_seqs, test_seqs) = split(seqs, cfg.data.protocol, &ids)?;
            let mean = compute_mean(&train_seqs)?;
            let layout = DimLayout::ntu();
            let k = cfg.model.num_classes;
            let train = make_dataset(&train_seqs, cfg.train.target_len, &mean, cfg.train.pad_after_mean, k)?;
            let test = make_dataset(&test_seqs, cfg.train.target_len, &mean, cfg.train.pad_after_mean, k)?;
            Ok(PreparedData { train, test, mean, layout })
        }
        DataKind::Cached => {
            let root = cfg
                .data
                .root
                .as_ref()
                .ok_or_else(|| Error::Config("data.root is required for cached data".into()))?;
            load_cached_dataset(root)
        }
    }
}

/// Checks the model config against the prepared data.
fn reconcile_model(cfg: &RunConfig, data: &PreparedData) -> Result<ResTCNConfig> {
    let mut model = cfg.model.clone();
    let d = data.layout.width();
    if cfg.data.kind != DataKind::Ntu {
        model.input_dim = d;
        model.num_classes = data.train.num_classes;
    } else if model.input_dim != d {
        return Err(Error::Config(format!(
            "model.input_dim {} does not match dataset width {d}",
            model.input_dim
        )));
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// Cached datasets (written by `synth`, read by kind = "cached")
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CachedManifest {
    num_classes: usize,
    layout: DimLayout,
    train_ids: Vec<String>,
    train_labels: Vec<usize>,
    test_ids: Vec<String>,
    test_labels: Vec<usize>,
}

pub fn save_cached_dataset(dir: &Path, data: &PreparedData) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = CachedManifest {
        num_classes: data.train.num_classes,
        layout: data.layout.clone(),
        train_ids: data.train.ids.clone(),
        train_labels: data.train.labels.clone(),
        test_ids: data.test.ids.clone(),
        test_labels: data.test.labels.clone(),
    };
    let text = toml::to_string(&manifest)
        .map_err(|e| Error::Data(format!("manifest serialization failed: {e}")))?;
    fs::write(dir.join("manifest.toml"), text)?;

    let mut entries: Vec<(String, &Tensor)> = vec![("mean".into(), &data.mean.values)];
    for (i, t) in data.train.inputs.iter().enumerate() {
        entries.push((format!("train/{i}"), t));
    }
    for (i, t) in data.test.inputs.iter().enumerate() {
        entries.push((format!("test/{i}"), t));
    }
    let mut w = BufWriter::new(fs::File::create(dir.join("data.bin"))?);
    write_named_tensors(&mut w, &entries)?;
    Ok(())
}

pub fn load_cached_dataset(dir: &Path) -> Result<PreparedData> {
    let text = fs::read_to_string(dir.join("manifest.toml"))?;
    let manifest: CachedManifest =
        toml::from_str(&text).map_err(|e| Error::parse("manifest.toml", e.to_string()))?;
    let mut r = BufReader::new(fs::File::open(dir.join("data.bin"))?);
    let mut map: std::collections::HashMap<String, Tensor> =
        read_named_tensors(&mut r)?.into_iter().collect();
    let mean = MeanSkeleton {
        values: map.remove("mean").ok_or_else(|| Error::Data("cached dataset lacks a mean".into()))?,
    };
    let take = |map: &mut std::collections::HashMap<String, Tensor>, prefix: &str, n: usize| -> Result<Vec<Tensor>> {
        (0..n)
            .map(|i| {
                map.remove(&format!("{prefix}/{i}"))
                    .ok_or_else(|| Error::Data(format!("cached dataset lacks {prefix}/{i}")))
            })
            .collect()
    };
    let train = Dataset {
        num_classes: manifest.num_classes,
        inputs: take(&mut map, "train", manifest.train_ids.len())?,
        ids: manifest.train_ids,
        labels: manifest.train_labels,
    };
    let test = Dataset {
        num_classes: manifest.num_classes,
        inputs: take(&mut map, "test", manifest.test_ids.len())?,
        ids: manifest.test_ids,
        labels: manifest.test_labels,
    };
    train.validate()?;
    test.validate()?;
    Ok(PreparedData { train, test, mean, layout: manifest.layout })
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub report: crate::restcn::FitReport,
}

fn make_run_dir(cfg: &RunConfig, name: Option<&str>, prefix: &str) -> Result<PathBuf> {
    let root = cfg.effective_run_root();
    fs::create_dir_all(&root)?;
    let name = match name {
        Some(n) => n.to_string(),
        None => {
            let mut i = 0;
            loop {
                let candidate = format!("{prefix}-{i:03}");
                if !root.join(&candidate).exists() {
                    break candidate;
                }
                i += 1;
            }
        }
    };
    let dir = root.join(name);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Trains a Res-TCN and writes the run directory: manifest, per-epoch
/// metrics CSV, final and best checkpoints.
pub fn cmd_train(cfg: &RunConfig, run_name: Option<&str>) -> Result<RunOutcome> {
    let data = prepare_data(cfg)?;
    let model_cfg = reconcile_model(cfg, &data)?;
    let run_dir = make_run_dir(cfg, run_name, "train")?;
    let mut snapshot = cfg.clone();
    snapshot.model = model_cfg.clone();
    snapshot.save(&run_dir.join("manifest.toml"))?;

    let mut model = build_restcn(&model_cfg, cfg.seed)?;
    let mut best_loss = f64::INFINITY;
    let best_dir = run_dir.join("best");
    let (mean, layout) = (&data.mean, &data.layout);
    let report = model.fit_with(
        &data.train,
        &data.test,
        &cfg.sgd,
        cfg.train.epochs,
        cfg.train.batch_size,
        cfg.seed,
        |m, stats| {
            if stats.test_loss < best_loss {
                best_loss = stats.test_loss;
                checkpoint::save_restcn(&best_dir, m, mean, layout)?;
            }
            Ok(())
        },
    )?;
    checkpoint::save_restcn(&run_dir.join("final"), &model, mean, layout)?;
    export::write_history_csv(&run_dir.join("history.csv"), &report)?;
    Ok(RunOutcome { run_dir, report })
}

/// Loads a mask file: TOML with optional `joints` (names resolved through
/// the layout), optional raw `dims`, and a provenance `note`.
pub fn load_mask_file(path: &Path, layout: &DimLayout) -> Result<MaskSpec> {
    #[derive(Deserialize)]
    struct MaskFile {
        #[serde(default)]
        joints: Vec<String>,
        #[serde(default)]
        dims: Vec<usize>,
        #[serde(default)]
        note: String,
    }
    let text = fs::read_to_string(path)?;
    let file: MaskFile =
        toml::from_str(&text).map_err(|e| Error::parse(format!("{path:?}"), e.to_string()))?;
    MaskSpec::from_joints(layout, &file.joints, &file.dims, &file.note)
}

/// Trains an MS-Res-TCN with the given mask; mask provenance lands in the
/// run manifest and the checkpoint.
pub fn cmd_refine(cfg: &RunConfig, mask: MaskSpec, run_name: Option<&str>) -> Result<RunOutcome> {
    let data = prepare_data(cfg)?;
    let base = reconcile_model(cfg, &data)?;
    mask.validate(base.input_dim)
        .map_err(|e| Error::Config(format!("mask does not fit the dataset: {e}")))?;
    let ms_cfg = MSResTCNConfig {
        base,
        pipe_filter_len: cfg.refine.pipe_filter_len,
        pipe_sigma: cfg.refine.pipe_sigma,
        mask,
    };

    let run_dir = make_run_dir(cfg, run_name, "refine")?;
    let mut snapshot = cfg.clone();
    snapshot.model = ms_cfg.base.clone();
    snapshot.save(&run_dir.join("manifest.toml"))?;
    fs::write(
        run_dir.join("mask.toml"),
        toml::to_string_pretty(&ms_cfg.mask).map_err(|e| Error::Data(e.to_string()))?,
    )?;

    let mut model = build_ms(&ms_cfg, cfg.seed)?;
    let mut best_loss = f64::INFINITY;
    let best_dir = run_dir.join("best");
    let (mean, layout) = (&data.mean, &data.layout);
    let report = model.fit_with(
        &data.train,
        &data.test,
        &cfg.sgd,
        cfg.train.epochs,
        cfg.train.batch_size,
        cfg.seed,
        |m, stats| {
            if stats.test_loss < best_loss {
                best_loss = stats.test_loss;
                checkpoint::save_ms(&best_dir, m, mean, layout)?;
            }
            Ok(())
        },
    )?;
    checkpoint::save_ms(&run_dir.join("final"), &model, mean, layout)?;
    export::write_history_csv(&run_dir.join("history.csv"), &report)?;
    Ok(RunOutcome { run_dir, report })
}

/// One side of an evaluation report.
pub struct EvalOutcome {
    pub accuracy: f64,
    pub report_path: PathBuf,
}

fn eval_checkpoint(ckpt: &Checkpoint, data: &Dataset) -> Result<crate::restcn::Evaluation> {
    match &ckpt.model {
        CheckpointModel::ResTCN(m) => m.evaluate(data),
        CheckpointModel::MsResTCN(m) => m.evaluate(data),
    }
}

/// Evaluates a checkpoint; with a baseline checkpoint the per-class table
/// becomes the side-by-side layout and classes improving by at least
/// `flag_threshold` are flagged.
pub fn cmd_eval(
    run_dir: &Path,
    which: &str,
    cfg: &RunConfig,
    baseline_run: Option<&Path>,
    flag_threshold: f64,
    on_train_split: bool,
) -> Result<EvalOutcome> {
    let ckpt = checkpoint::load(&run_dir.join(which))?;
    let data = prepare_data(cfg)?;
    let split = if on_train_split { &data.train } else { &data.test };
    let eval = eval_checkpoint(&ckpt, split)?;
    let baseline = match baseline_run {
        Some(dir) => Some(eval_checkpoint(&checkpoint::load(&dir.join(which))?, split)?),
        None => None,
    };

    let suffix = if on_train_split { "train" } else { "test" };
    let per_class = run_dir.join(format!("per_class_{suffix}.csv"));
    export::write_per_class_csv(&per_class, &eval, baseline.as_ref(), flag_threshold, None)?;
    export::write_confusion_csv(&run_dir.join(format!("confusion_{suffix}.csv")), &eval.confusion)?;

    println!("accuracy ({suffix}): {:.4}", eval.accuracy);
    if let Some(base) = &baseline {
        println!("baseline accuracy ({suffix}): {:.4}", base.accuracy);
        for (i, (b, r)) in base.per_class.iter().zip(&eval.per_class).enumerate() {
            if let (Some(b), Some(r)) = (b, r) {
                if r - b >= flag_threshold {
                    println!("class {i:3}: {b:.4} -> {r:.4}  (+{:.4})", r - b);
                }
            }
        }
    }
    Ok(EvalOutcome { accuracy: eval.accuracy, report_path: per_class })
}

/// Decodes the recorded activations of selected samples at selected layers;
/// writes one CSV and one SVG strip per (sample, layer).
pub fn cmd_decode(
    run_dir: &Path,
    which: &str,
    cfg: &RunConfig,
    sample_ids: &[String],
    layers: &[usize],
    out_dir: Option<&Path>,
    panels: usize,
) -> Result<Vec<PathBuf>> {
    let ckpt = checkpoint::load(&run_dir.join(which))?;
    let model = ckpt.as_restcn()?;
    let data = prepare_data(cfg)?;
    let out = out_dir.map_or_else(|| run_dir.join("decode"), Path::to_path_buf);
    fs::create_dir_all(&out)?;

    let mut written = Vec::new();
    for id in sample_ids {
        let (set, idx) = match (data.test.index_of(id), data.train.index_of(id)) {
            (Some(i), _) => (&data.test, i),
            (None, Some(i)) => (&data.train, i),
            (None, None) => return Err(Error::Data(format!("unknown sample id '{id}'"))),
        };
        let (batch, _) = set.stack(&[idx])?;
        let fwd = model.forward_eval(&batch, true)?;
        let mut bundles = fwd.bundles.expect("recording requested");
        let mut bundle = bundles.remove(0);
        bundle.sample_id = id.clone();
        for &layer in layers {
            let dec = fmd::decode(&bundle, model, layer, &ckpt.mean)?;
            let stem = format!("{id}_L{layer}");
            let csv_path = out.join(format!("{stem}.csv"));
            export::write_decoded_csv(&csv_path, &dec, &ckpt.layout)?;
            let svg_path = out.join(format!("{stem}.svg"));
            render::render_strip(&svg_path, &dec.frames, &ckpt.layout, panels, &stem)?;
            written.push(csv_path);
            written.push(svg_path);
        }
    }
    Ok(written)
}

/// Filter response magnitudes over time for the samples of one class:
/// top_k filters ranked by peak magnitude across the class, one CSV per
/// sample.
pub fn cmd_trace(
    run_dir: &Path,
    which: &str,
    cfg: &RunConfig,
    class: usize,
    layer: usize,
    top_k: usize,
    max_samples: usize,
    out_dir: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    let ckpt = checkpoint::load(&run_dir.join(which))?;
    let model = ckpt.as_restcn()?;
    let data = prepare_data(cfg)?;
    if class >= data.test.num_classes {
        return Err(Error::Param(format!("class {class} out of range")));
    }
    let idxs: Vec<usize> = data.test.indices_of_class(class).into_iter().take(max_samples).collect();
    if idxs.is_empty() {
        return Err(Error::Data(format!("no test samples with class {class}")));
    }
    let out = out_dir.map_or_else(|| run_dir.join("trace"), Path::to_path_buf);
    fs::create_dir_all(&out)?;

    let (batch, _) = data.test.stack(&idxs)?;
    let fwd = model.forward_eval(&batch, true)?;
    let bundles = fwd.bundles.expect("recording requested");

    // Rank filters by peak |response| across the class's samples.
    let n_filters = model.config.layer_channels(layer);
    let clamped_k = top_k.min(n_filters);
    if clamped_k < top_k {
        eprintln!("warning: top_k {top_k} clamped to the layer's {n_filters} filters");
    }
    let mut peak = vec![0.0f64; n_filters];
    for bundle in &bundles {
        let x = bundle.layer(layer)?;
        for ti in 0..x.shape()[0] {
            for fi in 0..n_filters {
                peak[fi] = peak[fi].max(x.at2(ti, fi).abs());
            }
        }
    }
    let mut order: Vec<usize> = (0..n_filters).collect();
    order.sort_by(|&a, &b| peak[b].partial_cmp(&peak[a]).unwrap());
    let picked: Vec<usize> = order.into_iter().take(clamped_k).collect();

    let mut written = Vec::new();
    for (bi, bundle) in bundles.iter().enumerate() {
        let traces = response_trace(bundle, layer, &picked)?;
        let path = out.join(format!("{}_L{layer}_traces.csv", data.test.ids[idxs[bi]]));
        export::write_trace_csv(&path, &picked, &traces)?;
        written.push(path);
    }
    Ok(written)
}

/// Renders first-layer filters as skeleton strips; all filters when `ids`
/// is empty.
pub fn cmd_filters(run_dir: &Path, which: &str, ids: &[usize], out_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let ckpt = checkpoint::load(&run_dir.join(which))?;
    let model = ckpt.as_restcn()?;
    let all: Vec<usize>;
    let ids = if ids.is_empty() {
        all = (0..model.config.block_channels[0]).collect();
        &all
    } else {
        ids
    };
    let out = out_dir.map_or_else(|| run_dir.join("filters"), Path::to_path_buf);
    fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    for &id in ids {
        let seq = fmd::filter_to_skeleton(model, id, &ckpt.mean, &ckpt.layout)?;
        let path = out.join(format!("filter_{id:03}.svg"));
        render::render_sequence(&path, &seq, &format!("filter {id}"))?;
        written.push(path);
    }
    Ok(written)
}

/// Generates the configured synthetic dataset and caches it on disk.
pub fn cmd_synth(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let mut synth_cfg = cfg.clone();
    synth_cfg.data.kind = DataKind::Synthetic;
    let data = prepare_data(&synth_cfg)?;
    save_cached_dataset(out_dir, &data)?;
    Ok(out_dir.to_path_buf())
}

/// Re-runs training from a run manifest; used by the reproducibility check.
pub fn rerun_from_manifest(run_dir: &Path, run_name: Option<&str>) -> Result<RunOutcome> {
    let cfg = RunConfig::load(&run_dir.join("manifest.toml"))?;
    cmd_train(&cfg, run_name)
}
