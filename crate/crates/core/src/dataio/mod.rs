//! Skeleton datasets: NTU RGB+D parsing, split protocols, mean-skeleton
//! preprocessing and the flat T x D representation the models consume.

pub mod synth;

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use synth::{nearest_centroid_pair_accuracy, synth_generate, SyntheticSpec};

/// NTU joint names in sensor order (25 joints).
pub const NTU_JOINT_NAMES: [&str; 25] = [
    "spine_base",
    "spine_mid",
    "neck",
    "head",
    "shoulder_left",
    "elbow_left",
    "wrist_left",
    "hand_left",
    "shoulder_right",
    "elbow_right",
    "wrist_right",
    "hand_right",
    "hip_left",
    "knee_left",
    "ankle_left",
    "foot_left",
    "hip_right",
    "knee_right",
    "ankle_right",
    "foot_right",
    "spine_shoulder",
    "hand_tip_left",
    "thumb_left",
    "hand_tip_right",
    "thumb_right",
];

/// Bone list as (joint, parent) pairs, 0-based into `NTU_JOINT_NAMES`.
pub const NTU_BONES: [(usize, usize); 24] = [
    (0, 1),
    (1, 20),
    (2, 20),
    (3, 2),
    (4, 20),
    (5, 4),
    (6, 5),
    (7, 6),
    (8, 20),
    (9, 8),
    (10, 9),
    (11, 10),
    (12, 0),
    (13, 12),
    (14, 13),
    (15, 14),
    (16, 0),
    (17, 16),
    (18, 17),
    (19, 18),
    (21, 22),
    (22, 7),
    (23, 24),
    (24, 11),
];

pub const NTU_ACTOR_SLOTS: usize = 2;

/// Cross-Subject training performer ids of the NTU protocol.
pub const CS_TRAIN_SUBJECTS: [u32; 20] =
    [1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38];

/// Cross-View training camera ids; camera 1 is held out for testing.
pub const CV_TRAIN_CAMERAS: [u32; 2] = [2, 3];

/// How per-frame values map onto flat feature columns: actor-major,
/// joint-major, xyz-minor. Joint names resolve through this layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimLayout {
    pub joint_names: Vec<String>,
    pub actor_slots: usize,
}

impl DimLayout {
    pub fn ntu() -> DimLayout {
        DimLayout {
            joint_names: NTU_JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
            actor_slots: NTU_ACTOR_SLOTS,
        }
    }

    pub fn width(&self) -> usize {
        self.actor_slots * self.joint_names.len() * 3
    }

    /// Flat column of (actor, joint, axis).
    pub fn dim_of(&self, actor: usize, joint: usize, axis: usize) -> usize {
        (actor * self.joint_names.len() + joint) * 3 + axis
    }

    /// All columns carrying the named joint, across every actor slot.
    pub fn dims_for_joint(&self, name: &str) -> Result<Vec<usize>> {
        let joint = self
            .joint_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("unknown joint name '{name}'")))?;
        let mut dims = Vec::with_capacity(self.actor_slots * 3);
        for actor in 0..self.actor_slots {
            for axis in 0..3 {
                dims.push(self.dim_of(actor, joint, axis));
            }
        }
        Ok(dims)
    }

    /// Header names like `a0_spine_base_x`, one per flat column.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.width());
        for actor in 0..self.actor_slots {
            for joint in &self.joint_names {
                for axis in ["x", "y", "z"] {
                    out.push(format!("a{actor}_{joint}_{axis}"));
                }
            }
        }
        out
    }
}

/// Filename metadata of an NTU sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub setup: u32,
    pub camera: u32,
    pub performer: u32,
    pub replication: u32,
    pub action: u32,
}

/// A skeleton sequence in meters: T frames of actor_slots x J x 3 values,
/// flattened actor-major, joint-major, xyz-minor. Absent actor slots stay
/// zero-filled.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub id: String,
    pub layout: DimLayout,
    pub num_frames: usize,
    frames: Vec<f64>,
    pub label: Option<usize>,
    pub meta: Option<SequenceMeta>,
}

impl SkeletonSequence {
    pub fn zeros(id: &str, layout: DimLayout, num_frames: usize) -> SkeletonSequence {
        let width = layout.width();
        SkeletonSequence {
            id: id.to_string(),
            layout,
            num_frames,
            frames: vec![0.0; num_frames * width],
            label: None,
            meta: None,
        }
    }

    pub fn frame_width(&self) -> usize {
        self.layout.width()
    }

    pub fn joint(&self, frame: usize, actor: usize, joint: usize) -> [f64; 3] {
        let base = frame * self.frame_width() + self.layout.dim_of(actor, joint, 0);
        [self.frames[base], self.frames[base + 1], self.frames[base + 2]]
    }

    pub fn set_joint(&mut self, frame: usize, actor: usize, joint: usize, xyz: [f64; 3]) {
        let base = frame * self.frame_width() + self.layout.dim_of(actor, joint, 0);
        self.frames[base..base + 3].copy_from_slice(&xyz);
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.frame_width();
        &self.frames[t * w..(t + 1) * w]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let w = self.frame_width();
        &mut self.frames[t * w..(t + 1) * w]
    }

    /// The flat T x D tensor view of the sequence.
    pub fn flatten(&self) -> Tensor {
        Tensor::from_vec(&[self.num_frames, self.frame_width()], self.frames.clone())
            .expect("frame buffer length matches by construction")
    }

    /// Rebuilds a sequence from its flat representation.
    pub fn from_flat(id: &str, layout: DimLayout, flat: &Tensor) -> Result<SkeletonSequence> {
        if flat.rank() != 2 || flat.shape()[1] != layout.width() {
            return Err(Error::Shape(format!(
                "flat sequence must be T x {}, got {:?}",
                layout.width(),
                flat.shape()
            )));
        }
        Ok(SkeletonSequence {
            id: id.to_string(),
            num_frames: flat.shape()[0],
            frames: flat.data().to_vec(),
            layout,
            label: None,
            meta: None,
        })
    }
}

/// Per-dimension average pose over every frame of the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSkeleton {
    pub values: Tensor,
}

impl MeanSkeleton {
    pub fn zeros(width: usize) -> MeanSkeleton {
        MeanSkeleton { values: Tensor::zeros(&[width]) }
    }

    pub fn width(&self) -> usize {
        self.values.shape()[0]
    }
}

/// Mean over all frames of all sequences; call it on the training split only.
pub fn compute_mean(seqs: &[SkeletonSequence]) -> Result<MeanSkeleton> {
    let first = seqs.first().ok_or_else(|| Error::Data("cannot average an empty split".into()))?;
    let width = first.frame_width();
    let mut sum = vec![0.0; width];
    let mut frames = 0usize;
    for seq in seqs {
        if seq.frame_width() != width {
            return Err(Error::Shape("sequences disagree on frame width".into()));
        }
        for t in 0..seq.num_frames {
            for (acc, v) in sum.iter_mut().zip(seq.frame(t)) {
                *acc += v;
            }
        }
        frames += seq.num_frames;
    }
    if frames == 0 {
        return Err(Error::Data("split has no frames".into()));
    }
    sum.iter_mut().for_each(|v| *v /= frames as f64);
    Ok(MeanSkeleton { values: Tensor::from_vec(&[width], sum)? })
}

// ---------------------------------------------------------------------------
// NTU text format
// ---------------------------------------------------------------------------

/// Parses an NTU `.skeleton` text stream. Fills up to two actor slots in
/// encounter order; further bodies are dropped with a warning. Returns the
/// sequence together with any warnings.
pub fn parse_ntu_skeleton<R: BufRead>(reader: R, id: &str) -> Result<(SkeletonSequence, Vec<String>)> {
    let mut lines = reader.lines().enumerate();
    let mut next_line = || -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(line))) => Ok((i + 1, line)),
            Some((i, Err(e))) => Err(Error::parse(format!("line {}", i + 1), e.to_string())),
            None => Err(Error::parse("end of input", "file truncated")),
        }
    };
    let parse_usize = |line_no: usize, s: &str| -> Result<usize> {
        s.trim().parse::<usize>().map_err(|_| {
            Error::parse(format!("line {line_no}"), format!("expected an integer, got '{}'", s.trim()))
        })
    };

    let (ln, first) = next_line()?;
    let num_frames = parse_usize(ln, &first)?;
    if num_frames == 0 {
        return Err(Error::parse(format!("line {ln}"), "sequence has zero frames"));
    }

    let mut seq = SkeletonSequence::zeros(id, DimLayout::ntu(), num_frames);
    let mut warnings = Vec::new();
    for frame in 0..num_frames {
        let (ln, line) = next_line()?;
        let bodies = parse_usize(ln, &line)?;
        if bodies > NTU_ACTOR_SLOTS {
            warnings.push(format!(
                "frame {}: {} bodies present, keeping the first {}",
                frame, bodies, NTU_ACTOR_SLOTS
            ));
        }
        for body in 0..bodies {
            // Body info line: tracking id plus per-body flags; not used here.
            let _ = next_line()?;
            let (ln, line) = next_line()?;
            let joints = parse_usize(ln, &line)?;
            if joints != 25 {
                return Err(Error::parse(
                    format!("line {ln}"),
                    format!("expected 25 joints per body, got {joints}"),
                ));
            }
            for joint in 0..joints {
                let (ln, line) = next_line()?;
                let mut it = line.split_whitespace();
                let mut xyz = [0.0f64; 3];
                for axis in &mut xyz {
                    let tok = it.next().ok_or_else(|| {
                        Error::parse(format!("line {ln}"), "joint line has fewer than 3 values")
                    })?;
                    *axis = tok.parse::<f64>().map_err(|_| {
                        Error::parse(format!("line {ln}"), format!("non-numeric token '{tok}'"))
                    })?;
                }
                if body < NTU_ACTOR_SLOTS {
                    seq.set_joint(frame, body, joint, xyz);
                }
            }
        }
    }
    Ok((seq, warnings))
}

/// Extracts S/C/P/R/A metadata from an NTU sample name such as
/// `S001C002P003R002A013` (an optional `.skeleton` suffix is allowed).
pub fn parse_ntu_filename(name: &str) -> Result<SequenceMeta> {
    let stem = name.strip_suffix(".skeleton").unwrap_or(name);
    let bytes = stem.as_bytes();
    let err = || Error::parse(format!("filename '{name}'"), "expected S***C***P***R***A*** digit groups");
    if bytes.len() != 20 {
        return Err(err());
    }
    let group = |tag: u8, at: usize| -> Result<u32> {
        if bytes[at] != tag {
            return Err(err());
        }
        let digits = &stem[at + 1..at + 4];
        if !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        digits.parse::<u32>().map_err(|_| err())
    };
    Ok(SequenceMeta {
        setup: group(b'S', 0)?,
        camera: group(b'C', 4)?,
        performer: group(b'P', 8)?,
        replication: group(b'R', 12)?,
        action: group(b'A', 16)?,
    })
}

/// Parses one `.skeleton` file, attaching filename metadata and the 0-based
/// class label.
pub fn load_ntu_file(path: &Path) -> Result<(SkeletonSequence, Vec<String>)> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Data(format!("bad path {path:?}")))?;
    let meta = parse_ntu_filename(name)?;
    let file = std::fs::File::open(path)?;
    let (mut seq, warnings) = parse_ntu_skeleton(std::io::BufReader::new(file), name)?;
    seq.label = Some(meta.action as usize - 1);
    seq.meta = Some(meta);
    Ok((seq, warnings))
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    CrossSubject,
    CrossView,
}

/// Exact disjoint partition by performer id (cross-subject) or camera id
/// (cross-view); ids listed in `train_ids` go to the training side.
pub fn split(
    seqs: Vec<SkeletonSequence>,
    protocol: Protocol,
    train_ids: &[u32],
) -> Result<(Vec<SkeletonSequence>, Vec<SkeletonSequence>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for seq in seqs {
        let meta = seq
            .meta
            .ok_or_else(|| Error::Data(format!("sequence '{}' has no metadata to split on", seq.id)))?;
        let key = match protocol {
            Protocol::CrossSubject => meta.performer,
            Protocol::CrossView => meta.camera,
        };
        if train_ids.contains(&key) {
            train.push(seq);
        } else {
            test.push(seq);
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("split produced an empty side".into()));
    }
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// Preprocessing and dataset assembly
// ---------------------------------------------------------------------------

/// Flattens to T x D, fits the temporal extent (trailing zero-pad when short,
/// center-crop when long) and subtracts the mean skeleton per frame.
///
/// Padding happens before the subtraction by default, so padded frames hold
/// `-mean`. With `pad_after_mean` the subtraction comes first and padded
/// frames stay zero.
pub fn preprocess(
    seq: &SkeletonSequence,
    target_t: usize,
    mean: &MeanSkeleton,
    pad_after_mean: bool,
) -> Result<Tensor> {
    if target_t == 0 {
        return Err(Error::Param("target_t must be positive".into()));
    }
    let d = seq.frame_width();
    if mean.width() != d {
        return Err(Error::Shape(format!(
            "mean skeleton width {} does not match sequence width {}",
            mean.width(),
            d
        )));
    }
    let flat = seq.flatten();

    let subtract = |t: &Tensor| {
        let mut out = t.clone();
        let rows = out.shape()[0];
        for r in 0..rows {
            for c in 0..d {
                out.data_mut()[r * d + c] -= mean.values.data()[c];
            }
        }
        out
    };
    let fit_time = |t: &Tensor| -> Tensor {
        let rows = t.shape()[0];
        if rows == target_t {
            return t.clone();
        }
        let mut out = Tensor::zeros(&[target_t, d]);
        if rows < target_t {
            out.data_mut()[..rows * d].copy_from_slice(t.data());
        } else {
            let start = (rows - target_t) / 2;
            out.data_mut().copy_from_slice(&t.data()[start * d..(start + target_t) * d]);
        }
        out
    };

    Ok(if pad_after_mean { fit_time(&subtract(&flat)) } else { subtract(&fit_time(&flat)) })
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub num_classes: usize,
    pub ids: Vec<String>,
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        if self.ids.len() != self.len() || self.labels.len() != self.len() {
            return Err(Error::Data("dataset columns disagree on length".into()));
        }
        let shape = self.inputs[0].shape();
        for x in &self.inputs {
            if x.shape() != shape {
                return Err(Error::Shape("dataset samples disagree on shape".into()));
            }
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|i| i == id)
    }

    /// Stacks the selected samples into one B x T x D batch.
    pub fn stack(&self, idxs: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        if idxs.is_empty() {
            return Err(Error::Data("cannot stack an empty batch".into()));
        }
        let shape = self.inputs[0].shape();
        let (t, d) = (shape[0], shape[1]);
        let mut batch = Tensor::zeros(&[idxs.len(), t, d]);
        for (bi, &i) in idxs.iter().enumerate() {
            batch.data_mut()[bi * t * d..(bi + 1) * t * d].copy_from_slice(self.inputs[i].data());
        }
        let labels = idxs.iter().map(|&i| self.labels[i]).collect();
        Ok((batch, labels))
    }

    /// Indices of all samples with the given label.
    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }
}

/// Preprocesses a split into a ready-to-train dataset.
pub fn make_dataset(
    seqs: &[SkeletonSequence],
    target_t: usize,
    mean: &MeanSkeleton,
    pad_after_mean: bool,
    num_classes: usize,
) -> Result<Dataset> {
    let mut ids = Vec::with_capacity(seqs.len());
    let mut inputs = Vec::with_capacity(seqs.len());
    let mut labels = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let label = seq
            .label
            .ok_or_else(|| Error::Data(format!("sequence '{}' has no label", seq.id)))?;
        ids.push(seq.id.clone());
        inputs.push(preprocess(seq, target_t, mean, pad_after_mean)?);
        labels.push(label);
    }
    let ds = Dataset { num_classes, ids, inputs, labels };
    ds.validate()?;
    Ok(ds)
}
