//! Model checkpoints: a TOML manifest (configs, dataset layout, mask
//! provenance) plus every parameter, batch-norm running statistic and the
//! mean skeleton as named tensors in the flat binary format. Round-trip
//! loads are bit-exact.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{DimLayout, MeanSkeleton};
use crate::error::{Error, Result};
use crate::msnet::{build_ms, MSModel, MSResTCNConfig};
use crate::restcn::stack::Stack;
use crate::restcn::{build_restcn, ResTCNConfig, ResTCNModel};
use crate::tensor::{read_named_tensors, write_named_tensors, Tensor};

const FORMAT_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "manifest.toml";
const TENSORS_FILE: &str = "tensors.bin";
const MEAN_TENSOR: &str = "mean_skeleton";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    kind: String,
    layout: DimLayout,
    #[serde(skip_serializing_if = "Option::is_none")]
    restcn: Option<ResTCNConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ms: Option<MSResTCNConfig>,
}

/// A loaded checkpoint: the model plus the preprocessing state it was
/// trained with.
pub struct Checkpoint {
    pub model: CheckpointModel,
    pub mean: MeanSkeleton,
    pub layout: DimLayout,
}

pub enum CheckpointModel {
    ResTCN(ResTCNModel),
    MsResTCN(MSModel),
}

impl Checkpoint {
    pub fn as_restcn(&self) -> Result<&ResTCNModel> {
        match &self.model {
            CheckpointModel::ResTCN(m) => Ok(m),
            CheckpointModel::MsResTCN(_) => {
                Err(Error::Consistency("checkpoint holds an MS-Res-TCN, expected a Res-TCN".into()))
            }
        }
    }
}

fn stack_entries<'a>(stack: &'a Stack, out: &mut Vec<(String, &'a Tensor)>) {
    out.push((stack.conv1.name.clone(), &stack.conv1.value));
    for unit in &stack.units {
        out.push((unit.bn.scale.name.clone(), &unit.bn.scale.value));
        out.push((unit.bn.shift.name.clone(), &unit.bn.shift.value));
        out.push((format!("{}.running_mean", unit.bn.name), &unit.bn.running_mean));
        out.push((format!("{}.running_var", unit.bn.name), &unit.bn.running_var));
        out.push((unit.conv.name.clone(), &unit.conv.value));
        if let Some(s) = &unit.shortcut {
            out.push((s.name.clone(), &s.value));
        }
    }
}

fn stack_slots<'a>(stack: &'a mut Stack, out: &mut Vec<(String, &'a mut Tensor)>) {
    out.push((stack.conv1.name.clone(), &mut stack.conv1.value));
    for unit in &mut stack.units {
        out.push((unit.bn.scale.name.clone(), &mut unit.bn.scale.value));
        out.push((unit.bn.shift.name.clone(), &mut unit.bn.shift.value));
        out.push((format!("{}.running_mean", unit.bn.name), &mut unit.bn.running_mean));
        out.push((format!("{}.running_var", unit.bn.name), &mut unit.bn.running_var));
        out.push((unit.conv.name.clone(), &mut unit.conv.value));
        if let Some(s) = &mut unit.shortcut {
            out.push((s.name.clone(), &mut s.value));
        }
    }
}

fn restcn_entries(model: &ResTCNModel) -> Vec<(String, &Tensor)> {
    let mut out = Vec::new();
    stack_entries(&model.stack, &mut out);
    out.push((model.head.weights.name.clone(), &model.head.weights.value));
    out.push((model.head.bias.name.clone(), &model.head.bias.value));
    out
}

fn restcn_slots(model: &mut ResTCNModel) -> Vec<(String, &mut Tensor)> {
    let mut out = Vec::new();
    stack_slots(&mut model.stack, &mut out);
    out.push((model.head.weights.name.clone(), &mut model.head.weights.value));
    out.push((model.head.bias.name.clone(), &mut model.head.bias.value));
    out
}

fn ms_entries(model: &MSModel) -> Vec<(String, &Tensor)> {
    let mut out = Vec::new();
    stack_entries(&model.main, &mut out);
    stack_entries(&model.ta, &mut out);
    for pipe in &model.pipes {
        out.push((pipe.conv.name.clone(), &pipe.conv.value));
        if let Some(bn) = &pipe.bn {
            out.push((bn.scale.name.clone(), &bn.scale.value));
            out.push((bn.shift.name.clone(), &bn.shift.value));
            out.push((format!("{}.running_mean", bn.name), &bn.running_mean));
            out.push((format!("{}.running_var", bn.name), &bn.running_var));
        }
    }
    out.push((model.head.weights.name.clone(), &model.head.weights.value));
    out.push((model.head.bias.name.clone(), &model.head.bias.value));
    out
}

fn ms_slots(model: &mut MSModel) -> Vec<(String, &mut Tensor)> {
    let mut out = Vec::new();
    stack_slots(&mut model.main, &mut out);
    stack_slots(&mut model.ta, &mut out);
    for pipe in &mut model.pipes {
        out.push((pipe.conv.name.clone(), &mut pipe.conv.value));
        if let Some(bn) = &mut pipe.bn {
            out.push((bn.scale.name.clone(), &mut bn.scale.value));
            out.push((bn.shift.name.clone(), &mut bn.shift.value));
            out.push((format!("{}.running_mean", bn.name), &mut bn.running_mean));
            out.push((format!("{}.running_var", bn.name), &mut bn.running_var));
        }
    }
    out.push((model.head.weights.name.clone(), &mut model.head.weights.value));
    out.push((model.head.bias.name.clone(), &mut model.head.bias.value));
    out
}

fn write_checkpoint<'a>(
    dir: &Path,
    manifest: &Manifest,
    mut entries: Vec<(String, &'a Tensor)>,
    mean: &'a MeanSkeleton,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = toml::to_string(manifest)
        .map_err(|e| Error::Data(format!("manifest serialization failed: {e}")))?;
    fs::write(dir.join(MANIFEST_FILE), text)?;
    entries.push((MEAN_TENSOR.to_string(), &mean.values));
    let mut w = BufWriter::new(fs::File::create(dir.join(TENSORS_FILE))?);
    write_named_tensors(&mut w, &entries)?;
    Ok(())
}

/// Saves a Res-TCN checkpoint into `dir`.
pub fn save_restcn(dir: &Path, model: &ResTCNModel, mean: &MeanSkeleton, layout: &DimLayout) -> Result<()> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: "restcn".into(),
        layout: layout.clone(),
        restcn: Some(model.config.clone()),
        ms: None,
    };
    write_checkpoint(dir, &manifest, restcn_entries(model), mean)
}

/// Saves an MS-Res-TCN checkpoint (the mask rides in the manifest).
pub fn save_ms(dir: &Path, model: &MSModel, mean: &MeanSkeleton, layout: &DimLayout) -> Result<()> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: "ms_restcn".into(),
        layout: layout.clone(),
        restcn: None,
        ms: Some(model.config.clone()),
    };
    write_checkpoint(dir, &manifest, ms_entries(model), mean)
}

fn fill_slots(slots: Vec<(String, &mut Tensor)>, map: &mut HashMap<String, Tensor>) -> Result<()> {
    for (name, slot) in slots {
        let tensor = map
            .remove(&name)
            .ok_or_else(|| Error::Data(format!("checkpoint is missing tensor '{name}'")))?;
        if tensor.shape() != slot.shape() {
            return Err(Error::Consistency(format!(
                "tensor '{name}' has shape {:?}, model expects {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        *slot = tensor;
    }
    Ok(())
}

/// Loads a checkpoint directory written by `save_restcn` or `save_ms`.
pub fn load(dir: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::parse(MANIFEST_FILE.to_string(), e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint format version {}",
            manifest.format_version
        )));
    }
    let mut r = BufReader::new(fs::File::open(dir.join(TENSORS_FILE))?);
    let mut map: HashMap<String, Tensor> = read_named_tensors(&mut r)?.into_iter().collect();
    let mean = MeanSkeleton {
        values: map
            .remove(MEAN_TENSOR)
            .ok_or_else(|| Error::Data("checkpoint is missing the mean skeleton".into()))?,
    };

    let model = match manifest.kind.as_str() {
        "restcn" => {
            let config = manifest
                .restcn
                .ok_or_else(|| Error::Data("restcn checkpoint lacks a model config".into()))?;
            let mut model = build_restcn(&config, 0)?;
            fill_slots(restcn_slots(&mut model), &mut map)?;
            CheckpointModel::ResTCN(model)
        }
        "ms_restcn" => {
            let config = manifest
                .ms
                .ok_or_else(|| Error::Data("ms checkpoint lacks a model config".into()))?;
            let mut model = build_ms(&config, 0)?;
            fill_slots(ms_slots(&mut model), &mut map)?;
            CheckpointModel::MsResTCN(model)
        }
        other => return Err(Error::Data(format!("unknown checkpoint kind '{other}'"))),
    };
    Ok(Checkpoint { model, mean, layout: manifest.layout })
}
