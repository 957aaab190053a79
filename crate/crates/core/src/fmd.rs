//! Feature Map Decoder: maps any recorded hidden representation back into
//! skeleton space.
//!
//! First-layer filters are compressed to a single time step (the mean of the
//! two innermost steps); a hidden activation then decodes as the weighted sum
//! of those compressed motion primitives. Representations in deeper blocks
//! are first retrieved into the previous block's channel space using the
//! block-entry compressed filters, the identity-path convolutions and the
//! recorded block-boundary activation from the same forward pass.

use crate::dataio::{DimLayout, MeanSkeleton, SkeletonSequence};
use crate::error::{Error, Result};
use crate::restcn::{ActivationBundle, ResTCNConfig, ResTCNModel, Stack, NUM_LAYERS};
use crate::tensor::Tensor;

/// Compressed (single-time-step) filters of layer 1, 5 or 8. Each row is one
/// filter; columns span the layer's input channels. Layers 5 and 8 also carry
/// the identity-path vectors, which have temporal length 1 by construction.
#[derive(Debug, Clone)]
pub struct CompressedFilterBank {
    pub layer: usize,
    /// N_l x C_in matrix of compressed residual filters.
    pub residual: Tensor,
    /// N_l x C_in identity-path vectors, present for layers 5 and 8.
    pub identity: Option<Tensor>,
}

/// A decoded skeleton-space sequence at the original temporal length.
#[derive(Debug, Clone)]
pub struct DecodedSequence {
    pub sample_id: String,
    pub layer: usize,
    /// T x D frames.
    pub frames: Tensor,
    pub mean_added: bool,
}

fn compress(filters: &Tensor) -> Result<Tensor> {
    let (n, f, c) = (filters.shape()[0], filters.shape()[1], filters.shape()[2]);
    if f % 2 != 0 {
        return Err(Error::Config(format!(
            "compression needs an even filter length, got {f}"
        )));
    }
    // Mean of the two innermost time steps: 1-based steps f/2 and f/2 + 1.
    let (lo, hi) = (f / 2 - 1, f / 2);
    let mut bank = Tensor::zeros(&[n, c]);
    for ni in 0..n {
        for ci in 0..c {
            bank.data_mut()[ni * c + ci] = 0.5 * (filters.at3(ni, lo, ci) + filters.at3(ni, hi, ci));
        }
    }
    Ok(bank)
}

fn squeeze_identity(filters: &Tensor) -> Tensor {
    let (n, f, c) = (filters.shape()[0], filters.shape()[1], filters.shape()[2]);
    debug_assert_eq!(f, 1, "identity-path convs have temporal length 1");
    Tensor::from_vec(&[n, c], filters.data().to_vec()).expect("length matches")
}

fn compress_stack_filters(stack: &Stack, layer: usize) -> Result<CompressedFilterBank> {
    match layer {
        1 => Ok(CompressedFilterBank {
            layer,
            residual: compress(&stack.conv1.value)?,
            identity: None,
        }),
        5 | 8 => {
            let unit = stack.unit(layer);
            let shortcut = unit.shortcut.as_ref().ok_or_else(|| {
                Error::Config(format!("layer {layer} has no identity-path convolution"))
            })?;
            Ok(CompressedFilterBank {
                layer,
                residual: compress(&unit.conv.value)?,
                identity: Some(squeeze_identity(&shortcut.value)),
            })
        }
        _ => Err(Error::Param(format!("compressed banks exist for layers 1, 5, 8; got {layer}"))),
    }
}

/// Compresses the filters of layer 1, 5 or 8 of the given model.
pub fn compress_filters(model: &ResTCNModel, layer: usize) -> Result<CompressedFilterBank> {
    compress_stack_filters(&model.stack, layer)
}

fn check_bundle(bundle: &ActivationBundle, config: &ResTCNConfig) -> Result<()> {
    if bundle.layers.len() < NUM_LAYERS {
        return Err(Error::Data(format!(
            "bundle records {} layers; decoding needs all {}",
            bundle.layers.len(),
            NUM_LAYERS
        )));
    }
    if bundle.input.rank() != 2 || bundle.input.shape()[1] != config.input_dim {
        return Err(Error::Consistency(format!(
            "bundle input is {:?}, model expects T x {}",
            bundle.input.shape(),
            config.input_dim
        )));
    }
    let t = bundle.input.shape()[0];
    for l in 1..=NUM_LAYERS {
        let x = &bundle.layers[l - 1];
        let want = [config.layer_extent(t, l), config.layer_channels(l)];
        if x.shape() != want {
            return Err(Error::Consistency(format!(
                "bundle layer {l} is {:?}, model expects {:?}",
                x.shape(),
                want
            )));
        }
    }
    Ok(())
}

/// One retrieval step: maps an activation map X (T x N) into the previous
/// block's channel space using the recorded block-boundary activation
/// `boundary` (T x N, time-aligned to X).
fn retrieve(x: &Tensor, boundary: &Tensor, bank: &CompressedFilterBank) -> Tensor {
    let (t, n) = (x.shape()[0], x.shape()[1]);
    let c = bank.residual.shape()[1];
    let resid = bank.residual.data();
    let ident = bank.identity.as_ref().expect("retrieval banks carry identity vectors").data();
    let mut out = Tensor::zeros(&[t, c]);
    for ti in 0..t {
        for ni in 0..n {
            let xv = x.at2(ti, ni);
            let bv = boundary.at2(ti, ni);
            let diff = xv - bv;
            let row = ni * c;
            for ci in 0..c {
                out.data_mut()[ti * c + ci] += resid[row + ci] * diff + ident[row + ci] * bv;
            }
        }
    }
    out
}

/// Weighted sum of compressed layer-1 primitives: X (T x N_c1) -> T x D.
fn primitives_decode(x: &Tensor, bank1: &CompressedFilterBank) -> Tensor {
    let (t, n) = (x.shape()[0], x.shape()[1]);
    let d = bank1.residual.shape()[1];
    let w = bank1.residual.data();
    let mut out = Tensor::zeros(&[t, d]);
    for ti in 0..t {
        for ni in 0..n {
            let xv = x.at2(ti, ni);
            if xv == 0.0 {
                continue;
            }
            let row = ni * d;
            for di in 0..d {
                out.data_mut()[ti * d + di] += w[row + di] * xv;
            }
        }
    }
    out
}

/// Samples every stride-th frame of `x`, aligning a downsampled layer's time
/// axis with the block boundary it retrieves against.
fn subsample_rows(x: &Tensor, rows: usize, stride: usize) -> Tensor {
    let n = x.shape()[1];
    let mut out = Tensor::zeros(&[rows, n]);
    for r in 0..rows {
        let src = r * stride;
        for ci in 0..n {
            out.data_mut()[r * n + ci] = x.at2(src, ci);
        }
    }
    out
}

/// Decodes the recorded activation of `layer` into raw skeleton space at the
/// layer's native temporal extent. No mean is added.
///
/// Block A decodes directly through the layer-1 primitives. Block B first
/// retrieves through the layer-5 banks against the recorded X5. Block C
/// first retrieves through the layer-8 banks against the recorded X8, then
/// runs the full Block-B procedure (X5 subsampled to the quarter rate).
pub fn decode_raw(bundle: &ActivationBundle, model: &ResTCNModel, layer: usize) -> Result<Tensor> {
    if !(1..=NUM_LAYERS).contains(&layer) {
        return Err(Error::Param(format!("layer must be in 1..=10, got {layer}")));
    }
    check_bundle(bundle, &model.config)?;
    let bank1 = compress_filters(model, 1)?;
    let x = bundle.layer(layer)?;

    let in_c1_space = match layer {
        1..=4 => x.clone(),
        5..=7 => {
            let bank5 = compress_filters(model, 5)?;
            retrieve(x, bundle.layer(5)?, &bank5)
        }
        _ => {
            let bank8 = compress_filters(model, 8)?;
            let bank5 = compress_filters(model, 5)?;
            let in_c2_space = retrieve(x, bundle.layer(8)?, &bank8);
            // Align the quarter-rate frames with X5's half rate.
            let stride = model.config.layer_stride(8);
            let x5 = subsample_rows(bundle.layer(5)?, in_c2_space.shape()[0], stride);
            retrieve(&in_c2_space, &x5, &bank5)
        }
    };
    Ok(primitives_decode(&in_c1_space, &bank1))
}

/// Piecewise-linear temporal up-sampling with the first and last frames
/// pinned (source knot i sits at target position i * (target-1) / (T'-1)).
pub fn upsample_linear(seq: &Tensor, target_t: usize) -> Result<Tensor> {
    if seq.rank() != 2 {
        return Err(Error::Shape(format!("upsample expects T x D, got {:?}", seq.shape())));
    }
    let (t, d) = (seq.shape()[0], seq.shape()[1]);
    if t < 2 {
        return Err(Error::Data(format!("upsampling needs at least 2 frames, got {t}")));
    }
    if target_t < t {
        return Err(Error::Param(format!("target length {target_t} is shorter than input {t}")));
    }
    if target_t == t {
        return Ok(seq.clone());
    }
    let mut out = Tensor::zeros(&[target_t, d]);
    let scale = (t - 1) as f64 / (target_t - 1) as f64;
    for j in 0..target_t {
        let p = j as f64 * scale;
        let i0 = (p.floor() as usize).min(t - 2);
        let w = p - i0 as f64;
        for di in 0..d {
            out.data_mut()[j * d + di] = (1.0 - w) * seq.at2(i0, di) + w * seq.at2(i0 + 1, di);
        }
    }
    Ok(out)
}

/// Full decode: raw linear decode, temporal up-sampling back to the input
/// length and mean-skeleton restoration.
pub fn decode(
    bundle: &ActivationBundle,
    model: &ResTCNModel,
    layer: usize,
    mean: &MeanSkeleton,
) -> Result<DecodedSequence> {
    let raw = decode_raw(bundle, model, layer)?;
    if mean.width() != raw.shape()[1] {
        return Err(Error::Shape(format!(
            "mean skeleton width {} does not match decode width {}",
            mean.width(),
            raw.shape()[1]
        )));
    }
    let t = bundle.input.shape()[0];
    let mut frames = upsample_linear(&raw, t)?;
    let d = frames.shape()[1];
    for r in 0..t {
        for c in 0..d {
            frames.data_mut()[r * d + c] += mean.values.data()[c];
        }
    }
    Ok(DecodedSequence { sample_id: bundle.sample_id.clone(), layer, frames, mean_added: true })
}

/// Renders one first-layer filter as an f1-frame skeleton sequence: each time
/// step maps back onto its semantic joints, plus the mean skeleton.
pub fn filter_to_skeleton(
    model: &ResTCNModel,
    filter_id: usize,
    mean: &MeanSkeleton,
    layout: &DimLayout,
) -> Result<SkeletonSequence> {
    let w1 = &model.stack.conv1.value;
    let (n, f1, d) = (w1.shape()[0], w1.shape()[1], w1.shape()[2]);
    if filter_id >= n {
        return Err(Error::Param(format!("filter {filter_id} out of range for {n} first-layer filters")));
    }
    if layout.width() != d || mean.width() != d {
        return Err(Error::Shape(format!(
            "layout width {} / mean width {} do not match input dim {}",
            layout.width(),
            mean.width(),
            d
        )));
    }
    let mut seq = SkeletonSequence::zeros(&format!("filter{filter_id}"), layout.clone(), f1);
    for t in 0..f1 {
        let frame = seq.frame_mut(t);
        for c in 0..d {
            frame[c] = w1.at3(filter_id, t, c) + mean.values.data()[c];
        }
    }
    Ok(seq)
}
