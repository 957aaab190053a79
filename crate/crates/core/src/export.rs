//! CSV exports and their matching readers. Floats are written in Rust's
//! shortest round-trip representation, so reloads are bit-exact.

use std::path::Path;

use crate::dataio::DimLayout;
use crate::error::{Error, Result};
use crate::fmd::DecodedSequence;
use crate::restcn::{Evaluation, FitReport};
use crate::tensor::Tensor;

fn to_data_err(e: csv::Error) -> Error {
    e.into()
}

/// One row per frame, one column per input dimension, named by the layout.
pub fn write_decoded_csv(path: &Path, dec: &DecodedSequence, layout: &DimLayout) -> Result<()> {
    let d = dec.frames.shape()[1];
    if layout.width() != d {
        return Err(Error::Shape(format!(
            "layout width {} does not match decoded width {}",
            layout.width(),
            d
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(layout.column_names()).map_err(to_data_err)?;
    for t in 0..dec.frames.shape()[0] {
        let row: Vec<String> = (0..d).map(|c| format!("{}", dec.frames.at2(t, c))).collect();
        w.write_record(&row).map_err(to_data_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a decoded CSV back into a T x D tensor (header skipped).
pub fn read_frames_csv(path: &Path) -> Result<Tensor> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers().map_err(to_data_err)?.len();
    let mut data = Vec::new();
    let mut rows = 0usize;
    for record in r.records() {
        let record = record.map_err(to_data_err)?;
        if record.len() != width {
            return Err(Error::parse(
                format!("{path:?} row {}", rows + 2),
                format!("expected {width} columns, got {}", record.len()),
            ));
        }
        for field in record.iter() {
            data.push(field.parse::<f64>().map_err(|_| {
                Error::parse(format!("{path:?} row {}", rows + 2), format!("bad float '{field}'"))
            })?);
        }
        rows += 1;
    }
    Tensor::from_vec(&[rows, width], data)
}

pub fn write_history_csv(path: &Path, report: &FitReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "train_acc", "test_loss", "test_acc", "lr"])
        .map_err(to_data_err)?;
    for e in &report.epochs {
        w.write_record([
            e.epoch.to_string(),
            format!("{}", e.train_loss),
            format!("{}", e.train_acc),
            format!("{}", e.test_loss),
            format!("{}", e.test_acc),
            format!("{}", e.lr),
        ])
        .map_err(to_data_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back the loss history columns written by `write_history_csv`.
pub fn read_history_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(to_data_err)?;
        let train: f64 = record[1].parse().map_err(|_| Error::Data("bad train_loss".into()))?;
        let test: f64 = record[3].parse().map_err(|_| Error::Data("bad test_loss".into()))?;
        out.push((train, test));
    }
    Ok(out)
}

/// Response-magnitude traces: a time column plus one column per filter.
pub fn write_trace_csv(path: &Path, filter_ids: &[usize], traces: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(filter_ids.iter().map(|id| format!("filter_{id}")));
    w.write_record(&header).map_err(to_data_err)?;
    let t_len = traces.first().map_or(0, |t| t.len());
    for t in 0..t_len {
        let mut row = vec![t.to_string()];
        row.extend(traces.iter().map(|tr| format!("{}", tr[t])));
        w.write_record(&row).map_err(to_data_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_confusion_csv(path: &Path, confusion: &[Vec<usize>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k = confusion.len();
    let mut header = vec!["true_class".to_string()];
    header.extend((0..k).map(|i| format!("pred_{i}")));
    w.write_record(&header).map_err(to_data_err)?;
    for (i, row) in confusion.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec).map_err(to_data_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-class accuracy table. With a baseline evaluation this becomes the
/// side-by-side layout: class, baseline, refined, delta, flagged.
pub fn write_per_class_csv(
    path: &Path,
    eval: &Evaluation,
    baseline: Option<&Evaluation>,
    flag_threshold: f64,
    class_names: Option<&[String]>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |a| format!("{a:.4}"));
    match baseline {
        None => {
            w.write_record(["class", "accuracy"]).map_err(to_data_err)?;
            for (i, acc) in eval.per_class.iter().enumerate() {
                let name = class_names.map_or(i.to_string(), |n| n[i].clone());
                w.write_record([name, fmt(*acc)]).map_err(to_data_err)?;
            }
        }
        Some(base) => {
            w.write_record(["class", "baseline", "refined", "delta", "flagged"])
                .map_err(to_data_err)?;
            for i in 0..eval.per_class.len() {
                let name = class_names.map_or(i.to_string(), |n| n[i].clone());
                let (b, r) = (base.per_class[i], eval.per_class[i]);
                let (delta, flagged) = match (b, r) {
                    (Some(b), Some(r)) => (format!("{:.4}", r - b), (r - b >= flag_threshold).to_string()),
                    _ => (String::new(), String::new()),
                };
                w.write_record([name, fmt(b), fmt(r), delta, flagged]).map_err(to_data_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
