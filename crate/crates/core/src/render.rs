//! SVG strips of skeleton frames: orthographic x-y projection, bones from a
//! joint-adjacency table, one panel per selected frame.

use std::fmt::Write as _;
use std::path::Path;

use crate::dataio::{DimLayout, SkeletonSequence, NTU_BONES, NTU_JOINT_NAMES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const PANEL_W: f64 = 160.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 14.0;

/// Bone table for a layout: the NTU adjacency when the joint names match,
/// otherwise a simple chain through the joints in order.
pub fn bones_for(layout: &DimLayout) -> Vec<(usize, usize)> {
    if layout.joint_names.len() == NTU_JOINT_NAMES.len()
        && layout.joint_names.iter().zip(NTU_JOINT_NAMES).all(|(a, b)| a == b)
    {
        NTU_BONES.to_vec()
    } else {
        (1..layout.joint_names.len()).map(|j| (j - 1, j)).collect()
    }
}

/// Picks `count` frame indices evenly across `total`, endpoints included.
pub fn pick_frames(total: usize, count: usize) -> Vec<usize> {
    let count = count.clamp(1, total.max(1));
    if count == 1 {
        return vec![0];
    }
    (0..count)
        .map(|i| (i as f64 * (total - 1) as f64 / (count - 1) as f64).round() as usize)
        .collect()
}

struct Bounds {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

fn bounds_of(frames: &Tensor, layout: &DimLayout) -> Bounds {
    let mut b = Bounds { min_x: f64::MAX, max_x: f64::MIN, min_y: f64::MAX, max_y: f64::MIN };
    let joints = layout.joint_names.len();
    for t in 0..frames.shape()[0] {
        for actor in 0..layout.actor_slots {
            for j in 0..joints {
                let x = frames.at2(t, layout.dim_of(actor, j, 0));
                let y = frames.at2(t, layout.dim_of(actor, j, 1));
                if x == 0.0 && y == 0.0 {
                    continue; // empty actor slot
                }
                b.min_x = b.min_x.min(x);
                b.max_x = b.max_x.max(x);
                b.min_y = b.min_y.min(y);
                b.max_y = b.max_y.max(y);
            }
        }
    }
    if b.min_x > b.max_x {
        b = Bounds { min_x: -1.0, max_x: 1.0, min_y: -1.0, max_y: 1.0 };
    }
    b
}

/// Renders selected frames of a flat T x D sequence into one SVG strip.
pub fn render_strip(path: &Path, frames: &Tensor, layout: &DimLayout, panels: usize, title: &str) -> Result<()> {
    if frames.rank() != 2 || frames.shape()[1] != layout.width() {
        return Err(Error::Shape(format!(
            "render expects T x {}, got {:?}",
            layout.width(),
            frames.shape()
        )));
    }
    let picks = pick_frames(frames.shape()[0], panels);
    let b = bounds_of(frames, layout);
    let span_x = (b.max_x - b.min_x).max(1e-6);
    let span_y = (b.max_y - b.min_y).max(1e-6);
    let scale = ((PANEL_W - 2.0 * MARGIN) / span_x).min((PANEL_H - 2.0 * MARGIN) / span_y);
    let bones = bones_for(layout);
    let joints = layout.joint_names.len();
    let colors = ["#1f77b4", "#d62728"];

    let width = PANEL_W * picks.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{h}" viewBox="0 0 {width} {h}">"#,
        h = PANEL_H + 18.0
    );
    let _ = writeln!(svg, r#"<text x="4" y="12" font-size="10" font-family="monospace">{title}</text>"#);

    for (pi, &t) in picks.iter().enumerate() {
        let x_off = pi as f64 * PANEL_W;
        let project = |x: f64, y: f64| -> (f64, f64) {
            // y grows upward in skeleton space, downward in SVG.
            let px = x_off + MARGIN + (x - b.min_x) * scale;
            let py = 18.0 + PANEL_H - MARGIN - (y - b.min_y) * scale;
            (px, py)
        };
        let _ = writeln!(
            svg,
            r##"<rect x="{x_off}" y="18" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#ccc"/>"##
        );
        let _ = writeln!(
            svg,
            r##"<text x="{}" y="{}" font-size="9" font-family="monospace" fill="#666">t={t}</text>"##,
            x_off + 4.0,
            PANEL_H + 14.0
        );
        for actor in 0..layout.actor_slots {
            // Skip actors that are entirely zero in this frame.
            let active = (0..joints).any(|j| {
                frames.at2(t, layout.dim_of(actor, j, 0)) != 0.0
                    || frames.at2(t, layout.dim_of(actor, j, 1)) != 0.0
            });
            if !active {
                continue;
            }
            let color = colors[actor % colors.len()];
            for &(a, c) in &bones {
                let (x1, y1) = project(
                    frames.at2(t, layout.dim_of(actor, a, 0)),
                    frames.at2(t, layout.dim_of(actor, a, 1)),
                );
                let (x2, y2) = project(
                    frames.at2(t, layout.dim_of(actor, c, 0)),
                    frames.at2(t, layout.dim_of(actor, c, 1)),
                );
                let _ = writeln!(
                    svg,
                    r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{color}" stroke-width="1.2"/>"#
                );
            }
            for j in 0..joints {
                let (cx, cy) = project(
                    frames.at2(t, layout.dim_of(actor, j, 0)),
                    frames.at2(t, layout.dim_of(actor, j, 1)),
                );
                let _ = writeln!(svg, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="1.6" fill="{color}"/>"#);
            }
        }
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

/// Renders every frame of a short sequence (used for filter strips).
pub fn render_sequence(path: &Path, seq: &SkeletonSequence, title: &str) -> Result<()> {
    render_strip(path, &seq.flatten(), &seq.layout, seq.num_frames, title)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pick_frames_spans_endpoints() {
        assert_eq!(pick_frames(10, 4), vec![0, 3, 6, 9]);
        assert_eq!(pick_frames(2, 8), vec![0, 1]);
        assert_eq!(pick_frames(5, 1), vec![0]);
    }

    #[test]
    fn renders_a_parsable_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("strip.svg");
        let layout = DimLayout { joint_names: vec!["a".into(), "b".into(), "c".into()], actor_slots: 1 };
        let mut frames = Tensor::zeros(&[6, 9]);
        for t in 0..6 {
            for j in 0..3 {
                let i = frames.idx2(t, j * 3);
                frames.data_mut()[i] = j as f64 * 0.3 + t as f64 * 0.01;
                let i = frames.idx2(t, j * 3 + 1);
                frames.data_mut()[i] = (j as f64 * 0.7).sin();
            }
        }
        render_strip(&path, &frames, &layout, 4, "test strip").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("<line"));
        assert!(text.trim_end().ends_with("</svg>"));
        assert_eq!(text.matches("<rect").count(), 4);
    }
}
