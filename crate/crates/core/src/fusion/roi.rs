//! RoIAlign over a single `[C, H, W]` feature map.
//!
//! Continuous coordinates put pixel `(y, x)` at `[x, x + 1) x [y, y + 1)`, so
//! its value sits at `(x + 0.5, y + 0.5)`. A normalized box is scaled by
//! `(W, H)` without rounding, split into `gh x gw` bins, and every bin averages
//! `sh x sw` bilinear samples at the centers of a regular sub-grid. Samples
//! outside the pixel-center hull clamp to the border.

use crate::tensor_io::{AgentBox, Tensor};

use super::FeatureMap;

/// Bilinear read at continuous position `(x, y)`.
pub fn bilinear(map: &FeatureMap, channel: usize, x: f64, y: f64) -> f64 {
    let (h, w) = (map.height, map.width);
    let u = (x - 0.5).clamp(0.0, (w - 1) as f64);
    let v = (y - 0.5).clamp(0.0, (h - 1) as f64);
    let x0 = u.floor() as usize;
    let y0 = v.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = u - x0 as f64;
    let fy = v - y0 as f64;
    let at = |yy: usize, xx: usize| map.get(channel, yy, xx);
    (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1))
}

/// Pools the region under `bbox` into a `[C, gh, gw]` tensor.
pub fn roi_align(map: &FeatureMap, bbox: &AgentBox, out_grid: (usize, usize), samples_per_bin: (usize, usize)) -> Tensor {
    let data = roi_align_values(map, bbox, out_grid, samples_per_bin);
    Tensor::from_f64(vec![map.channels, out_grid.0, out_grid.1], data).expect("roi output shape is positive")
}

pub(crate) fn roi_align_values(map: &FeatureMap, bbox: &AgentBox, (gh, gw): (usize, usize), (sh, sw): (usize, usize)) -> Vec<f64> {
    let x0 = bbox.x1() * map.width as f64;
    let y0 = bbox.y1() * map.height as f64;
    let bin_w = (bbox.x2() - bbox.x1()) * map.width as f64 / gw as f64;
    let bin_h = (bbox.y2() - bbox.y1()) * map.height as f64 / gh as f64;
    let count = (sh * sw) as f64;

    let mut out = Vec::with_capacity(map.channels * gh * gw);
    for c in 0..map.channels {
        for by in 0..gh {
            for bx in 0..gw {
                let mut acc = 0.0;
                for iy in 0..sh {
                    let y = y0 + by as f64 * bin_h + (iy as f64 + 0.5) * bin_h / sh as f64;
                    for ix in 0..sw {
                        let x = x0 + bx as f64 * bin_w + (ix as f64 + 0.5) * bin_w / sw as f64;
                        acc += bilinear(map, c, x, y);
                    }
                }
                out.push(acc / count);
            }
        }
    }
    out
}
