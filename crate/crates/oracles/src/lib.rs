//! Slow, direct reference computations for checking `aen-core`.
//!
//! Nothing here depends on `aen-core`; every routine works on plain numbers
//! and follows the textbook definition as literally as possible.

/// Bilinear RoI pooling computed by summing triangle-kernel weights over every
/// pixel of a `[c, h, w]` map. Pixel `(y, x)` sits at continuous position
/// `(x + 0.5, y + 0.5)`; sample positions clamp to the pixel-center hull.
pub fn roi_align_bruteforce(
    values: &[f64],
    (c, h, w): (usize, usize, usize),
    bbox: [f64; 4],
    (gh, gw): (usize, usize),
    (sh, sw): (usize, usize),
) -> Vec<f64> {
    let x_lo = bbox[0] * w as f64;
    let y_lo = bbox[1] * h as f64;
    let x_hi = bbox[2] * w as f64;
    let y_hi = bbox[3] * h as f64;
    let tri = |d: f64| (1.0 - d.abs()).max(0.0);
    let mut out = Vec::new();
    for ch in 0..c {
        for by in 0..gh {
            for bx in 0..gw {
                let mut sum = 0.0;
                for iy in 0..sh {
                    for ix in 0..sw {
                        let fy = (by as f64 + (iy as f64 + 0.5) / sh as f64) / gh as f64;
                        let fx = (bx as f64 + (ix as f64 + 0.5) / sw as f64) / gw as f64;
                        let y = y_lo + fy * (y_hi - y_lo);
                        let x = x_lo + fx * (x_hi - x_lo);
                        let u = (x - 0.5).max(0.0).min((w - 1) as f64);
                        let v = (y - 0.5).max(0.0).min((h - 1) as f64);
                        let mut sample = 0.0;
                        for py in 0..h {
                            for px in 0..w {
                                sample += tri(v - py as f64) * tri(u - px as f64) * values[(ch * h + py) * w + px];
                            }
                        }
                        sum += sample;
                    }
                }
                out.push(sum / (sh * sw) as f64);
            }
        }
    }
    out
}

fn iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let lo = if a.0 > b.0 { a.0 } else { b.0 };
    let hi = if a.1 < b.1 { a.1 } else { b.1 };
    let inter = if hi > lo { hi - lo } else { 0.0 };
    if inter == 0.0 {
        return 0.0;
    }
    let u_lo = if a.0 < b.0 { a.0 } else { b.0 };
    let u_hi = if a.1 > b.1 { a.1 } else { b.1 };
    inter / (u_hi - u_lo)
}

/// Duration labels by exhaustive scan. `out[d - 1][j]` is 1 when cell
/// `(d, j)` attains some action's maximum IoU over all valid cells.
pub fn duration_labels_bruteforce(
    num_snippets: usize,
    snippet_len: f64,
    fps: f64,
    gts: &[(f64, f64)],
    max_duration: usize,
) -> Vec<Vec<u8>> {
    let center = |i: usize| snippet_len * (i as f64 + 0.5) / fps;
    let half = snippet_len / (2.0 * fps);
    let mut out = vec![vec![0u8; num_snippets]; max_duration];
    for &gt in gts {
        let mut cells = Vec::new();
        for d in 1..=max_duration {
            for j in 0..num_snippets {
                if j + d <= num_snippets {
                    let span = (center(j) - half, center(j + d - 1) + half);
                    cells.push((d, j, iou(span, gt)));
                }
            }
        }
        let mut best = 0.0;
        for &(_, _, v) in &cells {
            if v > best {
                best = v;
            }
        }
        if best > 0.0 {
            for &(d, j, v) in &cells {
                if v == best {
                    out[d - 1][j] = 1;
                }
            }
        }
    }
    out
}

/// Index of the center closest to `t`, scanning every snippet; ties keep the
/// lower index.
pub fn nearest_center_bruteforce(num_snippets: usize, snippet_len: f64, fps: f64, t: f64) -> usize {
    let mut best = 0;
    for i in 1..num_snippets {
        let di = (snippet_len * (i as f64 + 0.5) / fps - t).abs();
        let db = (snippet_len * (best as f64 + 0.5) / fps - t).abs();
        if di < db {
            best = i;
        }
    }
    best
}

/// A proposal as `(start_idx, end_idx, start_sec, end_sec, score)`.
pub type RefProposal = (usize, usize, f64, f64, f64);

/// Gaussian Soft-NMS, one explicit step at a time.
pub fn soft_nms_reference(input: &[RefProposal], sigma: f64, floor: f64, top_k: usize) -> Vec<RefProposal> {
    let mut pool: Vec<RefProposal> = input.to_vec();
    let mut picked = Vec::new();
    loop {
        if picked.len() >= top_k || pool.is_empty() {
            break;
        }
        let mut best = 0;
        for k in 1..pool.len() {
            let (a, b) = (pool[k], pool[best]);
            let better = a.4 > b.4 || (a.4 == b.4 && (a.0, a.1) < (b.0, b.1));
            if better {
                best = k;
            }
        }
        if pool[best].4 < floor {
            break;
        }
        let chosen = pool.remove(best);
        for p in pool.iter_mut() {
            let o = iou((chosen.2, chosen.3), (p.2, p.3));
            p.4 *= (-(o * o) / sigma).exp();
        }
        picked.push(chosen);
    }
    picked
}

/// Largest number of ground truths that the first `an` proposals can cover
/// one-to-one, by trying every assignment. `iou[p][g]`.
pub fn max_matching_bruteforce(iou: &[Vec<f64>], tiou: f64, an: usize) -> usize {
    fn go(p: usize, rows: &[Vec<f64>], tiou: f64, used: &mut Vec<bool>) -> usize {
        if p == rows.len() {
            return 0;
        }
        let mut best = go(p + 1, rows, tiou, used);
        for g in 0..used.len() {
            if !used[g] && rows[p][g] >= tiou {
                used[g] = true;
                best = best.max(1 + go(p + 1, rows, tiou, used));
                used[g] = false;
            }
        }
        best
    }
    let rows = &iou[..an.min(iou.len())];
    let gts = iou.first().map_or(0, Vec::len);
    go(0, rows, tiou, &mut vec![false; gts])
}

/// Plain interval IoU for test use.
pub fn interval_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    iou(a, b)
}

/// Central difference of `f` at `x` along coordinate `i`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}
