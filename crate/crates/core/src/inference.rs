//! From score grids to a ranked proposal list.
//!
//! Boundary peaks are paired into candidates of `1..=D` snippets, each scored
//! as `P_S[t_s] * P_E[t_e] * sqrt(P_cc[d, t_s] * P_cr[d, t_s])` with
//! `d = t_e - t_s`, then Gaussian Soft-NMS decays overlapping candidates.
//! A candidate spans from the left edge of snippet `t_s` to the right edge of
//! snippet `t_e - 1`, the same interval as duration cell `(d, t_s)`.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::supervision::ScoreGrids;
use crate::tensor_io::write_atomic;
use crate::timeline::{iou_unchecked, Interval, SnippetGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub start_idx: usize,
    pub end_idx: usize,
    pub duration: usize,
    pub score: f64,
    pub start_sec: f64,
    pub end_sec: f64,
}

impl Proposal {
    pub fn interval(&self) -> Interval {
        Interval::new(self.start_sec, self.end_sec)
    }

    pub fn record(&self) -> ProposalRecord {
        ProposalRecord {
            t_start_sec: self.start_sec,
            t_end_sec: self.end_sec,
            score: self.score,
        }
    }
}

/// Higher score first, then earlier `(t_s, t_e)`.
fn rank(a: &Proposal, b: &Proposal) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.start_idx.cmp(&b.start_idx))
        .then(a.end_idx.cmp(&b.end_idx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    /// Indices with `p >= peak_ratio * max(p)` also count as peaks. `None`
    /// keeps local maxima only.
    pub peak_ratio: Option<f64>,
    pub sigma: f64,
    pub score_floor: f64,
    pub top_k: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            peak_ratio: Some(0.5),
            sigma: 0.4,
            score_floor: 0.001,
            top_k: 100,
        }
    }
}

/// Local maxima of `p` (a plateau contributes its first index; missing
/// neighbors count as -inf), united with every index reaching
/// `peak_ratio * max(p)`.
pub fn find_peaks(p: &[f64], peak_ratio: Option<f64>) -> Result<Vec<usize>> {
    if p.is_empty() {
        return Err(Error::invalid("cannot find peaks in an empty sequence"));
    }
    if let Some(i) = p.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid(format!("probability {i} = {} outside [0, 1]", p[i])));
    }
    let mut keep = vec![false; p.len()];
    let mut run_start = 0;
    while run_start < p.len() {
        let mut run_end = run_start;
        while run_end + 1 < p.len() && p[run_end + 1] == p[run_start] {
            run_end += 1;
        }
        let left_lower = run_start == 0 || p[run_start - 1] < p[run_start];
        let right_lower = run_end + 1 == p.len() || p[run_end + 1] < p[run_start];
        if left_lower && right_lower {
            keep[run_start] = true;
        }
        run_start = run_end + 1;
    }
    if let Some(ratio) = peak_ratio {
        let max = p.iter().copied().fold(0.0, f64::max);
        let threshold = ratio * max;
        for (k, &v) in keep.iter_mut().zip(p) {
            if v >= threshold {
                *k = true;
            }
        }
    }
    Ok(keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect())
}

/// Score of the candidate `(t_s, t_e)`.
pub fn proposal_score(start_prob: f64, end_prob: f64, conf_cls: f64, conf_reg: f64) -> f64 {
    start_prob * end_prob * (conf_cls * conf_reg).sqrt()
}

/// Pairs every start peak with every later end peak at most `max_duration`
/// snippets away. Sorted by score descending.
pub fn form_proposals(
    start_peaks: &[usize],
    end_peaks: &[usize],
    grids: &ScoreGrids,
    grid: &SnippetGrid,
    max_duration: usize,
) -> Vec<Proposal> {
    let max_duration = max_duration.min(grids.max_duration());
    let mut out = Vec::new();
    for &ts in start_peaks {
        for &te in end_peaks {
            if te <= ts || te - ts > max_duration || te >= grids.num_snippets() {
                continue;
            }
            let d = te - ts;
            let Some(span) = grid.span(ts, d) else { continue };
            let score = proposal_score(
                grids.start_probs[ts],
                grids.end_probs[te],
                grids.conf_cls.get(d, ts),
                grids.conf_reg.get(d, ts),
            );
            out.push(Proposal {
                start_idx: ts,
                end_idx: te,
                duration: d,
                score,
                start_sec: span.start,
                end_sec: span.end,
            });
        }
    }
    out.sort_by(rank);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftNmsParams {
    pub sigma: f64,
    pub score_floor: f64,
    pub top_k: usize,
}

impl From<&InferenceConfig> for SoftNmsParams {
    fn from(c: &InferenceConfig) -> Self {
        SoftNmsParams {
            sigma: c.sigma,
            score_floor: c.score_floor,
            top_k: c.top_k,
        }
    }
}

/// Gaussian Soft-NMS. Repeatedly keeps the best remaining candidate and
/// multiplies every other remaining score by `exp(-iou^2 / sigma)`. Stops at
/// `top_k` selections or when no remaining score reaches `score_floor`.
/// Output is in selection order with decayed scores.
pub fn soft_nms(proposals: &[Proposal], params: SoftNmsParams) -> Result<Vec<Proposal>> {
    if !(params.sigma > 0.0 && params.sigma.is_finite()) {
        return Err(Error::invalid(format!("soft-nms sigma {} must be positive", params.sigma)));
    }
    let mut remaining = proposals.to_vec();
    let mut kept = Vec::new();
    while kept.len() < params.top_k {
        let Some(best) = remaining
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| rank(a, b))
            .map(|(i, _)| i)
        else {
            break;
        };
        if remaining[best].score < params.score_floor {
            break;
        }
        let chosen = remaining.swap_remove(best);
        let chosen_iv = chosen.interval();
        for p in remaining.iter_mut() {
            let iou = iou_unchecked(chosen_iv, p.interval());
            p.score *= (-(iou * iou) / params.sigma).exp();
        }
        kept.push(chosen);
    }
    Ok(kept)
}

/// Peak detection, pairing, scoring and Soft-NMS.
pub fn infer(grids: &ScoreGrids, grid: &SnippetGrid, cfg: &InferenceConfig) -> Result<Vec<Proposal>> {
    grids.validate()?;
    if grids.num_snippets() != grid.len() {
        return Err(Error::invalid(format!(
            "score grids cover {} snippets, video has {}",
            grids.num_snippets(),
            grid.len()
        )));
    }
    let starts = find_peaks(&grids.start_probs, cfg.peak_ratio)?;
    let ends = find_peaks(&grids.end_probs, cfg.peak_ratio)?;
    let candidates = form_proposals(&starts, &ends, grids, grid, grids.max_duration());
    soft_nms(&candidates, cfg.into())
}

/// Interchange form of a proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalRecord {
    pub t_start_sec: f64,
    pub t_end_sec: f64,
    pub score: f64,
}

/// Records sorted by score descending (stable for equal scores).
pub fn to_records(proposals: &[Proposal]) -> Vec<ProposalRecord> {
    let mut out: Vec<ProposalRecord> = proposals.iter().map(Proposal::record).collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out
}

pub fn write_proposals(records: &[ProposalRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut json = serde_json::to_string_pretty(records).expect("records serialize");
    json.push('\n');
    write_atomic(path.as_ref(), json.as_bytes())
}

pub fn read_proposals(path: impl AsRef<Path>) -> Result<Vec<ProposalRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<ProposalRecord> =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for (i, r) in records.iter().enumerate() {
        if !(r.t_start_sec.is_finite() && r.t_end_sec > r.t_start_sec && r.score.is_finite()) {
            return Err(Error::validation(format!("[{i}]"), "proposal needs finite start < end and score"));
        }
    }
    Ok(records)
}
