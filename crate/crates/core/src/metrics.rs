//! Class-agnostic proposal evaluation: recall at tIoU thresholds, the average
//! recall versus proposals-per-video curve (AR@AN) and its normalized area.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::ProposalRecord;
use crate::timeline::{iou_unchecked, GroundTruthAction, Interval};

/// tIoU threshold presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricPreset {
    /// 0.50, 0.55, ..., 0.95
    #[default]
    ActivityNet,
    /// 0.50, 0.55, ..., 1.00
    Thumos,
}

impl MetricPreset {
    pub fn thresholds(self) -> Vec<f64> {
        let last = match self {
            MetricPreset::ActivityNet => 95,
            MetricPreset::Thumos => 100,
        };
        (50..=last).step_by(5).map(|p| p as f64 / 100.0).collect()
    }
}

/// Default AN grid for the area under the AR curve.
pub fn default_an_values() -> Vec<usize> {
    (1..=100).collect()
}

/// One video's ground truth with its ranked proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalVideo {
    pub video_id: String,
    pub annotations: Vec<GroundTruthAction>,
    pub proposals: Vec<ProposalRecord>,
}

fn by_rank(a: &ProposalRecord, b: &ProposalRecord) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.t_start_sec.total_cmp(&b.t_start_sec))
        .then(a.t_end_sec.total_cmp(&b.t_end_sec))
}

/// IoU table of one video: `iou[p][g]` for proposals in rank order.
struct VideoTable {
    iou: Vec<Vec<f64>>,
    num_gts: usize,
}

impl VideoTable {
    fn new(v: &EvalVideo) -> Self {
        let mut ranked = v.proposals.clone();
        ranked.sort_by(by_rank);
        let gts: Vec<Interval> = v.annotations.iter().map(GroundTruthAction::interval).collect();
        let iou = ranked
            .iter()
            .map(|p| {
                let iv = Interval::new(p.t_start_sec, p.t_end_sec);
                gts.iter().map(|g| iou_unchecked(iv, *g)).collect()
            })
            .collect();
        VideoTable {
            iou,
            num_gts: gts.len(),
        }
    }

    /// Ground truths matched one-to-one by the top `an` proposals at `tiou`.
    ///
    /// Proposals claim ground truths in rank order; a claim may re-route an
    /// earlier proposal to another free ground truth (augmenting path), so
    /// the count is the maximum one-to-one matching.
    fn matched(&self, tiou: f64, an: usize) -> usize {
        let top = an.min(self.iou.len());
        let mut owner: Vec<Option<usize>> = vec![None; self.num_gts];
        let mut count = 0;
        for p in 0..top {
            let mut visited = vec![false; self.num_gts];
            if self.augment(p, tiou, &mut owner, &mut visited) {
                count += 1;
            }
        }
        count
    }

    fn augment(&self, p: usize, tiou: f64, owner: &mut [Option<usize>], visited: &mut [bool]) -> bool {
        for g in 0..self.num_gts {
            if visited[g] || self.iou[p][g] < tiou {
                continue;
            }
            visited[g] = true;
            let free = match owner[g] {
                None => true,
                Some(q) => self.augment(q, tiou, owner, visited),
            };
            if free {
                owner[g] = Some(p);
                return true;
            }
        }
        false
    }
}

fn total_gts(videos: &[EvalVideo]) -> Result<usize> {
    let n: usize = videos.iter().map(|v| v.annotations.len()).sum();
    if n == 0 {
        return Err(Error::UndefinedMetric("no ground-truth actions to recall".into()));
    }
    Ok(n)
}

/// Fraction of all ground truths, pooled over videos, matched by the top `an`
/// proposals of their video at IoU >= `tiou`.
pub fn recall_at(videos: &[EvalVideo], tiou: f64, an: usize) -> Result<f64> {
    if an == 0 {
        return Err(Error::invalid("an must be at least 1"));
    }
    let n = total_gts(videos)?;
    let hit: usize = videos.iter().map(|v| VideoTable::new(v).matched(tiou, an)).sum();
    Ok(hit as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub thresholds: Vec<f64>,
    pub an_values: Vec<usize>,
    /// AN -> recall averaged over thresholds.
    pub ar_at_an: BTreeMap<usize, f64>,
    /// `per_tiou_recall[k][a]`: recall at `thresholds[k]` with `an_values[a]`.
    pub per_tiou_recall: Vec<Vec<f64>>,
    /// `100 x` trapezoidal area under AR(AN), normalized by the AN range.
    pub auc: f64,
    pub num_videos: usize,
    pub num_gts: usize,
}

impl EvalResult {
    /// Rows are AN, columns the thresholds followed by their mean.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("an");
        for t in &self.thresholds {
            out.push_str(&format!(",{t}"));
        }
        out.push_str(",mean\n");
        for (a, an) in self.an_values.iter().enumerate() {
            out.push_str(&an.to_string());
            for row in &self.per_tiou_recall {
                out.push_str(&format!(",{}", row[a]));
            }
            out.push_str(&format!(",{}\n", self.ar_at_an[an]));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("eval result serializes");
        s.push('\n');
        s
    }
}

pub fn evaluate(videos: &[EvalVideo], thresholds: &[f64], an_values: &[usize]) -> Result<EvalResult> {
    if thresholds.is_empty() || an_values.is_empty() {
        return Err(Error::invalid("need at least one threshold and one AN value"));
    }
    if an_values.contains(&0) {
        return Err(Error::invalid("AN values must be at least 1"));
    }
    let mut ids = BTreeSet::new();
    if let Some(dup) = videos.iter().find(|v| !ids.insert(v.video_id.as_str())) {
        return Err(Error::invalid(format!("video {} appears twice", dup.video_id)));
    }
    let num_gts = total_gts(videos)?;
    let mut an_sorted = an_values.to_vec();
    an_sorted.sort_unstable();
    an_sorted.dedup();

    let tables: Vec<VideoTable> = videos.iter().map(VideoTable::new).collect();
    let per_tiou_recall: Vec<Vec<f64>> = thresholds
        .iter()
        .map(|&t| {
            an_sorted
                .iter()
                .map(|&an| tables.iter().map(|tb| tb.matched(t, an)).sum::<usize>() as f64 / num_gts as f64)
                .collect()
        })
        .collect();
    let ar: Vec<f64> = (0..an_sorted.len())
        .map(|a| per_tiou_recall.iter().map(|row| row[a]).sum::<f64>() / thresholds.len() as f64)
        .collect();
    let auc = if an_sorted.len() == 1 {
        100.0 * ar[0]
    } else {
        let area: f64 = an_sorted
            .windows(2)
            .zip(ar.windows(2))
            .map(|(x, y)| (x[1] - x[0]) as f64 * (y[0] + y[1]) / 2.0)
            .sum();
        100.0 * area / (an_sorted[an_sorted.len() - 1] - an_sorted[0]) as f64
    };
    Ok(EvalResult {
        thresholds: thresholds.to_vec(),
        ar_at_an: an_sorted.iter().copied().zip(ar).collect(),
        an_values: an_sorted,
        per_tiou_recall,
        auc,
        num_videos: videos.len(),
        num_gts,
    })
}

/// Seen/unseen evaluation of one corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitResult {
    /// `None` when the partition has no ground truth to recall.
    pub seen: Option<EvalResult>,
    pub unseen: Option<EvalResult>,
    pub seen_videos: Vec<String>,
    pub unseen_videos: Vec<String>,
    pub seen_gts: usize,
    pub unseen_gts: usize,
    /// Videos with labels from both sets; excluded from both partitions.
    pub conflicts: Vec<String>,
}

/// Partitions videos by whether their labels fall in `seen_labels` or
/// `unseen_labels` and evaluates each partition.
pub fn split_eval(
    videos: &[EvalVideo],
    seen_labels: &BTreeSet<String>,
    unseen_labels: &BTreeSet<String>,
    thresholds: &[f64],
    an_values: &[usize],
) -> Result<SplitResult> {
    if let Some(l) = seen_labels.intersection(unseen_labels).next() {
        return Err(Error::invalid(format!("label {l} is both seen and unseen")));
    }
    let mut seen = Vec::new();
    let mut unseen = Vec::new();
    let mut conflicts = Vec::new();
    for v in videos {
        let in_seen = v.annotations.iter().any(|a| seen_labels.contains(&a.label));
        let in_unseen = v.annotations.iter().any(|a| unseen_labels.contains(&a.label));
        match (in_seen, in_unseen) {
            (true, true) => conflicts.push(v.video_id.clone()),
            (true, false) => seen.push(v.clone()),
            (false, true) => unseen.push(v.clone()),
            (false, false) => {}
        }
    }
    let eval = |part: &[EvalVideo]| match evaluate(part, thresholds, an_values) {
        Ok(r) => Ok(Some(r)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let count = |part: &[EvalVideo]| part.iter().map(|v| v.annotations.len()).sum();
    Ok(SplitResult {
        seen: eval(&seen)?,
        unseen: eval(&unseen)?,
        seen_videos: seen.iter().map(|v| v.video_id.clone()).collect(),
        unseen_videos: unseen.iter().map(|v| v.video_id.clone()).collect(),
        seen_gts: count(&seen),
        unseen_gts: count(&unseen),
        conflicts,
    })
}
