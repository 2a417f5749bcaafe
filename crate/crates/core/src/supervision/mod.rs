//! Training targets and the objective they feed.
//!
//! Boundary labels mark, for every ground-truth action, the snippet whose
//! center is nearest to its start (end). Duration labels live on a `D x T`
//! grid where cell `(d, j)` is the candidate covering snippets `j..j+d`
//! (left edge of `j` to right edge of `j + d - 1`); each action labels the
//! cells that maximize its temporal IoU.

mod loss;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeline::{iou_unchecked, GroundTruthAction, SnippetGrid};

pub use loss::{
    l2_loss, l2_loss_grad, total_loss, weighted_binary_loss, weighted_binary_loss_grad, LossBreakdown, LossConfig,
};

/// How the maximum proposal length `D` follows from the snippet count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationPolicy {
    /// `D = T`.
    #[default]
    Full,
    /// `D = floor(T / 2)`, at least 1.
    Half,
}

impl DurationPolicy {
    pub fn max_duration(self, num_snippets: usize) -> usize {
        match self {
            DurationPolicy::Full => num_snippets,
            DurationPolicy::Half => (num_snippets / 2).max(1),
        }
    }
}

/// A `D x T` matrix indexed by duration `d` in `1..=D` and start snippet `j`.
/// Row `d - 1` holds duration `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationMap {
    max_duration: usize,
    num_snippets: usize,
    values: Vec<f64>,
}

impl DurationMap {
    pub fn zeros(max_duration: usize, num_snippets: usize) -> Self {
        DurationMap {
            max_duration,
            num_snippets,
            values: vec![0.0; max_duration * num_snippets],
        }
    }

    pub fn from_values(max_duration: usize, num_snippets: usize, values: Vec<f64>) -> Result<Self> {
        if max_duration == 0 || num_snippets == 0 || values.len() != max_duration * num_snippets {
            return Err(Error::invalid(format!(
                "duration map {max_duration}x{num_snippets} given {} values",
                values.len()
            )));
        }
        Ok(DurationMap {
            max_duration,
            num_snippets,
            values,
        })
    }

    pub fn max_duration(&self) -> usize {
        self.max_duration
    }

    pub fn num_snippets(&self) -> usize {
        self.num_snippets
    }

    /// Whether cell `(d, j)` is a proposal that fits inside the video.
    pub fn is_valid(&self, duration: usize, start: usize) -> bool {
        duration >= 1 && duration <= self.max_duration && start + duration <= self.num_snippets
    }

    pub fn get(&self, duration: usize, start: usize) -> f64 {
        self.values[(duration - 1) * self.num_snippets + start]
    }

    pub fn set(&mut self, duration: usize, start: usize, v: f64) {
        self.values[(duration - 1) * self.num_snippets + start] = v;
    }

    /// Row-major values, row `d - 1` for duration `d`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row-major validity mask matching [`DurationMap::values`].
    pub fn valid_mask(&self) -> Vec<bool> {
        (1..=self.max_duration)
            .flat_map(|d| (0..self.num_snippets).map(move |j| (d, j)))
            .map(|(d, j)| self.is_valid(d, j))
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        DurationMap {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLabels {
    pub starts: Vec<f64>,
    pub ends: Vec<f64>,
    /// Non-fatal conditions, e.g. a video without annotations.
    pub warnings: Vec<String>,
}

/// Start/end labels: 1 at the snippet nearest to each action boundary.
pub fn gen_boundary_labels(grid: &SnippetGrid, gts: &[GroundTruthAction]) -> Result<BoundaryLabels> {
    check_gts(gts)?;
    let mut starts = vec![0.0; grid.len()];
    let mut ends = vec![0.0; grid.len()];
    let mut warnings = Vec::new();
    if gts.is_empty() {
        warnings.push("no annotations: boundary labels are all zero".to_string());
    }
    for gt in gts {
        starts[grid.nearest_snippet(gt.start_sec)] = 1.0;
        ends[grid.nearest_snippet(gt.end_sec)] = 1.0;
    }
    Ok(BoundaryLabels { starts, ends, warnings })
}

fn check_gts(gts: &[GroundTruthAction]) -> Result<()> {
    for (i, g) in gts.iter().enumerate() {
        if !(g.start_sec.is_finite() && g.end_sec.is_finite() && g.start_sec >= 0.0 && g.start_sec < g.end_sec) {
            return Err(Error::invalid(format!(
                "annotation {i} [{}, {}] is not a valid interval",
                g.start_sec, g.end_sec
            )));
        }
    }
    Ok(())
}

/// Which IoU maxima of an action mark duration cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationLabelRule {
    /// Every cell attaining the action's maximum IoU over the whole grid.
    #[default]
    GlobalMax,
    /// Per start snippet, the durations attaining that column's maximum.
    DurationAxisMax,
    /// Per duration, the start snippets attaining that row's maximum.
    StartAxisMax,
}

/// Duration labels with the default [`DurationLabelRule::GlobalMax`] rule.
pub fn gen_duration_labels(grid: &SnippetGrid, gts: &[GroundTruthAction], max_duration: usize) -> Result<DurationMap> {
    gen_duration_labels_with(grid, gts, max_duration, DurationLabelRule::GlobalMax)
}

pub fn gen_duration_labels_with(
    grid: &SnippetGrid,
    gts: &[GroundTruthAction],
    max_duration: usize,
    rule: DurationLabelRule,
) -> Result<DurationMap> {
    let t = grid.len();
    if max_duration < 1 || max_duration > t {
        return Err(Error::invalid(format!("max duration {max_duration} outside [1, {t}]")));
    }
    check_gts(gts)?;
    let mut labels = DurationMap::zeros(max_duration, t);
    let mut ious = DurationMap::zeros(max_duration, t);
    for gt in gts {
        let target = gt.interval();
        for d in 1..=max_duration {
            for j in 0..=(t - d) {
                let span = grid.span(j, d).expect("cell is valid");
                ious.set(d, j, iou_unchecked(span, target));
            }
        }
        let mark = |labels: &mut DurationMap, cells: &mut dyn Iterator<Item = (usize, usize)>| {
            let cells: Vec<_> = cells.collect();
            let best = cells.iter().map(|&(d, j)| ious.get(d, j)).fold(0.0, f64::max);
            if best > 0.0 {
                for &(d, j) in &cells {
                    if ious.get(d, j) == best {
                        labels.set(d, j, 1.0);
                    }
                }
            }
        };
        match rule {
            DurationLabelRule::GlobalMax => {
                let mut all = (1..=max_duration).flat_map(|d| (0..=(t - d)).map(move |j| (d, j)));
                mark(&mut labels, &mut all);
            }
            DurationLabelRule::DurationAxisMax => {
                for j in 0..t {
                    let mut col = (1..=max_duration.min(t - j)).map(|d| (d, j));
                    mark(&mut labels, &mut col);
                }
            }
            DurationLabelRule::StartAxisMax => {
                for d in 1..=max_duration {
                    let mut row = (0..=(t - d)).map(|j| (d, j));
                    mark(&mut labels, &mut row);
                }
            }
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub starts: Vec<f64>,
    pub ends: Vec<f64>,
    pub durations: DurationMap,
    pub warnings: Vec<String>,
}

impl LabelSet {
    pub fn max_duration(&self) -> usize {
        self.durations.max_duration()
    }
}

pub fn gen_labels(grid: &SnippetGrid, gts: &[GroundTruthAction], max_duration: usize) -> Result<LabelSet> {
    let b = gen_boundary_labels(grid, gts)?;
    let durations = gen_duration_labels(grid, gts, max_duration)?;
    Ok(LabelSet {
        starts: b.starts,
        ends: b.ends,
        durations,
        warnings: b.warnings,
    })
}

/// Boundary probabilities and duration confidences for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrids {
    pub start_probs: Vec<f64>,
    pub end_probs: Vec<f64>,
    pub conf_cls: DurationMap,
    pub conf_reg: DurationMap,
}

impl ScoreGrids {
    pub fn new(start_probs: Vec<f64>, end_probs: Vec<f64>, conf_cls: DurationMap, conf_reg: DurationMap) -> Result<Self> {
        let g = ScoreGrids {
            start_probs,
            end_probs,
            conf_cls,
            conf_reg,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grids equal to the labels: probability 1 on labeled entries, 0 elsewhere.
    pub fn from_labels(labels: &LabelSet) -> Self {
        ScoreGrids {
            start_probs: labels.starts.clone(),
            end_probs: labels.ends.clone(),
            conf_cls: labels.durations.clone(),
            conf_reg: labels.durations.clone(),
        }
    }

    pub fn num_snippets(&self) -> usize {
        self.start_probs.len()
    }

    pub fn max_duration(&self) -> usize {
        self.conf_cls.max_duration()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.start_probs.len();
        if t == 0 || self.end_probs.len() != t {
            return Err(Error::invalid(format!(
                "start/end probability lengths {} and {} must match and be positive",
                t,
                self.end_probs.len()
            )));
        }
        for (name, m) in [("conf_cls", &self.conf_cls), ("conf_reg", &self.conf_reg)] {
            if m.num_snippets() != t || m.max_duration() != self.conf_cls.max_duration() || m.max_duration() > t {
                return Err(Error::invalid(format!(
                    "{name} is {}x{}, expected Dx{t} with D <= {t}",
                    m.max_duration(),
                    m.num_snippets()
                )));
            }
            let mask = m.valid_mask();
            for (k, (&v, ok)) in m.values().iter().zip(mask).enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!("{name}[{k}] = {v} outside [0, 1]")));
                }
                if !ok && v != 0.0 {
                    return Err(Error::invalid(format!("{name}[{k}] = {v} on a cell past the video end")));
                }
            }
        }
        for (name, v) in [("start_probs", &self.start_probs), ("end_probs", &self.end_probs)] {
            if let Some(k) = v.iter().position(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid(format!("{name}[{k}] = {} outside [0, 1]", v[k])));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        ScoreGrids {
            start_probs: self.start_probs.iter().map(|v| v * c).collect(),
            end_probs: self.end_probs.iter().map(|v| v * c).collect(),
            conf_cls: self.conf_cls.scaled(c),
            conf_reg: self.conf_reg.scaled(c),
        }
    }
}
