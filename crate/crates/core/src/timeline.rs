//! Timeline arithmetic: snippet grids, time/index mapping and temporal IoU.
//!
//! Every timestamp is kept in seconds. A video of `num_frames` frames is cut
//! into `T = floor(num_frames / snippet_len)` non-overlapping snippets; frames
//! past `T * snippet_len` are dropped. Snippet `i` spans
//! `[i * s, (i + 1) * s)` with `s = snippet_len / fps` and is represented by
//! its center `(i + 0.5) * s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on `duration_seconds == num_frames / fps`.
const DURATION_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoMeta {
    pub video_id: String,
    pub num_frames: u64,
    pub fps: f64,
    pub snippet_len: u64,
    pub duration_seconds: f64,
}

impl VideoMeta {
    /// Builds metadata with `duration_seconds` derived from the frame count.
    pub fn new(video_id: impl Into<String>, num_frames: u64, fps: f64, snippet_len: u64) -> Result<Self> {
        let meta = VideoMeta {
            video_id: video_id.into(),
            num_frames,
            fps,
            snippet_len,
            duration_seconds: num_frames as f64 / fps,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.video_id.is_empty() {
            return Err(Error::validation("video.video_id", "must not be empty"));
        }
        if self.num_frames == 0 {
            return Err(Error::validation("video.num_frames", "must be positive"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::validation("video.fps", "must be a positive finite number"));
        }
        if self.snippet_len == 0 {
            return Err(Error::validation("video.snippet_len", "must be positive"));
        }
        if self.num_frames < self.snippet_len {
            return Err(Error::validation(
                "video.num_frames",
                format!("{} frames is shorter than one snippet of {}", self.num_frames, self.snippet_len),
            ));
        }
        let expected = self.num_frames as f64 / self.fps;
        if !self.duration_seconds.is_finite()
            || (self.duration_seconds - expected).abs() > DURATION_REL_TOL * expected
        {
            return Err(Error::validation(
                "video.duration_seconds",
                format!("{} does not equal num_frames / fps = {}", self.duration_seconds, expected),
            ));
        }
        Ok(())
    }

    /// Length of one snippet in seconds.
    pub fn snippet_seconds(&self) -> f64 {
        self.snippet_len as f64 / self.fps
    }
}

/// A closed time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Interval { start, end }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Intersection over union of two intervals. Symmetric, exactly 1 for
/// identical inputs and 0 for disjoint ones.
pub fn temporal_iou(a: Interval, b: Interval) -> Result<f64> {
    for (name, iv) in [("first", a), ("second", b)] {
        if !(iv.start.is_finite() && iv.end.is_finite()) || iv.end <= iv.start {
            return Err(Error::invalid(format!(
                "{name} interval [{}, {}] must have positive finite length",
                iv.start, iv.end
            )));
        }
    }
    Ok(iou_unchecked(a, b))
}

#[inline]
pub(crate) fn iou_unchecked(a: Interval, b: Interval) -> f64 {
    // Written symmetrically so that iou(a, b) and iou(b, a) agree bit for bit.
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.end.max(b.end) - a.start.min(b.start);
    inter / union
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthAction {
    pub label: String,
    pub start_sec: f64,
    pub end_sec: f64,
}

impl GroundTruthAction {
    pub fn new(label: impl Into<String>, start_sec: f64, end_sec: f64) -> Self {
        GroundTruthAction {
            label: label.into(),
            start_sec,
            end_sec,
        }
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.start_sec, self.end_sec)
    }

    /// Checks `0 <= start < end <= duration`.
    pub fn validate(&self, duration_seconds: f64) -> std::result::Result<(), (&'static str, String)> {
        if !(self.start_sec.is_finite() && self.start_sec >= 0.0) {
            return Err(("start_sec", format!("{} must be finite and >= 0", self.start_sec)));
        }
        if !(self.end_sec.is_finite() && self.end_sec > self.start_sec) {
            return Err(("end_sec", format!("{} must be greater than start_sec {}", self.end_sec, self.start_sec)));
        }
        if self.end_sec > duration_seconds {
            return Err(("end_sec", format!("{} exceeds video duration {}", self.end_sec, duration_seconds)));
        }
        Ok(())
    }
}

/// The snippet decomposition of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct SnippetGrid {
    centers: Vec<f64>,
    snippet_seconds: f64,
}

/// Splits a video into `floor(L / δ)` snippets and computes their centers.
pub fn build_grid(meta: &VideoMeta) -> Result<SnippetGrid> {
    if meta.fps <= 0.0 || !meta.fps.is_finite() || meta.snippet_len == 0 {
        return Err(Error::invalid("fps and snippet_len must be positive"));
    }
    let count = meta.num_frames / meta.snippet_len;
    if count == 0 {
        return Err(Error::invalid(format!(
            "video {} has {} frames, fewer than one snippet of {}",
            meta.video_id, meta.num_frames, meta.snippet_len
        )));
    }
    let delta = meta.snippet_len as f64;
    let centers = (0..count)
        .map(|i| delta * (i as f64 + 0.5) / meta.fps)
        .collect();
    Ok(SnippetGrid {
        centers,
        snippet_seconds: delta / meta.fps,
    })
}

impl SnippetGrid {
    /// Number of snippets `T`.
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn snippet_seconds(&self) -> f64 {
        self.snippet_seconds
    }

    /// Interval covered by `duration` snippets starting at snippet `start`:
    /// from the left edge of `start` to the right edge of `start + duration - 1`.
    ///
    /// Returns `None` unless `duration >= 1` and `start + duration <= T`.
    pub fn span(&self, start: usize, duration: usize) -> Option<Interval> {
        if duration == 0 || start + duration > self.len() {
            return None;
        }
        let half = self.snippet_seconds / 2.0;
        Some(Interval::new(
            self.centers[start] - half,
            self.centers[start + duration - 1] + half,
        ))
    }

    /// Index of the snippet whose center is closest to `t`; ties go to the
    /// earlier snippet.
    pub fn nearest_snippet(&self, t: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, c) in self.centers.iter().enumerate() {
            let dist = (c - t).abs();
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(frames: u64, delta: u64, fps: f64) -> VideoMeta {
        VideoMeta::new("v", frames, fps, delta).unwrap()
    }

    #[test]
    fn grid_basic() {
        let g = build_grid(&meta(160, 16, 16.0)).unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g.centers()[0], 0.5);
        assert_eq!(build_grid(&meta(16, 16, 16.0)).unwrap().len(), 1);
        // 170 = 10 * 16 + 10 dropped frames
        assert_eq!(build_grid(&meta(170, 16, 16.0)).unwrap().len(), 10);
    }

    #[test]
    fn grid_rejects_short_video() {
        let m = VideoMeta {
            video_id: "v".into(),
            num_frames: 8,
            fps: 16.0,
            snippet_len: 16,
            duration_seconds: 0.5,
        };
        assert!(m.validate().is_err());
        assert!(matches!(build_grid(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn duration_mismatch_rejected() {
        let mut m = meta(160, 16, 16.0);
        m.duration_seconds = 10.5;
        assert!(matches!(m.validate(), Err(Error::Validation { path, .. }) if path == "video.duration_seconds"));
    }

    #[test]
    fn iou_examples() {
        let iou = |a: (f64, f64), b: (f64, f64)| temporal_iou(Interval::new(a.0, a.1), Interval::new(b.0, b.1)).unwrap();
        assert!((iou((0.0, 2.0), (1.0, 3.0)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou((0.0, 2.0), (0.0, 2.0)), 1.0);
        assert_eq!(iou((0.0, 1.0), (2.0, 3.0)), 0.0);
        assert_eq!(iou((0.0, 1.0), (1.0, 3.0)), 0.0);
    }

    #[test]
    fn iou_rejects_zero_length() {
        let r = temporal_iou(Interval::new(1.0, 1.0), Interval::new(0.0, 2.0));
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn nearest_snippet_tie_goes_earlier() {
        let g = build_grid(&meta(64, 16, 16.0)).unwrap();
        assert_eq!(g.nearest_snippet(1.0), 0);
        assert_eq!(g.nearest_snippet(1.4), 1);
        assert_eq!(g.nearest_snippet(99.0), 3);
    }

    #[test]
    fn span_edges() {
        let g = build_grid(&meta(64, 16, 16.0)).unwrap();
        assert_eq!(g.span(1, 2), Some(Interval::new(1.0, 3.0)));
        assert_eq!(g.span(3, 2), None);
        assert_eq!(g.span(0, 0), None);
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_reflexive(a in 0.0..100.0f64, la in 0.01..50.0f64, b in 0.0..100.0f64, lb in 0.01..50.0f64) {
            let x = Interval::new(a, a + la);
            let y = Interval::new(b, b + lb);
            let xy = temporal_iou(x, y).unwrap();
            prop_assert_eq!(xy, temporal_iou(y, x).unwrap());
            prop_assert!((0.0..=1.0).contains(&xy));
            prop_assert_eq!(temporal_iou(x, x).unwrap(), 1.0);
        }

        #[test]
        fn grid_floor_bounds(frames in 1u64..10_000, delta in 1u64..64, fps in 1.0..60.0f64) {
            prop_assume!(frames >= delta);
            let g = build_grid(&meta(frames, delta, fps)).unwrap();
            let t = g.len() as u64;
            prop_assert!(t * delta <= frames && frames < (t + 1) * delta);
            for (i, c) in g.centers().iter().enumerate() {
                let expect = delta as f64 * (i as f64 + 0.5) / fps;
                prop_assert!((c - expect).abs() <= 1e-9 * expect.max(1.0));
            }
            prop_assert!(g.centers().windows(2).all(|w| w[0] < w[1]));
        }
    }
}
