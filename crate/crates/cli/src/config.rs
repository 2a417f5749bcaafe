use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use aen_core::fusion::FusionConfig;
use aen_core::inference::InferenceConfig;
use aen_core::metrics::MetricPreset;
use aen_core::supervision::{DurationPolicy, LossConfig};
use aen_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a run depends on. Loaded from a JSON file, then overridden by
/// command-line flags; the effective value is echoed into each run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/manifests`.
    pub manifest_dir: Option<PathBuf>,
    /// Defaults to `<out_dir>/grids`.
    pub grids_dir: Option<PathBuf>,
    /// Defaults to `<out_dir>/proposals`.
    pub proposals_dir: Option<PathBuf>,
    /// Backbone feature maps. When unset, the seeded stub backbone is used.
    pub feature_dir: Option<PathBuf>,
    /// Saved weight bundle. When unset, weights are drawn from `seed`.
    pub weights_dir: Option<PathBuf>,
    pub seed: u64,
    pub workers: usize,
    pub keep_going: bool,
    pub fusion: FusionConfig,
    /// Spatial size of stub backbone maps; channels come from `fusion`.
    pub stub_size: (usize, usize),
    pub duration_policy: DurationPolicy,
    pub loss: LossConfig,
    pub inference: InferenceConfig,
    pub metric_preset: MetricPreset,
    pub split: Option<SplitLabels>,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("out"),
            manifest_dir: None,
            grids_dir: None,
            proposals_dir: None,
            feature_dir: None,
            weights_dir: None,
            seed: 0,
            workers: 1,
            keep_going: false,
            fusion: FusionConfig::default(),
            stub_size: (8, 8),
            duration_policy: DurationPolicy::default(),
            loss: LossConfig::default(),
            inference: InferenceConfig::default(),
            metric_preset: MetricPreset::default(),
            split: None,
            synth: SynthConfig::default(),
        }
    }
}

/// Label vocabularies for a seen/unseen evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitLabels {
    pub seen: BTreeSet<String>,
    pub unseen: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_videos: usize,
    pub max_actions: usize,
    pub min_snippets: usize,
    pub max_snippets: usize,
    pub fps: f64,
    pub snippet_len: u64,
    pub max_agents: usize,
    pub labels: Vec<String>,
    /// Write score grids equal to the generated labels.
    pub oracle_grids: bool,
    /// Write stub backbone maps as files and reference them from manifests.
    pub feature_maps: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_videos: 50,
            max_actions: 3,
            min_snippets: 4,
            max_snippets: 32,
            fps: 25.0,
            snippet_len: 16,
            max_agents: 3,
            labels: ["run", "jump", "swim", "climb", "throw"].map(String::from).to_vec(),
            oracle_grids: true,
            feature_maps: false,
        }
    }
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub keep_going: bool,
    pub out_dir: Option<PathBuf>,
    pub manifest_dir: Option<PathBuf>,
    pub grids_dir: Option<PathBuf>,
    pub proposals_dir: Option<PathBuf>,
    pub feature_dir: Option<PathBuf>,
    pub weights_dir: Option<PathBuf>,
    pub metric_preset: Option<MetricPreset>,
    pub duration_policy: Option<DurationPolicy>,
    pub n_videos: Option<usize>,
    pub max_actions: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Validation {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        fn set_opt<T: Clone>(dst: &mut Option<T>, src: &Option<T>) {
            if src.is_some() {
                *dst = src.clone();
            }
        }
        set(&mut self.seed, &o.seed);
        set(&mut self.workers, &o.workers);
        self.keep_going |= o.keep_going;
        set(&mut self.out_dir, &o.out_dir);
        set_opt(&mut self.manifest_dir, &o.manifest_dir);
        set_opt(&mut self.grids_dir, &o.grids_dir);
        set_opt(&mut self.proposals_dir, &o.proposals_dir);
        set_opt(&mut self.feature_dir, &o.feature_dir);
        set_opt(&mut self.weights_dir, &o.weights_dir);
        set(&mut self.metric_preset, &o.metric_preset);
        set(&mut self.duration_policy, &o.duration_policy);
        set(&mut self.synth.n_videos, &o.n_videos);
        set(&mut self.synth.max_actions, &o.max_actions);
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.fusion.validate()?;
        self.loss.validate()?;
        if self.stub_size.0 == 0 || self.stub_size.1 == 0 {
            return Err(Error::Config("stub_size must be positive".into()));
        }
        let inf = &self.inference;
        if let Some(r) = inf.peak_ratio {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::Config(format!("inference.peak_ratio {r} must lie in (0, 1]")));
            }
        }
        if !(inf.sigma > 0.0 && inf.sigma.is_finite()) {
            return Err(Error::Config(format!("inference.sigma {} must be positive", inf.sigma)));
        }
        if !(0.0..1.0).contains(&inf.score_floor) || inf.top_k == 0 {
            return Err(Error::Config("inference.score_floor must lie in [0, 1) and top_k be positive".into()));
        }
        if let Some(s) = &self.split {
            if let Some(l) = s.seen.intersection(&s.unseen).next() {
                return Err(Error::Config(format!("label {l} is both seen and unseen")));
            }
        }
        let sy = &self.synth;
        if sy.n_videos == 0 {
            return Err(Error::Config("synth.n_videos must be at least 1".into()));
        }
        if sy.min_snippets < 2 || sy.min_snippets > sy.max_snippets {
            return Err(Error::Config("synth snippet range must satisfy 2 <= min <= max".into()));
        }
        if !(sy.fps > 0.0 && sy.fps.is_finite()) || sy.snippet_len == 0 {
            return Err(Error::Config("synth.fps and synth.snippet_len must be positive".into()));
        }
        if sy.labels.is_empty() {
            return Err(Error::Config("synth.labels must not be empty".into()));
        }
        Ok(())
    }

    pub fn manifest_dir(&self) -> PathBuf {
        self.manifest_dir.clone().unwrap_or_else(|| self.out_dir.join("manifests"))
    }

    pub fn grids_dir(&self) -> PathBuf {
        self.grids_dir.clone().unwrap_or_else(|| self.out_dir.join("grids"))
    }

    pub fn proposals_dir(&self) -> PathBuf {
        self.proposals_dir.clone().unwrap_or_else(|| self.out_dir.join("proposals"))
    }

    pub fn stub_dims(&self) -> [usize; 3] {
        [self.fusion.channels, self.stub_size.0, self.stub_size.1]
    }
}
