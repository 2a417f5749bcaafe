//! Batch subcommands. Each runs its per-video work on a pool of
//! `workers` threads and merges results in input order.

use std::fs;
use std::time::Instant;

use aen_core::fusion::FusionWeights;
use aen_core::fusion::{featurize_video, FeatureSource};
use aen_core::inference::{infer, read_proposals, to_records, write_proposals};
use aen_core::metrics::{default_an_values, evaluate, split_eval, EvalVideo};
use aen_core::supervision::gen_labels;
use aen_core::tensor_io::{write_atomic, write_tensor, Tensor};
use aen_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::io::{load_manifests, read_grids, require_dir, ManifestEntry};
use crate::summary::{Failure, RunSummary, Status};
use crate::synth;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Featurize,
    Labels,
    Infer,
    Eval,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Featurize => "featurize",
            Command::Labels => "labels",
            Command::Infer => "infer",
            Command::Eval => "eval",
        }
    }
}

#[derive(Default)]
struct Batch {
    processed: Vec<String>,
    failed: Vec<Failure>,
    warnings: Vec<String>,
}

impl Batch {
    fn push(&mut self, id: String, r: Result<Vec<String>>) {
        match r {
            Ok(w) => {
                self.processed.push(id);
                self.warnings.extend(w);
            }
            Err(e) => self.failed.push(Failure {
                video_id: id,
                error: e.to_string(),
            }),
        }
    }
}

/// Runs `f` over `items` in parallel and records outcomes in item order.
fn per_video<T: Sync>(
    items: &[T],
    id: impl Fn(&T) -> String + Sync,
    f: impl Fn(&T) -> Result<Vec<String>> + Sync,
) -> Batch {
    let results: Vec<(String, Result<Vec<String>>)> = items.par_iter().map(|x| (id(x), f(x))).collect();
    let mut b = Batch::default();
    for (id, r) in results {
        b.push(id, r);
    }
    b
}

fn per_manifest(
    entries: &[ManifestEntry],
    f: impl Fn(&aen_core::tensor_io::Manifest) -> Result<Vec<String>> + Sync,
) -> Batch {
    per_video(entries, |e| e.id().to_string(), |e| match &e.manifest {
        Ok(m) => f(m),
        Err(err) => Err(Error::Data(err.to_string())),
    })
}

fn synth(cfg: &RunConfig) -> Result<Batch> {
    let ids: Vec<usize> = (0..cfg.synth.n_videos).collect();
    Ok(per_video(&ids, |&i| synth::video_id(i), |&i| synth::write_video(cfg, i)))
}

fn load_weights(cfg: &RunConfig) -> Result<FusionWeights> {
    match &cfg.weights_dir {
        Some(dir) => {
            require_dir(dir, "weights")?;
            let w = FusionWeights::load_bundle(dir)?;
            if w.config != cfg.fusion {
                return Err(Error::Config(format!(
                    "weights in {} were built for a different fusion config",
                    dir.display()
                )));
            }
            Ok(w)
        }
        None => FusionWeights::seeded(cfg.fusion.clone(), cfg.seed),
    }
}

fn featurize(cfg: &RunConfig) -> Result<Batch> {
    let entries = load_manifests(&cfg.manifest_dir())?;
    let weights = load_weights(cfg)?;
    let source = match &cfg.feature_dir {
        Some(dir) => {
            require_dir(dir, "feature")?;
            FeatureSource::Files { dir: dir.clone() }
        }
        None => FeatureSource::Stub {
            seed: cfg.seed,
            dims: cfg.stub_dims(),
        },
    };
    let out = cfg.out_dir.join("features");
    Ok(per_manifest(&entries, |m| {
        let t = featurize_video(m, &weights, &source)?;
        write_tensor(&t, out.join(format!("{}.aent", m.video.video_id)))?;
        Ok(vec![])
    }))
}

fn labels(cfg: &RunConfig) -> Result<Batch> {
    let entries = load_manifests(&cfg.manifest_dir())?;
    let out = cfg.out_dir.join("labels");
    Ok(per_manifest(&entries, |m| {
        let id = &m.video.video_id;
        let grid = m.grid()?;
        let d = cfg.duration_policy.max_duration(grid.len());
        let l = gen_labels(&grid, &m.annotations, d)?;
        let dir = out.join(id);
        let t = grid.len();
        write_tensor(&Tensor::from_f64(vec![t], l.starts.clone())?, dir.join("starts.aent"))?;
        write_tensor(&Tensor::from_f64(vec![t], l.ends.clone())?, dir.join("ends.aent"))?;
        write_tensor(&Tensor::from_f64(vec![d, t], l.durations.values().to_vec())?, dir.join("durations.aent"))?;
        Ok(l.warnings.iter().map(|w| format!("{id}: {w}")).collect())
    }))
}

fn infer_cmd(cfg: &RunConfig) -> Result<Batch> {
    let entries = load_manifests(&cfg.manifest_dir())?;
    let grids_dir = cfg.grids_dir();
    require_dir(&grids_dir, "grids")?;
    let out = cfg.proposals_dir();
    Ok(per_manifest(&entries, |m| {
        let id = &m.video.video_id;
        let grid = m.grid()?;
        let g = read_grids(&grids_dir.join(id))?;
        if g.num_snippets() != grid.len() {
            return Err(Error::Data(format!(
                "grids have {} snippets, manifest has {}",
                g.num_snippets(),
                grid.len()
            )));
        }
        let proposals = infer(&g, &grid, &cfg.inference)?;
        write_proposals(&to_records(&proposals), out.join(format!("{id}.json")))?;
        Ok(vec![])
    }))
}

fn write_json<T: Serialize>(value: &T, path: &std::path::Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("result serializes");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn eval(cfg: &RunConfig) -> Result<Batch> {
    let entries = load_manifests(&cfg.manifest_dir())?;
    let prop_dir = cfg.proposals_dir();
    require_dir(&prop_dir, "proposals")?;
    let loaded: Vec<(String, Result<EvalVideo>)> = entries
        .par_iter()
        .map(|e| {
            let v = e.manifest.as_ref().map_err(|err| Error::Data(err.to_string())).and_then(|m| {
                let path = prop_dir.join(format!("{}.json", m.video.video_id));
                if !path.exists() {
                    return Err(Error::Data(format!("no proposals at {}", path.display())));
                }
                Ok(EvalVideo {
                    video_id: m.video.video_id.clone(),
                    annotations: m.annotations.clone(),
                    proposals: read_proposals(&path)?,
                })
            });
            (e.id().to_string(), v)
        })
        .collect();
    let mut batch = Batch::default();
    let mut videos = Vec::new();
    for (id, v) in loaded {
        match v {
            Ok(v) => {
                batch.push(id, Ok(vec![]));
                videos.push(v);
            }
            Err(e) => batch.push(id, Err(e)),
        }
    }
    if videos.is_empty() {
        return Err(Error::UndefinedMetric("no video has both a manifest and proposals".into()));
    }
    let thresholds = cfg.metric_preset.thresholds();
    let an = default_an_values();
    let result = evaluate(&videos, &thresholds, &an)?;
    let dir = cfg.out_dir.join("eval");
    write_atomic(&dir.join("result.json"), result.to_json().as_bytes())?;
    write_atomic(&dir.join("result.csv"), result.to_csv().as_bytes())?;
    if let Some(s) = &cfg.split {
        let split = split_eval(&videos, &s.seen, &s.unseen, &thresholds, &an)?;
        if !split.conflicts.is_empty() {
            batch
                .warnings
                .push(format!("{} videos carry both seen and unseen labels", split.conflicts.len()));
        }
        write_json(&split, &dir.join("split.json"))?;
    }
    Ok(batch)
}

/// Runs one subcommand and writes `summary-<command>.json` into the output
/// directory. The returned summary carries the exit status.
pub fn run(command: Command, cfg: &RunConfig) -> RunSummary {
    let started = Instant::now();
    let outcome = cfg.validate().and_then(|_| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
        pool.install(|| match command {
            Command::Synth => synth(cfg),
            Command::Featurize => featurize(cfg),
            Command::Labels => labels(cfg),
            Command::Infer => infer_cmd(cfg),
            Command::Eval => eval(cfg),
        })
    });
    let (batch, error) = match outcome {
        Ok(b) => (b, None),
        Err(e) => (Batch::default(), Some(e.to_string())),
    };
    let status = match (&error, batch.failed.is_empty(), cfg.keep_going) {
        (Some(_), _, _) => Status::Failed,
        (None, true, _) => Status::Success,
        (None, false, true) => Status::Partial,
        (None, false, false) => Status::Failed,
    };
    let mut summary = RunSummary {
        command: command.name().into(),
        status,
        config: cfg.clone(),
        processed: batch.processed,
        failed: batch.failed,
        warnings: batch.warnings,
        error,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let path = cfg.out_dir.join(format!("summary-{}.json", command.name()));
    if let Err(e) = fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::Io {
            path: cfg.out_dir.clone(),
            source: e,
        })
        .and_then(|_| summary.write(&path))
    {
        summary.status = Status::Failed;
        summary.error.get_or_insert_with(|| e.to_string());
    }
    summary
}
