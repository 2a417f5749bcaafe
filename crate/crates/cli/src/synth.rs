//! Seeded synthetic corpus: manifests, oracle score grids and stub backbone
//! maps.

use std::collections::BTreeSet;

use aen_core::fusion::stub_backbone;
use aen_core::supervision::{gen_labels, ScoreGrids};
use aen_core::tensor_io::{write_manifest, write_tensor, AgentBox, Manifest, SnippetEntry};
use aen_core::timeline::{GroundTruthAction, VideoMeta};
use aen_core::{KeyedStream, Result};

use crate::config::RunConfig;
use crate::io::write_grids;

pub fn video_id(i: usize) -> String {
    format!("video_{i:04}")
}

/// Uniform integer in `lo..=hi`.
fn pick(s: &mut KeyedStream, lo: usize, hi: usize) -> usize {
    lo + (s.next_u64() % (hi - lo + 1) as u64) as usize
}

fn random_box(s: &mut KeyedStream) -> AgentBox {
    let x1 = 0.8 * s.unit();
    let y1 = 0.8 * s.unit();
    let x2 = x1 + (1.0 - x1) * (0.1 + 0.9 * s.unit());
    let y2 = y1 + (1.0 - y1) * (0.1 + 0.9 * s.unit());
    AgentBox([x1, y1, x2, y2])
}

/// Builds video `i` of the corpus. Depends only on the seed and `i`.
///
/// Each action covers snippets `j..j+d` shifted right by a small fraction of
/// a snippet, so its nearest start and end snippets are `j` and `j + d` and
/// its best-matching duration cell is `(d, j)`. No two actions share a cell.
pub fn synth_manifest(cfg: &RunConfig, i: usize) -> Result<Manifest> {
    let sy = &cfg.synth;
    let id = video_id(i);
    let mut s = KeyedStream::new("aen.synth", cfg.seed, &[id.as_bytes()]);
    let t = pick(&mut s, sy.min_snippets, sy.max_snippets);
    let extra = pick(&mut s, 0, sy.snippet_len as usize - 1) as u64;
    let video = VideoMeta::new(&id, t as u64 * sy.snippet_len + extra, sy.fps, sy.snippet_len)?;
    let step = video.snippet_seconds();
    let max_d = cfg.duration_policy.max_duration(t).min(t - 1);

    let wanted = if sy.max_actions == 0 { 0 } else { pick(&mut s, 1, sy.max_actions) };
    let mut cells = BTreeSet::new();
    let mut annotations = Vec::new();
    for _ in 0..wanted * 20 {
        if annotations.len() == wanted {
            break;
        }
        let d = pick(&mut s, 1, max_d);
        let j = pick(&mut s, 0, t - 1 - d);
        let shift = 0.005 + 0.015 * s.unit();
        let label = &sy.labels[pick(&mut s, 0, sy.labels.len() - 1)];
        if cells.insert((j, d)) {
            annotations.push(GroundTruthAction::new(
                label.as_str(),
                (j as f64 + shift) * step,
                ((j + d) as f64 + shift) * step,
            ));
        }
    }

    let mut snippets = Vec::new();
    for index in 0..t {
        let agent_boxes: Vec<AgentBox> = (0..pick(&mut s, 0, sy.max_agents)).map(|_| random_box(&mut s)).collect();
        let feature_file = sy.feature_maps.then(|| format!("{id}/{index:04}.aent"));
        if !agent_boxes.is_empty() || feature_file.is_some() {
            snippets.push(SnippetEntry {
                index,
                feature_file,
                agent_boxes,
            });
        }
    }
    let m = Manifest {
        video,
        annotations,
        snippets,
    };
    m.validate()?;
    Ok(m)
}

/// Writes one synthetic video and returns label warnings.
pub fn write_video(cfg: &RunConfig, i: usize) -> Result<Vec<String>> {
    let m = synth_manifest(cfg, i)?;
    let id = &m.video.video_id;
    let out = &cfg.out_dir;
    let mut warnings = Vec::new();
    if cfg.synth.oracle_grids {
        let grid = m.grid()?;
        let labels = gen_labels(&grid, &m.annotations, cfg.duration_policy.max_duration(grid.len()))?;
        warnings.extend(labels.warnings.iter().map(|w| format!("{id}: {w}")));
        write_grids(&ScoreGrids::from_labels(&labels), &out.join("grids").join(id))?;
    }
    if cfg.synth.feature_maps {
        let dir = out.join("feature_maps");
        for e in &m.snippets {
            let map = stub_backbone(id, e.index, cfg.stub_dims(), cfg.seed)?;
            write_tensor(&map.to_tensor(), dir.join(e.feature_file.as_deref().unwrap_or_default()))?;
        }
    }
    write_manifest(&m, out.join("manifests").join(format!("{id}.json")))?;
    Ok(warnings)
}
