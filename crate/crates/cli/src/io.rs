use std::fs;
use std::path::{Path, PathBuf};

use aen_core::supervision::{DurationMap, ScoreGrids};
use aen_core::tensor_io::{read_manifest, read_tensor, write_tensor, Manifest, Tensor};
use aen_core::{Error, Result};

pub const GRID_FILES: [&str; 4] = ["start.aent", "end.aent", "conf_cls.aent", "conf_reg.aent"];

fn tensor(dims: Vec<usize>, values: Vec<f64>) -> Result<Tensor> {
    Ok(Tensor::from_f64(dims, values)?)
}

pub fn write_grids(g: &ScoreGrids, dir: &Path) -> Result<()> {
    let (d, t) = (g.max_duration(), g.num_snippets());
    write_tensor(&tensor(vec![t], g.start_probs.clone())?, dir.join(GRID_FILES[0]))?;
    write_tensor(&tensor(vec![t], g.end_probs.clone())?, dir.join(GRID_FILES[1]))?;
    write_tensor(&tensor(vec![d, t], g.conf_cls.values().to_vec())?, dir.join(GRID_FILES[2]))?;
    write_tensor(&tensor(vec![d, t], g.conf_reg.values().to_vec())?, dir.join(GRID_FILES[3]))
}

pub fn read_grids(dir: &Path) -> Result<ScoreGrids> {
    let [s, e, cc, cr] = GRID_FILES.map(|f| read_tensor(dir.join(f)));
    let (s, e, cc, cr) = (s?, e?, cc?, cr?);
    let matrix = |name: &str, m: Tensor| -> Result<DurationMap> {
        match *m.dims() {
            [d, t] => DurationMap::from_values(d, t, m.into_f64()),
            ref dims => Err(Error::Data(format!("{name} has dims {dims:?}, expected [D, T]"))),
        }
    };
    for (name, v) in [("start", &s), ("end", &e)] {
        if v.dims().len() != 1 {
            return Err(Error::Data(format!("{name} has dims {:?}, expected [T]", v.dims())));
        }
    }
    ScoreGrids::new(s.into_f64(), e.into_f64(), matrix("conf_cls", cc)?, matrix("conf_reg", cr)?)
}

/// Rejects ids that would escape or collide inside output directories.
pub fn check_id(id: &str) -> Result<()> {
    let ok = !id.starts_with('.') && id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c));
    if ok {
        Ok(())
    } else {
        Err(Error::Validation {
            path: "video.video_id".into(),
            message: format!("{id:?} is not usable as a file name"),
        })
    }
}

pub struct ManifestEntry {
    /// File stem, used to report videos whose manifest failed to load.
    pub name: String,
    pub manifest: Result<Manifest>,
}

impl ManifestEntry {
    pub fn id(&self) -> &str {
        match &self.manifest {
            Ok(m) => &m.video.video_id,
            Err(_) => &self.name,
        }
    }
}

pub fn require_dir(dir: &Path, what: &str) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} directory {} does not exist", dir.display())))
    }
}

/// Loads every `*.json` manifest in `dir`, sorted by file name. Invalid or
/// duplicate-id manifests are kept as per-video errors.
pub fn load_manifests(dir: &Path) -> Result<Vec<ManifestEntry>> {
    require_dir(dir, "manifest")?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for p in paths {
        let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let manifest = read_manifest(&p)
            .and_then(|m| check_id(&m.video.video_id).map(|_| m))
            .and_then(|m| {
                if seen.insert(m.video.video_id.clone()) {
                    Ok(m)
                } else {
                    Err(Error::Data(format!("duplicate video id {} in {}", m.video.video_id, p.display())))
                }
            });
        out.push(ManifestEntry { name, manifest });
    }
    Ok(out)
}
