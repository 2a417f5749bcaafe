//! Agent-environment representation of video snippets.
//!
//! Each snippet's backbone feature map feeds two pathways. The environment
//! pathway pools the whole map and runs it through fully connected layers
//! into a softmax. The agent pathway crops every detected agent with
//! RoIAlign, projects each crop to a token and fuses the token set with a
//! Transformer encoder. A second encoder weighs the environment feature
//! against the agent feature and produces the snippet's representation.

mod encoder;
mod roi;
mod weights;

use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::KeyedStream;
use crate::tensor_io::{read_tensor, AgentBox, Manifest, Tensor};

pub use encoder::{attention_encoder, attention_encoder_traced, layer_norm, softmax, AttentionMaps, LAYER_NORM_EPS};
pub use roi::{bilinear, roi_align};
pub use weights::{Affine, EncoderLayer, EncoderWeights, EnvOutput, FusionConfig, FusionWeights, Norm, BUNDLE_INDEX};

/// A backbone feature map `[C, H, W]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "feature map dims [{channels}, {height}, {width}] must be positive"
            )));
        }
        if values.len() != channels * height * width {
            return Err(Error::invalid(format!(
                "feature map of dims [{channels}, {height}, {width}] given {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature map contains non-finite values"));
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.dims() {
            [c, h, w] => FeatureMap::new(c, h, w, t.to_f64()),
            _ => Err(Error::invalid(format!("feature map tensor must be 3-d, got {:?}", t.dims()))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f64(vec![self.channels, self.height, self.width], self.values.clone())
            .expect("feature map is valid")
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.values[(c * self.height + y) * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Deterministic stand-in for the video backbone: values uniform in `[0, 1)`
/// from a stream keyed on `(seed, video_id, snippet_index)`.
pub fn stub_backbone(video_id: &str, snippet_index: usize, dims: [usize; 3], seed: u64) -> Result<FeatureMap> {
    let [c, h, w] = dims;
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::invalid(format!("stub backbone dims {dims:?} must be positive")));
    }
    let mut s = KeyedStream::new(
        "aen.backbone",
        seed,
        &[video_id.as_bytes(), &(snippet_index as u64).to_le_bytes()],
    );
    let values = (0..c * h * w).map(|_| s.unit()).collect();
    FeatureMap::new(c, h, w, values)
}

/// Environment feature: global average pool, fully connected layers with
/// ReLU between them, then softmax (or the raw logits, per config).
pub fn environment_pathway(map: &FeatureMap, w: &FusionWeights) -> Result<Vec<f64>> {
    let first = w
        .env_affine
        .first()
        .ok_or_else(|| Error::config("environment pathway has no layers"))?;
    if first.in_dim != map.channels {
        return Err(Error::config(format!(
            "feature map has {} channels, environment pathway expects {}",
            map.channels, first.in_dim
        )));
    }
    let area = (map.height * map.width) as f64;
    let mut x: Vec<f64> = map
        .values
        .chunks_exact(map.height * map.width)
        .map(|plane| plane.iter().sum::<f64>() / area)
        .collect();
    let last = w.env_affine.len() - 1;
    for (i, layer) in w.env_affine.iter().enumerate() {
        if layer.in_dim != x.len() {
            return Err(Error::config(format!("environment layer {i} expects width {}", layer.in_dim)));
        }
        x = layer.apply(&x);
        if i < last {
            x.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    Ok(match w.config.env_output {
        EnvOutput::Softmax => softmax(&x),
        EnvOutput::Logits => x,
    })
}

fn mean_pool(tokens: &[Vec<f64>]) -> Vec<f64> {
    let n = tokens.len() as f64;
    let mut out = vec![0.0; tokens[0].len()];
    for t in tokens {
        out.iter_mut().zip(t).for_each(|(a, b)| *a += b);
    }
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Multi-agent feature: RoI patches projected to tokens, encoded as an
/// unordered set and mean-pooled. `None` when the snippet has no agents.
pub fn agent_fusion(patches: &[Tensor], w: &FusionWeights) -> Result<Option<Vec<f64>>> {
    let Some(first) = patches.first() else {
        return Ok(None);
    };
    if let Some(bad) = patches.iter().position(|p| p.dims() != first.dims()) {
        return Err(Error::invalid(format!(
            "patch {bad} has dims {:?}, patch 0 has {:?}",
            patches[bad].dims(),
            first.dims()
        )));
    }
    if first.numel() != w.patch_proj.in_dim {
        return Err(Error::config(format!(
            "patch of {} values does not match projection input {}",
            first.numel(),
            w.patch_proj.in_dim
        )));
    }
    let tokens: Vec<Vec<f64>> = patches.iter().map(|p| w.patch_proj.apply(&p.to_f64())).collect();
    let encoded = attention_encoder(&tokens, &w.agent_encoder)?;
    Ok(Some(mean_pool(&encoded)))
}

/// Fused snippet feature from the sequence `[env, agents]` (or `[env]`).
pub fn ae_fuse(env: &[f64], agents: Option<&[f64]>, w: &FusionWeights) -> Result<Vec<f64>> {
    let d = w.d_model();
    if env.len() != d || agents.is_some_and(|a| a.len() != d) {
        return Err(Error::config(format!("fusion inputs must have width d_model = {d}")));
    }
    let mut tokens = vec![env.to_vec()];
    if let Some(a) = agents {
        tokens.push(a.to_vec());
    }
    let encoded = attention_encoder(&tokens, &w.fuse_encoder)?;
    Ok(mean_pool(&encoded))
}

/// Environment, agent and fused features of one snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct SnippetFeature {
    pub env: Vec<f64>,
    pub agents: Option<Vec<f64>>,
    pub fused: Vec<f64>,
}

pub fn featurize_snippet(map: &FeatureMap, boxes: &[AgentBox], w: &FusionWeights) -> Result<SnippetFeature> {
    let env = environment_pathway(map, w)?;
    let patches: Vec<Tensor> = boxes
        .iter()
        .map(|b| roi_align(map, b, w.config.roi_grid, w.config.roi_samples))
        .collect();
    let agents = agent_fusion(&patches, w)?;
    let fused = ae_fuse(&env, agents.as_deref(), w)?;
    Ok(SnippetFeature { env, agents, fused })
}

/// Where snippet feature maps come from.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSource {
    /// [`stub_backbone`] maps of the given dims.
    Stub { seed: u64, dims: [usize; 3] },
    /// Tensor files named by each snippet's `feature_file`, relative to `dir`.
    Files { dir: PathBuf },
}

fn load_map(manifest: &Manifest, index: usize, source: &FeatureSource) -> Result<FeatureMap> {
    let id = &manifest.video.video_id;
    match source {
        FeatureSource::Stub { seed, dims } => stub_backbone(id, index, *dims, *seed),
        FeatureSource::Files { dir } => {
            let file = manifest
                .snippet(index)
                .and_then(|s| s.feature_file.as_deref())
                .ok_or_else(|| Error::Data(format!("video {id} snippet {index}: no feature_file in manifest")))?;
            let path = dir.join(file);
            let t = read_tensor(&path)
                .map_err(|e| Error::Data(format!("video {id} snippet {index}: {e}")))?;
            FeatureMap::from_tensor(&t).map_err(|e| Error::Data(format!("video {id} snippet {index}: {e}")))
        }
    }
}

/// Runs every snippet of a video through the network and stacks the fused
/// features into a `[T, d_model]` tensor in snippet order.
pub fn featurize_video(manifest: &Manifest, w: &FusionWeights, source: &FeatureSource) -> Result<Tensor> {
    let t = manifest.grid()?.len();
    let rows = (0..t)
        .into_par_iter()
        .map(|i| {
            let map = load_map(manifest, i, source)?;
            let boxes = manifest.snippet(i).map(|s| s.agent_boxes.as_slice()).unwrap_or(&[]);
            featurize_snippet(&map, boxes, w).map(|f| f.fused)
        })
        .collect::<Result<Vec<_>>>()?;
    let d = w.d_model();
    Tensor::from_f64(vec![t, d], rows.concat())
        .map_err(|e| Error::Data(format!("video {}: {e}", manifest.video.video_id)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> FusionConfig {
        FusionConfig {
            channels: 2,
            d_model: 4,
            num_heads: 2,
            num_layers: 1,
            ffn_dim: 8,
            env_hidden: vec![],
            roi_grid: (2, 2),
            roi_samples: (2, 2),
            env_output: EnvOutput::Softmax,
        }
    }

    #[test]
    fn stub_is_deterministic() {
        let a = stub_backbone("vid", 3, [4, 5, 6], 1).unwrap();
        assert_eq!(a, stub_backbone("vid", 3, [4, 5, 6], 1).unwrap());
        let b = stub_backbone("vid", 3, [4, 5, 6], 2).unwrap();
        let differ = a.values().iter().zip(b.values()).filter(|(x, y)| x != y).count();
        assert!(differ as f64 >= 0.99 * a.values().len() as f64);
        assert_ne!(a, stub_backbone("vid", 4, [4, 5, 6], 1).unwrap());
        assert_ne!(a, stub_backbone("vie", 3, [4, 5, 6], 1).unwrap());
        assert!(matches!(stub_backbone("vid", 0, [0, 4, 4], 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn env_constant_map_identity_affine_is_uniform() {
        let cfg = FusionConfig {
            channels: 4,
            ..small_cfg()
        };
        let mut w = FusionWeights::seeded(cfg, 0).unwrap();
        w.env_affine = vec![Affine::identity(4)];
        let map = FeatureMap::new(4, 3, 3, vec![0.7; 36]).unwrap();
        let env = environment_pathway(&map, &w).unwrap();
        assert!(env.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn env_hand_chain() {
        // 2 channels, 2x2 map, hidden layer of width 2, output width 4.
        let mut cfg = small_cfg();
        cfg.env_hidden = vec![2];
        let mut w = FusionWeights::seeded(cfg, 0).unwrap();
        w.env_affine = vec![
            Affine::new(2, 2, vec![1.0, -1.0, 0.5, 2.0], vec![0.0, -3.0]).unwrap(),
            Affine::new(2, 4, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 0.0], vec![0.0, 0.1, 0.2, 0.3]).unwrap(),
        ];
        let map = FeatureMap::new(2, 2, 2, vec![1.0, 2.0, 3.0, 6.0, 0.0, 1.0, 1.0, 2.0]).unwrap();
        let env = environment_pathway(&map, &w).unwrap();

        // pool: [3, 1]; hidden: relu([3 - 1, 1.5 + 2 - 3]) = [2, 0.5]
        // logits: [2, 0.5 + 0.1, 2.5 + 0.2, -2 + 0.3]
        let logits = [2.0f64, 0.6, 2.7, -1.7];
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        for (p, l) in env.iter().zip(logits) {
            assert!((p - l.exp() / z).abs() < 1e-15);
        }

        w.config.env_output = EnvOutput::Logits;
        let raw = environment_pathway(&map, &w).unwrap();
        for (p, l) in raw.iter().zip(logits) {
            assert!((p - l).abs() < 1e-15);
        }
    }

    #[test]
    fn env_channel_mismatch() {
        let w = FusionWeights::seeded(small_cfg(), 0).unwrap();
        let map = FeatureMap::new(3, 2, 2, vec![0.0; 12]).unwrap();
        assert!(matches!(environment_pathway(&map, &w), Err(Error::Config(_))));
    }

    #[test]
    fn env_is_a_distribution() {
        let w = FusionWeights::seeded(small_cfg(), 9).unwrap();
        for idx in 0..20 {
            let map = stub_backbone("p", idx, [2, 3, 3], 4).unwrap();
            let env = environment_pathway(&map, &w).unwrap();
            assert!((env.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(env.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn agent_fusion_cases() {
        let w = FusionWeights::seeded(small_cfg(), 2).unwrap();
        assert_eq!(agent_fusion(&[], &w).unwrap(), None);

        let map = stub_backbone("a", 0, [2, 6, 6], 1).unwrap();
        let p = roi_align(&map, &AgentBox([0.1, 0.1, 0.6, 0.9]), (2, 2), (2, 2));
        let single = agent_fusion(std::slice::from_ref(&p), &w).unwrap().unwrap();
        let token = w.patch_proj.apply(&p.to_f64());
        let encoded = attention_encoder(&[token], &w.agent_encoder).unwrap();
        assert_eq!(single, encoded[0]);

        let other = roi_align(&map, &AgentBox([0.1, 0.1, 0.6, 0.9]), (3, 2), (2, 2));
        assert!(matches!(agent_fusion(&[p, other], &w), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn ae_fuse_cases() {
        let w = FusionWeights::seeded(small_cfg(), 3).unwrap();
        let env = vec![0.1, 0.2, 0.3, 0.4];
        let alone = ae_fuse(&env, None, &w).unwrap();
        assert_eq!(alone, attention_encoder(std::slice::from_ref(&env), &w.fuse_encoder).unwrap()[0]);

        let pair = ae_fuse(&env, Some(&env), &w).unwrap();
        let both = attention_encoder(&[env.clone(), env.clone()], &w.fuse_encoder).unwrap();
        assert_eq!(both[0], both[1]);
        for (a, b) in pair.iter().zip(&both[0]) {
            assert!((a - b).abs() < 1e-15);
        }

        assert!(matches!(ae_fuse(&env[..3], None, &w), Err(Error::Config(_))));
        assert!(matches!(ae_fuse(&env, Some(&env[..2]), &w), Err(Error::Config(_))));
    }

    #[test]
    fn ae_fuse_hand_d2() {
        // d_model 2, one head, one layer. Value and output projections are the
        // identity, everything else zero, so attention is uniform over tokens.
        let cfg = FusionConfig {
            channels: 1,
            d_model: 2,
            num_heads: 1,
            num_layers: 1,
            ffn_dim: 1,
            env_hidden: vec![],
            roi_grid: (1, 1),
            roi_samples: (1, 1),
            env_output: EnvOutput::Softmax,
        };
        let mut w = FusionWeights::seeded(cfg, 0).unwrap();
        w.fuse_encoder = EncoderWeights::zeros(2, 1, 1, 1);
        w.fuse_encoder.layers[0].value = Affine::identity(2);
        w.fuse_encoder.layers[0].output = Affine::identity(2);

        let env = [0.2, 0.8];
        let agents = [1.0, -1.0];
        let f = ae_fuse(&env, Some(&agents), &w).unwrap();

        let eps = LAYER_NORM_EPS;
        // LN of a 2-vector [a, b] is [-s, s] * sign(b - a) with s = |b - a| / 2 / sqrt(((b - a)/2)^2 + eps)
        let ln2 = |a: f64, b: f64| {
            let h = (b - a) / 2.0;
            let s = h / (h * h + eps).sqrt();
            [-s, s]
        };
        let ne = ln2(env[0], env[1]);
        let na = ln2(agents[0], agents[1]);
        let attn = [(ne[0] + na[0]) / 2.0, (ne[1] + na[1]) / 2.0];
        let xe = ln2(env[0] + attn[0], env[1] + attn[1]);
        let xa = ln2(agents[0] + attn[0], agents[1] + attn[1]);
        let expect = [(xe[0] + xa[0]) / 2.0, (xe[1] + xa[1]) / 2.0];
        assert!((f[0] - expect[0]).abs() < 1e-14, "{f:?} vs {expect:?}");
        assert!((f[1] - expect[1]).abs() < 1e-14);
    }
}
