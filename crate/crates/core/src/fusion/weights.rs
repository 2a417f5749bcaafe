//! Parameters of the representation network and their on-disk bundle.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::KeyedStream;
use crate::tensor_io::{read_tensor, write_atomic, write_tensor, Tensor};

/// `y = W x + b` with `W` stored row-major as `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn new(in_dim: usize, out_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 || weight.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::config(format!(
                "affine {in_dim}->{out_dim} needs {} weights and {out_dim} biases, got {} and {}",
                in_dim * out_dim,
                weight.len(),
                bias.len()
            )));
        }
        Ok(Affine {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Affine {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut a = Affine::zeros(dim, dim);
        for i in 0..dim {
            a.weight[i * dim + i] = 1.0;
        }
        a
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn seeded(seed: u64, name: &str, in_dim: usize, out_dim: usize, bound: f64) -> Self {
        let mut s = KeyedStream::new("aen.weights", seed, &[name.as_bytes()]);
        let weight = (0..in_dim * out_dim).map(|_| s.symmetric(bound)).collect();
        let bias = (0..out_dim).map(|_| s.symmetric(bound)).collect();
        Affine {
            in_dim,
            out_dim,
            weight,
            bias,
        }
    }
}

/// Layer-normalization gain and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl Norm {
    pub fn unit(dim: usize) -> Self {
        Norm {
            scale: vec![1.0; dim],
            shift: vec![0.0; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub norm_attn: Norm,
    pub query: Affine,
    pub key: Affine,
    pub value: Affine,
    pub output: Affine,
    pub norm_ff: Norm,
    pub ff_in: Affine,
    pub ff_out: Affine,
}

/// Weights of a pre-norm Transformer encoder stack plus its final norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub d_model: usize,
    pub num_heads: usize,
    pub layers: Vec<EncoderLayer>,
    pub final_norm: Norm,
}

impl EncoderWeights {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d_model;
        if d == 0 || self.num_heads == 0 || !d.is_multiple_of(self.num_heads) {
            return Err(Error::config(format!(
                "d_model {d} must be a positive multiple of num_heads {}",
                self.num_heads
            )));
        }
        let norm_ok = |n: &Norm| n.scale.len() == d && n.shift.len() == d;
        if !norm_ok(&self.final_norm) {
            return Err(Error::config("final norm width differs from d_model"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let square = [&l.query, &l.key, &l.value, &l.output]
                .iter()
                .all(|a| a.in_dim == d && a.out_dim == d);
            let ff = l.ff_in.in_dim == d && l.ff_out.out_dim == d && l.ff_in.out_dim == l.ff_out.in_dim;
            if !(square && ff && norm_ok(&l.norm_attn) && norm_ok(&l.norm_ff)) {
                return Err(Error::config(format!("encoder layer {i} has incompatible shapes")));
            }
        }
        Ok(())
    }

    /// All projections zero, unit norms.
    pub fn zeros(d_model: usize, num_heads: usize, num_layers: usize, ffn_dim: usize) -> Self {
        let layers = (0..num_layers)
            .map(|_| EncoderLayer {
                norm_attn: Norm::unit(d_model),
                query: Affine::zeros(d_model, d_model),
                key: Affine::zeros(d_model, d_model),
                value: Affine::zeros(d_model, d_model),
                output: Affine::zeros(d_model, d_model),
                norm_ff: Norm::unit(d_model),
                ff_in: Affine::zeros(d_model, ffn_dim),
                ff_out: Affine::zeros(ffn_dim, d_model),
            })
            .collect();
        EncoderWeights {
            d_model,
            num_heads,
            layers,
            final_norm: Norm::unit(d_model),
        }
    }

    pub fn seeded(seed: u64, prefix: &str, cfg: &FusionConfig) -> Self {
        let d = cfg.d_model;
        let bound = 1.0 / (d as f64).sqrt();
        let a = |name: &str, i: usize, o: usize| Affine::seeded(seed, name, i, o, bound);
        let layers = (0..cfg.num_layers)
            .map(|li| {
                let p = format!("{prefix}.layer{li}");
                EncoderLayer {
                    norm_attn: Norm::unit(d),
                    query: a(&format!("{p}.query"), d, d),
                    key: a(&format!("{p}.key"), d, d),
                    value: a(&format!("{p}.value"), d, d),
                    output: a(&format!("{p}.output"), d, d),
                    norm_ff: Norm::unit(d),
                    ff_in: a(&format!("{p}.ff_in"), d, cfg.ffn_dim),
                    ff_out: a(&format!("{p}.ff_out"), cfg.ffn_dim, d),
                }
            })
            .collect();
        EncoderWeights {
            d_model: d,
            num_heads: cfg.num_heads,
            layers,
            final_norm: Norm::unit(d),
        }
    }
}

/// Whether the environment pathway returns the softmax output or the logits
/// feeding it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvOutput {
    #[default]
    Softmax,
    Logits,
}

/// Shape hyper-parameters of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Channels of the backbone feature map.
    pub channels: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub ffn_dim: usize,
    /// Widths of the hidden fully connected layers of the environment pathway.
    pub env_hidden: Vec<usize>,
    pub env_output: EnvOutput,
    pub roi_grid: (usize, usize),
    pub roi_samples: (usize, usize),
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            channels: 32,
            d_model: 64,
            num_heads: 4,
            num_layers: 1,
            ffn_dim: 128,
            env_hidden: vec![64],
            env_output: EnvOutput::Softmax,
            roi_grid: (4, 4),
            roi_samples: (2, 2),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("channels", self.channels),
            ("d_model", self.d_model),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
            ("roi_grid.0", self.roi_grid.0),
            ("roi_grid.1", self.roi_grid.1),
            ("roi_samples.0", self.roi_samples.0),
            ("roi_samples.1", self.roi_samples.1),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if self.env_hidden.contains(&0) {
            return Err(Error::config("env_hidden widths must be positive"));
        }
        if !self.d_model.is_multiple_of(self.num_heads) {
            return Err(Error::config(format!(
                "d_model {} is not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        Ok(())
    }

    pub fn patch_dim(&self) -> usize {
        self.channels * self.roi_grid.0 * self.roi_grid.1
    }
}

/// Every learnable parameter of the representation network.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub config: FusionConfig,
    /// Environment pathway, applied after global average pooling. ReLU sits
    /// between consecutive layers; the last one feeds the softmax.
    pub env_affine: Vec<Affine>,
    /// Flattened RoI patch to agent token.
    pub patch_proj: Affine,
    pub agent_encoder: EncoderWeights,
    pub fuse_encoder: EncoderWeights,
}

impl FusionWeights {
    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    /// Deterministic initialization, uniform in `[-1/sqrt(d_model), 1/sqrt(d_model)]`.
    pub fn seeded(config: FusionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let bound = 1.0 / (config.d_model as f64).sqrt();
        let mut widths = vec![config.channels];
        widths.extend(&config.env_hidden);
        widths.push(config.d_model);
        let env_affine = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Affine::seeded(seed, &format!("env.{i}"), w[0], w[1], bound))
            .collect();
        let patch_proj = Affine::seeded(seed, "patch_proj", config.patch_dim(), config.d_model, bound);
        let w = FusionWeights {
            agent_encoder: EncoderWeights::seeded(seed, "agent", &config),
            fuse_encoder: EncoderWeights::seeded(seed, "fuse", &config),
            env_affine,
            patch_proj,
            config,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = &self.config;
        cfg.validate()?;
        let first = self
            .env_affine
            .first()
            .ok_or_else(|| Error::config("environment pathway has no layers"))?;
        if first.in_dim != cfg.channels {
            return Err(Error::config(format!(
                "environment input width {} differs from channels {}",
                first.in_dim, cfg.channels
            )));
        }
        for (i, pair) in self.env_affine.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::config(format!("environment layers {i} and {} do not chain", i + 1)));
            }
        }
        if self.env_affine.last().unwrap().out_dim != cfg.d_model {
            return Err(Error::config("environment output width differs from d_model"));
        }
        if self.patch_proj.in_dim != cfg.patch_dim() || self.patch_proj.out_dim != cfg.d_model {
            return Err(Error::config("patch projection shape differs from roi grid and d_model"));
        }
        for enc in [&self.agent_encoder, &self.fuse_encoder] {
            enc.validate()?;
            if enc.d_model != cfg.d_model || enc.num_heads != cfg.num_heads {
                return Err(Error::config("encoder width or heads differ from config"));
            }
        }
        Ok(())
    }

    fn named_affines(&self) -> Vec<(String, &Affine)> {
        let mut out = Vec::new();
        for (i, a) in self.env_affine.iter().enumerate() {
            out.push((format!("env.{i}"), a));
        }
        out.push(("patch_proj".to_string(), &self.patch_proj));
        for (prefix, enc) in [("agent", &self.agent_encoder), ("fuse", &self.fuse_encoder)] {
            for (li, l) in enc.layers.iter().enumerate() {
                let p = format!("{prefix}.layer{li}");
                for (n, a) in [
                    ("query", &l.query),
                    ("key", &l.key),
                    ("value", &l.value),
                    ("output", &l.output),
                    ("ff_in", &l.ff_in),
                    ("ff_out", &l.ff_out),
                ] {
                    out.push((format!("{p}.{n}"), a));
                }
            }
        }
        out
    }

    fn named_norms(&self) -> Vec<(String, &Norm)> {
        let mut out = Vec::new();
        for (prefix, enc) in [("agent", &self.agent_encoder), ("fuse", &self.fuse_encoder)] {
            for (li, l) in enc.layers.iter().enumerate() {
                out.push((format!("{prefix}.layer{li}.norm_attn"), &l.norm_attn));
                out.push((format!("{prefix}.layer{li}.norm_ff"), &l.norm_ff));
            }
            out.push((format!("{prefix}.final_norm"), &enc.final_norm));
        }
        out
    }

    /// Writes one tensor file per parameter plus `index.json`.
    pub fn save_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let mut params = BTreeMap::new();
        let mut put = |name: String, dims: Vec<usize>, data: Vec<f64>| -> Result<()> {
            let file = format!("{name}.aent");
            write_tensor(&Tensor::from_f64(dims, data)?, dir.join(&file))?;
            params.insert(name, file);
            Ok(())
        };
        for (name, a) in self.named_affines() {
            put(format!("{name}.weight"), vec![a.out_dim, a.in_dim], a.weight.clone())?;
            put(format!("{name}.bias"), vec![a.out_dim], a.bias.clone())?;
        }
        for (name, n) in self.named_norms() {
            put(format!("{name}.scale"), vec![n.scale.len()], n.scale.clone())?;
            put(format!("{name}.shift"), vec![n.shift.len()], n.shift.clone())?;
        }
        let index = BundleIndex {
            config: self.config.clone(),
            params,
        };
        let mut json = serde_json::to_string_pretty(&index).expect("index serializes");
        json.push('\n');
        write_atomic(&dir.join(BUNDLE_INDEX), json.as_bytes())
    }

    /// Loads a bundle written by [`FusionWeights::save_bundle`]. Missing
    /// parameters and shape mismatches are configuration errors.
    pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index_path = dir.join(BUNDLE_INDEX);
        let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let index: BundleIndex = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", index_path.display())))?;
        let cfg = index.config.clone();
        cfg.validate()?;
        let load = |name: &str, dims: &[usize]| -> Result<Vec<f64>> {
            let file = index
                .params
                .get(name)
                .ok_or_else(|| Error::config(format!("bundle is missing parameter {name}")))?;
            let t = read_tensor(dir.join(file))?;
            if t.dims() != dims {
                return Err(Error::config(format!(
                    "parameter {name} has dims {:?}, expected {dims:?}",
                    t.dims()
                )));
            }
            Ok(t.into_f64())
        };
        let affine = |name: &str, i: usize, o: usize| -> Result<Affine> {
            Affine::new(i, o, load(&format!("{name}.weight"), &[o, i])?, load(&format!("{name}.bias"), &[o])?)
        };
        let norm = |name: &str, d: usize| -> Result<Norm> {
            Ok(Norm {
                scale: load(&format!("{name}.scale"), &[d])?,
                shift: load(&format!("{name}.shift"), &[d])?,
            })
        };
        let d = cfg.d_model;
        let encoder = |prefix: &str| -> Result<EncoderWeights> {
            let layers = (0..cfg.num_layers)
                .map(|li| {
                    let p = format!("{prefix}.layer{li}");
                    Ok(EncoderLayer {
                        norm_attn: norm(&format!("{p}.norm_attn"), d)?,
                        query: affine(&format!("{p}.query"), d, d)?,
                        key: affine(&format!("{p}.key"), d, d)?,
                        value: affine(&format!("{p}.value"), d, d)?,
                        output: affine(&format!("{p}.output"), d, d)?,
                        norm_ff: norm(&format!("{p}.norm_ff"), d)?,
                        ff_in: affine(&format!("{p}.ff_in"), d, cfg.ffn_dim)?,
                        ff_out: affine(&format!("{p}.ff_out"), cfg.ffn_dim, d)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EncoderWeights {
                d_model: d,
                num_heads: cfg.num_heads,
                layers,
                final_norm: norm(&format!("{prefix}.final_norm"), d)?,
            })
        };
        let mut widths = vec![cfg.channels];
        widths.extend(&cfg.env_hidden);
        widths.push(d);
        let env_affine = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| affine(&format!("env.{i}"), w[0], w[1]))
            .collect::<Result<Vec<_>>>()?;
        let w = FusionWeights {
            env_affine,
            patch_proj: affine("patch_proj", cfg.patch_dim(), d)?,
            agent_encoder: encoder("agent")?,
            fuse_encoder: encoder("fuse")?,
            config: cfg,
        };
        w.validate()?;
        Ok(w)
    }
}

pub const BUNDLE_INDEX: &str = "index.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleIndex {
    config: FusionConfig,
    params: BTreeMap<String, String>,
}
