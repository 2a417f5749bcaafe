//! Position-free pre-norm Transformer encoder.
//!
//! Per layer: `x += MHA(LN(x))`, then `x += FFN(LN(x))` with a ReLU inside the
//! feed-forward block. A final layer norm closes the stack. Tokens carry no
//! positional encoding, so the map is equivariant under token permutations.

use crate::error::{Error, Result};

use super::weights::{EncoderLayer, EncoderWeights, Norm};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-stochastic attention matrices, indexed `[layer][head][query][key]`.
pub type AttentionMaps = Vec<Vec<Vec<Vec<f64>>>>;

pub fn layer_norm(x: &[f64], norm: &Norm) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    x.iter()
        .zip(norm.scale.iter().zip(&norm.shift))
        .map(|(v, (g, b))| (v - mean) * inv * g + b)
        .collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn self_attention(tokens: &[Vec<f64>], layer: &EncoderLayer, num_heads: usize, maps: Option<&mut Vec<Vec<Vec<f64>>>>) -> Vec<Vec<f64>> {
    let d = layer.query.out_dim;
    let head_dim = d / num_heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let q: Vec<Vec<f64>> = tokens.iter().map(|t| layer.query.apply(t)).collect();
    let k: Vec<Vec<f64>> = tokens.iter().map(|t| layer.key.apply(t)).collect();
    let v: Vec<Vec<f64>> = tokens.iter().map(|t| layer.value.apply(t)).collect();

    let n = tokens.len();
    let mut concat = vec![vec![0.0; d]; n];
    let mut head_maps = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let cols = h * head_dim..(h + 1) * head_dim;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| {
                    q[i][cols.clone()]
                        .iter()
                        .zip(&k[j][cols.clone()])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        * scale
                })
                .collect();
            let weights = softmax(&scores);
            for c in cols.clone() {
                concat[i][c] = weights.iter().zip(&v).map(|(w, vj)| w * vj[c]).sum();
            }
            rows.push(weights);
        }
        head_maps.push(rows);
    }
    if let Some(out) = maps {
        *out = head_maps;
    }
    concat.iter().map(|c| layer.output.apply(c)).collect()
}

fn feed_forward(x: &[f64], layer: &EncoderLayer) -> Vec<f64> {
    let hidden: Vec<f64> = layer.ff_in.apply(x).into_iter().map(|v| v.max(0.0)).collect();
    layer.ff_out.apply(&hidden)
}

fn forward(tokens: &[Vec<f64>], w: &EncoderWeights, mut trace: Option<&mut AttentionMaps>) -> Result<Vec<Vec<f64>>> {
    if tokens.is_empty() {
        return Err(Error::invalid("encoder needs at least one token"));
    }
    w.validate()?;
    if let Some(t) = tokens.iter().find(|t| t.len() != w.d_model) {
        return Err(Error::invalid(format!(
            "token of width {} given to encoder of width {}",
            t.len(),
            w.d_model
        )));
    }
    let mut x = tokens.to_vec();
    for layer in &w.layers {
        let normed: Vec<Vec<f64>> = x.iter().map(|t| layer_norm(t, &layer.norm_attn)).collect();
        let mut maps = Vec::new();
        let attn = self_attention(&normed, layer, w.num_heads, Some(&mut maps));
        if let Some(t) = trace.as_deref_mut() {
            t.push(maps);
        }
        for (xi, ai) in x.iter_mut().zip(attn) {
            xi.iter_mut().zip(ai).for_each(|(a, b)| *a += b);
        }
        for xi in x.iter_mut() {
            let ff = feed_forward(&layer_norm(xi, &layer.norm_ff), layer);
            xi.iter_mut().zip(ff).for_each(|(a, b)| *a += b);
        }
    }
    Ok(x.iter().map(|t| layer_norm(t, &w.final_norm)).collect())
}

/// Encodes a set of tokens.
pub fn attention_encoder(tokens: &[Vec<f64>], w: &EncoderWeights) -> Result<Vec<Vec<f64>>> {
    forward(tokens, w, None)
}

/// Like [`attention_encoder`], also returning every attention matrix.
pub fn attention_encoder_traced(tokens: &[Vec<f64>], w: &EncoderWeights) -> Result<(Vec<Vec<f64>>, AttentionMaps)> {
    let mut maps = Vec::new();
    let out = forward(tokens, w, Some(&mut maps))?;
    Ok((out, maps))
}
