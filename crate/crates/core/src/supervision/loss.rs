use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{LabelSet, ScoreGrids};

/// Loss weights. Defaults: `lambda_reg = 10`, `lambda_1 = lambda_2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda_reg: f64,
    pub lambda_1: f64,
    pub lambda_2: f64,
    pub clamp_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_reg: 10.0,
            lambda_1: 1.0,
            lambda_2: 1.0,
            clamp_eps: 1e-12,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("lambda_reg", self.lambda_reg),
            ("lambda_1", self.lambda_1),
            ("lambda_2", self.lambda_2),
            ("clamp_eps", self.clamp_eps),
        ];
        // lambda_1 / lambda_2 may be zero to switch a term off.
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::config("clamp_eps must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

struct Balance {
    n: f64,
    pos_weight: f64,
    neg_weight: f64,
}

fn balance(p: &[f64], l: &[f64], mask: &[bool]) -> Result<Balance> {
    if p.len() != l.len() || p.len() != mask.len() {
        return Err(Error::invalid(format!(
            "shape mismatch: {} predictions, {} labels, {} mask entries",
            p.len(),
            l.len(),
            mask.len()
        )));
    }
    let mut positives = 0;
    let mut negatives = 0;
    for (i, (&li, &m)) in l.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        if li == 1.0 {
            positives += 1;
        } else if li == 0.0 {
            negatives += 1;
        } else {
            return Err(Error::invalid(format!("label {i} = {li} is not binary")));
        }
    }
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels { positives, negatives });
    }
    let n = (positives + negatives) as f64;
    Ok(Balance {
        n,
        pos_weight: n / positives as f64,
        neg_weight: n / negatives as f64,
    })
}

/// Class-balanced binary negative log-likelihood over the masked entries:
///
/// `-(1/N) * sum(a+ * l * ln p + a- * (1 - l) * ln(1 - p))`
///
/// with `a+ = N / N+`, `a- = N / N-` and `p` clamped to `[eps, 1 - eps]`.
pub fn weighted_binary_loss(p: &[f64], l: &[f64], mask: &[bool], eps: f64) -> Result<f64> {
    let b = balance(p, l, mask)?;
    let mut acc = 0.0;
    for ((&pi, &li), _) in p.iter().zip(l).zip(mask).filter(|(_, &m)| m) {
        let pc = pi.clamp(eps, 1.0 - eps);
        acc += b.pos_weight * li * pc.ln() + b.neg_weight * (1.0 - li) * (1.0 - pc).ln();
    }
    Ok(-acc / b.n)
}

/// Gradient of [`weighted_binary_loss`] with respect to `p`; zero on masked-out
/// and clamped entries.
pub fn weighted_binary_loss_grad(p: &[f64], l: &[f64], mask: &[bool], eps: f64) -> Result<Vec<f64>> {
    let b = balance(p, l, mask)?;
    Ok(p.iter()
        .zip(l)
        .zip(mask)
        .map(|((&pi, &li), &m)| {
            if !m || pi < eps || pi > 1.0 - eps {
                0.0
            } else {
                -(b.pos_weight * li / pi - b.neg_weight * (1.0 - li) / (1.0 - pi)) / b.n
            }
        })
        .collect())
}

fn masked_count(p: &[f64], l: &[f64], mask: &[bool]) -> Result<f64> {
    if p.len() != l.len() || p.len() != mask.len() {
        return Err(Error::invalid("shape mismatch in l2 loss"));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::invalid("l2 loss over an empty mask"));
    }
    Ok(n as f64)
}

/// Mean squared error over the masked entries.
pub fn l2_loss(p: &[f64], l: &[f64], mask: &[bool]) -> Result<f64> {
    let n = masked_count(p, l, mask)?;
    let sum: f64 = p
        .iter()
        .zip(l)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((a, b), _)| (a - b) * (a - b))
        .sum();
    Ok(sum / n)
}

pub fn l2_loss_grad(p: &[f64], l: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    let n = masked_count(p, l, mask)?;
    Ok(p.iter()
        .zip(l)
        .zip(mask)
        .map(|((a, b), &m)| if m { 2.0 * (a - b) / n } else { 0.0 })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub start: f64,
    pub end: f64,
    pub conf_cls: f64,
    pub conf_reg: f64,
    pub tem: f64,
    pub pem: f64,
    pub total: f64,
}

/// `lambda_1 * L_TEM + lambda_2 * L_PEM` where
/// `L_TEM = wb(P_S, L_S) + wb(P_E, L_E)` and
/// `L_PEM = wb(P_cc, L_D) + lambda_reg * l2(P_cr, L_D)` on valid cells.
pub fn total_loss(grids: &ScoreGrids, labels: &LabelSet, cfg: &LossConfig) -> Result<LossBreakdown> {
    cfg.validate()?;
    let t = grids.num_snippets();
    if labels.starts.len() != t
        || labels.ends.len() != t
        || labels.durations.num_snippets() != t
        || labels.durations.max_duration() != grids.max_duration()
    {
        return Err(Error::invalid("score grids and labels disagree on T or D"));
    }
    let eps = cfg.clamp_eps;
    let full = vec![true; t];
    let cells = labels.durations.valid_mask();
    let start = weighted_binary_loss(&grids.start_probs, &labels.starts, &full, eps)?;
    let end = weighted_binary_loss(&grids.end_probs, &labels.ends, &full, eps)?;
    let conf_cls = weighted_binary_loss(grids.conf_cls.values(), labels.durations.values(), &cells, eps)?;
    let conf_reg = l2_loss(grids.conf_reg.values(), labels.durations.values(), &cells)?;
    let tem = start + end;
    let pem = conf_cls + cfg.lambda_reg * conf_reg;
    Ok(LossBreakdown {
        start,
        end,
        conf_cls,
        conf_reg,
        tem,
        pem,
        total: cfg.lambda_1 * tem + cfg.lambda_2 * pem,
    })
}
