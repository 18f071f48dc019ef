//! Saliency training objective: L1 + negative CC + KL + BCE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BCE_LOG_FLOOR: f64 = -100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub cc: f64,
    pub kl: f64,
    pub bce: f64,
    pub total: f64,
    /// Set when either map is constant and the CC term was zeroed.
    pub cc_degenerate: bool,
}

/// Ground truth prepared once per sample: a max-1 copy for L1/CC/BCE and a
/// sum-1 copy for KL.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub max1: Vec<f64>,
    pub sum1: Vec<f64>,
}

impl Target {
    pub fn new(gt: &[f64]) -> Result<Self> {
        if gt.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("ground truth must be finite and non-negative"));
        }
        let max = gt.iter().copied().fold(0.0, f64::max);
        let sum: f64 = gt.iter().sum();
        if max <= 0.0 {
            return Err(Error::invalid("ground truth has no mass"));
        }
        Ok(Self { max1: gt.iter().map(|v| v / max).collect(), sum1: gt.iter().map(|v| v / sum).collect() })
    }
}

/// Loss terms for predictions `pd` in [0,1] and the gradient of the
/// weighted total with respect to `pd`.
pub fn saliency_loss(pd: &[f64], target: &Target, weights: [f64; 4], eps: f64) -> Result<(LossBreakdown, Vec<f64>)> {
    let n = pd.len();
    if n == 0 || target.max1.len() != n {
        return Err(Error::invalid(format!("prediction has {n} values, ground truth {}", target.max1.len())));
    }
    if pd.iter().any(|v| !(0.0..=1.0).contains(v)) || pd.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid("predictions must lie in [0, 1] with some mass"));
    }
    let gt = &target.max1;
    let [w1, w2, w3, w4] = weights;
    let mut grad = vec![0.0; n];

    let mut l1 = 0.0;
    for i in 0..n {
        let d = pd[i] - gt[i];
        l1 += d.abs();
        grad[i] += w1 * d.signum() * (d != 0.0) as u8 as f64;
    }

    let mp = pd.iter().sum::<f64>() / n as f64;
    let mg = gt.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, b) = (pd[i] - mp, gt[i] - mg);
        sab += a * b;
        saa += a * a;
        sbb += b * b;
    }
    let cc_degenerate = saa == 0.0 || sbb == 0.0;
    let cc = if cc_degenerate {
        0.0
    } else {
        let r = sab / (saa * sbb).sqrt();
        for i in 0..n {
            let (a, b) = (pd[i] - mp, gt[i] - mg);
            let dr = b / (saa * sbb).sqrt() - r * a / saa;
            grad[i] -= w2 * dr;
        }
        -r
    };

    let s: f64 = pd.iter().sum();
    let q: Vec<f64> = pd.iter().map(|v| v / s).collect();
    let g = &target.sum1;
    let mut kl = 0.0;
    let mut dq = vec![0.0; n];
    for i in 0..n {
        let ratio = g[i] / (eps + q[i]);
        kl += g[i] * (eps + ratio).ln();
        dq[i] = -g[i] * g[i] / ((eps + q[i]) * (eps * (eps + q[i]) + g[i]));
    }
    let dot: f64 = dq.iter().zip(&q).map(|(a, b)| a * b).sum();
    for i in 0..n {
        grad[i] += w3 * (dq[i] - dot) / s;
    }

    let mut bce = 0.0;
    for i in 0..n {
        let (p, y) = (pd[i], gt[i]);
        // 0·ln 0 = 0, so terms with a zero coefficient drop out
        // logs are floored at -100 so a saturated sigmoid stays finite
        if y > 0.0 {
            bce -= y * p.ln().max(BCE_LOG_FLOOR);
            if p.ln() > BCE_LOG_FLOOR {
                grad[i] -= w4 * y / p / n as f64;
            }
        }
        if y < 1.0 {
            bce -= (1.0 - y) * (1.0 - p).ln().max(BCE_LOG_FLOOR);
            if (1.0 - p).ln() > BCE_LOG_FLOOR {
                grad[i] += w4 * (1.0 - y) / (1.0 - p) / n as f64;
            }
        }
    }
    bce /= n as f64;

    let total = w1 * l1 + w2 * cc + w3 * kl + w4 * bce;
    if !total.is_finite() {
        return Err(Error::invalid("loss is not finite"));
    }
    Ok((LossBreakdown { l1, cc, kl, bce, total, cc_degenerate }, grad))
}
