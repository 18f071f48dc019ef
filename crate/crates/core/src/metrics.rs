//! Saliency evaluation metrics, optional sin-latitude weighting and the
//! split-half consistency baseline.
//!
//! Weighting multiplies density maps by `sin(90° − lat)` before a metric is
//! computed. The AUC variants rank pixels and are always evaluated
//! unweighted.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze;
use crate::maps::{FixationMap, SaliencyMap};
use crate::sphere::ErpGrid;

pub const DEFAULT_KLD_EPS: f64 = 1e-7;
pub const DEFAULT_S_AUC_SPLITS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Uniform,
    #[default]
    Sinusoidal,
}

impl std::str::FromStr for Weighting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "sinusoidal" | "sin" => Ok(Weighting::Sinusoidal),
            _ => Err(Error::invalid(format!("unknown weighting `{s}`"))),
        }
    }
}

impl std::fmt::Display for Weighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Weighting::Uniform => "uniform",
            Weighting::Sinusoidal => "sinusoidal",
        })
    }
}

/// Which map KLD treats as the ground-truth distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KldReference {
    #[default]
    Fixation,
    Saliency,
}

impl std::str::FromStr for KldReference {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixation" => Ok(KldReference::Fixation),
            "saliency" => Ok(KldReference::Saliency),
            _ => Err(Error::invalid(format!("unknown KLD reference `{s}`"))),
        }
    }
}

/// A metric value with a flag for zero-variance inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

fn weights(grid: ErpGrid, weighting: Weighting) -> Option<Vec<f64>> {
    match weighting {
        Weighting::Uniform => None,
        Weighting::Sinusoidal => Some(grid.sin_weight_map()),
    }
}

fn weighted(values: &[f64], w: &Option<Vec<f64>>) -> Vec<f64> {
    match w {
        None => values.to_vec(),
        Some(w) => values.iter().zip(w).map(|(v, w)| v * w).collect(),
    }
}

fn same_grid(a: ErpGrid, b: ErpGrid) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("grid mismatch: {a} vs {b}")));
    }
    Ok(())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn normalize_sum(v: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    let s: f64 = v.iter().sum();
    if !(s > 0.0) {
        return Err(Error::undefined(format!("{what} has no mass")));
    }
    Ok(v.into_iter().map(|x| x / s).collect())
}

fn counts_as_f64(fix: &FixationMap) -> Vec<f64> {
    fix.counts().iter().map(|&c| c as f64).collect()
}

/// Normalized scanpath saliency with population standard deviation.
pub fn nss(pred: &SaliencyMap, fix: &FixationMap, weighting: Weighting) -> Result<Score> {
    same_grid(pred.grid(), fix.grid())?;
    let total = fix.total();
    if total == 0 {
        return Err(Error::undefined("NSS needs at least one fixation"));
    }
    let p = weighted(pred.values(), &weights(pred.grid(), weighting));
    let (mean, std) = mean_std(&p);
    if std == 0.0 {
        return Ok(Score { value: 0.0, degenerate: true });
    }
    let acc: f64 = fix.counts().iter().zip(&p).filter(|(c, _)| **c > 0).map(|(&c, v)| c as f64 * (v - mean) / std).sum();
    Ok(Score { value: acc / total as f64, degenerate: false })
}

/// Histogram intersection of the two maps after normalizing each to sum 1.
pub fn sim(pred: &SaliencyMap, gt: &SaliencyMap, weighting: Weighting) -> Result<f64> {
    same_grid(pred.grid(), gt.grid())?;
    let w = weights(pred.grid(), weighting);
    let p = normalize_sum(weighted(pred.values(), &w), "prediction")?;
    let q = normalize_sum(weighted(gt.values(), &w), "ground truth")?;
    Ok(p.iter().zip(&q).map(|(a, b)| a.min(*b)).sum())
}

/// Pearson correlation of the weighted maps.
pub fn cc(pred: &SaliencyMap, gt: &SaliencyMap, weighting: Weighting) -> Result<f64> {
    same_grid(pred.grid(), gt.grid())?;
    let w = weights(pred.grid(), weighting);
    pearson(&weighted(pred.values(), &w), &weighted(gt.values(), &w))
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    if sa == 0.0 || sb == 0.0 {
        return Err(Error::undefined("correlation of a constant map"));
    }
    let n = a.len() as f64;
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    Ok((cov / (sa * sb)).clamp(-1.0, 1.0))
}

/// Reference distribution for [`kld`].
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    Fixation(&'a FixationMap),
    Saliency(&'a SaliencyMap),
}

impl Reference<'_> {
    fn grid(&self) -> ErpGrid {
        match self {
            Reference::Fixation(f) => f.grid(),
            Reference::Saliency(s) => s.grid(),
        }
    }
}

/// `Σ gt · ln(ε + gt / (ε + pred))` over sum-normalized weighted maps.
pub fn kld(pred: &SaliencyMap, reference: Reference<'_>, weighting: Weighting, eps: f64) -> Result<f64> {
    same_grid(pred.grid(), reference.grid())?;
    let w = weights(pred.grid(), weighting);
    let gt = match reference {
        Reference::Fixation(f) => counts_as_f64(f),
        Reference::Saliency(s) => s.values().to_vec(),
    };
    let gt = normalize_sum(weighted(&gt, &w), "reference")?;
    let p = weighted(pred.values(), &w);
    let ps: f64 = p.iter().sum();
    // an all-zero prediction is treated as the zero distribution
    let p: Vec<f64> = if ps > 0.0 { p.into_iter().map(|x| x / ps).collect() } else { p };
    Ok(gt
        .iter()
        .zip(&p)
        .filter(|(g, _)| **g > 0.0)
        .map(|(g, q)| g * (eps + g / (eps + q)).ln())
        .sum())
}

/// Area under the ROC curve given positive values (with multiplicity) and
/// negative values. Thresholds are the distinct positive values.
fn roc_area(positives: &[f64], negatives: &mut [f64]) -> f64 {
    negatives.sort_by(|a, b| a.total_cmp(b));
    let mut thresholds = positives.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut pos_sorted = positives.to_vec();
    pos_sorted.sort_by(|a, b| a.total_cmp(b));
    let count_ge = |sorted: &[f64], t: f64| sorted.len() - sorted.partition_point(|v| *v < t);
    let np = positives.len() as f64;
    let nn = negatives.len() as f64;
    let (mut area, mut tpr0, mut fpr0) = (0.0, 0.0, 0.0);
    for t in thresholds {
        let tpr = count_ge(&pos_sorted, t) as f64 / np;
        let fpr = count_ge(negatives, t) as f64 / nn;
        area += (fpr - fpr0) * (tpr + tpr0) / 2.0;
        tpr0 = tpr;
        fpr0 = fpr;
    }
    area + (1.0 - fpr0) * (1.0 + tpr0) / 2.0
}

fn positive_values(pred: &SaliencyMap, fix: &FixationMap) -> Vec<f64> {
    let mut out = Vec::new();
    for (i, &c) in fix.counts().iter().enumerate() {
        out.extend(std::iter::repeat_n(pred.values()[i], c as usize));
    }
    out
}

/// AUC with every non-fixated pixel as a negative.
pub fn auc_judd(pred: &SaliencyMap, fix: &FixationMap) -> Result<f64> {
    same_grid(pred.grid(), fix.grid())?;
    if fix.total() == 0 {
        return Err(Error::undefined("AUC-Judd needs at least one fixation"));
    }
    let pos = positive_values(pred, fix);
    let mut neg: Vec<f64> = fix
        .counts()
        .iter()
        .zip(pred.values())
        .filter(|(c, _)| **c == 0)
        .map(|(_, v)| *v)
        .collect();
    if neg.is_empty() {
        return Err(Error::undefined("AUC-Judd needs at least one non-fixated pixel"));
    }
    Ok(roc_area(&pos, &mut neg))
}

/// Shuffled AUC: negatives are drawn without replacement from fixation
/// locations of other maps (`neg_pool`), `|positives|` per split (or the
/// whole pool when it is smaller). Returns the mean over splits.
pub fn s_auc(pred: &SaliencyMap, fix: &FixationMap, neg_pool: &[FixationMap], n_splits: usize, seed: u64) -> Result<f64> {
    same_grid(pred.grid(), fix.grid())?;
    if fix.total() == 0 {
        return Err(Error::undefined("s-AUC needs at least one fixation"));
    }
    let mut pool: Vec<usize> = Vec::new();
    for m in neg_pool {
        same_grid(pred.grid(), m.grid())?;
        for (i, &c) in m.counts().iter().enumerate() {
            pool.extend(std::iter::repeat_n(i, c as usize));
        }
    }
    if pool.is_empty() {
        return Err(Error::undefined("s-AUC negative pool is empty"));
    }
    if n_splits == 0 {
        return Err(Error::invalid("s-AUC needs at least one split"));
    }
    let pos = positive_values(pred, fix);
    let k = pos.len().min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..n_splits {
        let mut neg: Vec<f64> = pool.choose_multiple(&mut rng, k).map(|&i| pred.values()[i]).collect();
        total += roc_area(&pos, &mut neg);
    }
    Ok(total / n_splits as f64)
}

/// Settings shared by full-report evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub weighting: Weighting,
    pub kld_reference: KldReference,
    pub kld_eps: f64,
    /// Gaussian width used when a ground-truth saliency map has to be
    /// derived from fixations.
    pub sigma_deg: f64,
    pub s_auc_splits: usize,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            weighting: Weighting::Sinusoidal,
            kld_reference: KldReference::Fixation,
            kld_eps: DEFAULT_KLD_EPS,
            sigma_deg: gaze::DEFAULT_SIGMA_DEG,
            s_auc_splits: DEFAULT_S_AUC_SPLITS,
            seed: 0,
        }
    }
}

/// All six metrics for one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub nss: f64,
    pub sim: f64,
    pub cc: f64,
    pub auc_j: f64,
    pub s_auc: f64,
    pub kld: f64,
    pub weighting: Weighting,
    pub kld_reference: KldReference,
    /// Metrics that hit a zero-variance or empty-set convention.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "nss" => self.nss,
            "sim" => self.sim,
            "cc" => self.cc,
            "auc_j" => self.auc_j,
            "s_auc" => self.s_auc,
            "kld" => self.kld,
            _ => return None,
        })
    }

    /// Element-wise mean of several reports; degenerate flags are merged.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let mut degenerate: Vec<String> = reports.iter().flat_map(|r| r.degenerate.iter().cloned()).collect();
        degenerate.sort();
        degenerate.dedup();
        Some(MetricReport {
            nss: avg(|r| r.nss),
            sim: avg(|r| r.sim),
            cc: avg(|r| r.cc),
            auc_j: avg(|r| r.auc_j),
            s_auc: avg(|r| r.s_auc),
            kld: avg(|r| r.kld),
            weighting: first.weighting,
            kld_reference: first.kld_reference,
            degenerate,
        })
    }
}

pub const METRIC_NAMES: [&str; 6] = ["nss", "sim", "cc", "auc_j", "s_auc", "kld"];

/// Evaluates every metric. `gt_sal` defaults to the smoothed fixation map;
/// an empty `neg_pool` falls back to the fixation map itself.
pub fn evaluate_frame(
    pred: &SaliencyMap,
    fix: &FixationMap,
    gt_sal: Option<&SaliencyMap>,
    neg_pool: &[FixationMap],
    cfg: &MetricConfig,
) -> Result<MetricReport> {
    let derived;
    let gt = match gt_sal {
        Some(g) => g,
        None => {
            derived = gaze::smooth(fix, cfg.sigma_deg)?;
            &derived
        }
    };
    let mut degenerate = Vec::new();
    let n = nss(pred, fix, cfg.weighting)?;
    if n.degenerate {
        degenerate.push("nss".to_string());
    }
    let cc_v = match cc(pred, gt, cfg.weighting) {
        Ok(v) => v,
        Err(Error::UndefinedMetric(_)) => {
            degenerate.push("cc".to_string());
            0.0
        }
        Err(e) => return Err(e),
    };
    let auc_j = match auc_judd(pred, fix) {
        Ok(v) => v,
        Err(Error::UndefinedMetric(_)) => {
            degenerate.push("auc_j".to_string());
            0.5
        }
        Err(e) => return Err(e),
    };
    let s_auc_v = match s_auc(pred, fix, neg_pool, cfg.s_auc_splits, cfg.seed) {
        Ok(v) => v,
        Err(Error::UndefinedMetric(_)) => {
            degenerate.push("s_auc".to_string());
            0.5
        }
        Err(e) => return Err(e),
    };
    let reference = match cfg.kld_reference {
        KldReference::Fixation => Reference::Fixation(fix),
        KldReference::Saliency => Reference::Saliency(gt),
    };
    Ok(MetricReport {
        nss: n.value,
        sim: sim(pred, gt, cfg.weighting)?,
        cc: cc_v,
        auc_j,
        s_auc: s_auc_v,
        kld: kld(pred, reference, cfg.weighting, cfg.kld_eps)?,
        weighting: cfg.weighting,
        kld_reference: cfg.kld_reference,
        degenerate,
    })
}

/// Relative change of `value` against `baseline`, in percent.
pub fn pct_change(baseline: f64, value: f64) -> f64 {
    (value - baseline) / baseline * 100.0
}

/// Metrics used for consistency analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsistencyMetric {
    Nss,
    Sim,
    Cc,
}

impl ConsistencyMetric {
    pub const ALL: [ConsistencyMetric; 3] = [ConsistencyMetric::Nss, ConsistencyMetric::Sim, ConsistencyMetric::Cc];

    pub fn name(&self) -> &'static str {
        match self {
            ConsistencyMetric::Nss => "nss",
            ConsistencyMetric::Sim => "sim",
            ConsistencyMetric::Cc => "cc",
        }
    }
}

/// Per-frame fixation maps of one subject for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectFixations {
    pub subject: String,
    pub frames: Vec<FixationMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyParams {
    pub metrics: Vec<ConsistencyMetric>,
    pub repeats: usize,
    pub seed: u64,
    pub weighting: Weighting,
    pub sigma_deg: f64,
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        Self {
            metrics: ConsistencyMetric::ALL.to_vec(),
            repeats: 5,
            seed: 0,
            weighting: Weighting::Sinusoidal,
            sigma_deg: gaze::DEFAULT_SIGMA_DEG,
        }
    }
}

pub type Scores = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub baseline: Scores,
    /// Keyed by `"<mode a>-<mode b>"`.
    pub pairwise: BTreeMap<String, Scores>,
    pub pct_change: BTreeMap<String, Scores>,
}

fn pooled(subjects: &[&SubjectFixations], n_frames: usize) -> Result<Vec<FixationMap>> {
    let mut out: Vec<FixationMap> = subjects[0].frames.clone();
    for s in &subjects[1..] {
        if s.frames.len() != n_frames {
            return Err(Error::invalid(format!("subject {} has {} frames, expected {n_frames}", s.subject, s.frames.len())));
        }
        for (acc, f) in out.iter_mut().zip(&s.frames) {
            *acc = acc.merged(f)?;
        }
    }
    Ok(out)
}

/// Consistency between two subject groups: metrics per frame (frames where
/// either group has no fixation are skipped), averaged over frames. NSS is
/// symmetrized over the two prediction directions.
fn group_consistency(a: &[&SubjectFixations], b: &[&SubjectFixations], params: &ConsistencyParams) -> Result<Scores> {
    let n_frames = a[0].frames.len();
    let fa = pooled(a, n_frames)?;
    let fb = pooled(b, n_frames)?;
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    let mut used = 0usize;
    for (ma, mb) in fa.iter().zip(&fb) {
        if ma.total() == 0 || mb.total() == 0 {
            continue;
        }
        let sa = gaze::smooth(ma, params.sigma_deg)?;
        let sb = gaze::smooth(mb, params.sigma_deg)?;
        for m in &params.metrics {
            let v = match m {
                ConsistencyMetric::Nss => {
                    (nss(&sa, mb, params.weighting)?.value + nss(&sb, ma, params.weighting)?.value) / 2.0
                }
                ConsistencyMetric::Sim => sim(&sa, &sb, params.weighting)?,
                ConsistencyMetric::Cc => cc(&sa, &sb, params.weighting).unwrap_or(0.0),
            };
            *sums.entry(m.name().to_string()).or_insert(0.0) += v;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::undefined("no frame with fixations in both groups"));
    }
    Ok(sums.into_iter().map(|(k, v)| (k, v / used as f64)).collect())
}

/// Split-half baseline over all subjects (pooled across modes), then
/// pairwise consistency between every pair of mode groups.
pub fn consistency_baseline(
    groups: &BTreeMap<String, Vec<SubjectFixations>>,
    mode_order: &[String],
    params: &ConsistencyParams,
) -> Result<ConsistencyResult> {
    let everyone: Vec<&SubjectFixations> = mode_order
        .iter()
        .filter_map(|m| groups.get(m))
        .flatten()
        .collect();
    if everyone.len() < 2 {
        return Err(Error::invalid("consistency needs at least two subjects"));
    }
    if params.repeats == 0 {
        return Err(Error::invalid("consistency needs at least one repeat"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut baseline: Scores = BTreeMap::new();
    for _ in 0..params.repeats {
        let mut order = everyone.clone();
        order.shuffle(&mut rng);
        let half = order.len() / 2;
        let s = group_consistency(&order[..half], &order[half..], params)?;
        for (k, v) in s {
            *baseline.entry(k).or_insert(0.0) += v / params.repeats as f64;
        }
    }
    let mut pairwise = BTreeMap::new();
    let mut pct = BTreeMap::new();
    for (i, ma) in mode_order.iter().enumerate() {
        for mb in &mode_order[i + 1..] {
            let (Some(ga), Some(gb)) = (groups.get(ma), groups.get(mb)) else { continue };
            if ga.is_empty() || gb.is_empty() {
                continue;
            }
            let a: Vec<_> = ga.iter().collect();
            let b: Vec<_> = gb.iter().collect();
            let scores = group_consistency(&a, &b, params)?;
            let change = scores.iter().map(|(k, v)| (k.clone(), pct_change(baseline[k], *v))).collect();
            let key = format!("{ma}-{mb}");
            pairwise.insert(key.clone(), scores);
            pct.insert(key, change);
        }
    }
    Ok(ConsistencyResult { baseline, pairwise, pct_change: pct })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(w: usize, h: usize) -> ErpGrid {
        ErpGrid::new(w, h).unwrap()
    }

    fn smap(g: ErpGrid, v: &[f64]) -> SaliencyMap {
        SaliencyMap::new(g, v.to_vec()).unwrap()
    }

    fn fmap(g: ErpGrid, c: &[u32]) -> FixationMap {
        FixationMap::from_counts(g, c.to_vec(), 0).unwrap()
    }

    #[test]
    fn nss_examples() {
        let g = grid(2, 2);
        let p = smap(g, &[1.0, 0.0, 0.0, 0.0]);
        let s = nss(&p, &fmap(g, &[1, 0, 0, 0]), Weighting::Uniform).unwrap();
        assert_abs_diff_eq!(s.value, 3f64.sqrt(), epsilon = 1e-12);
        let s = nss(&smap(g, &[0.3, 0.9, 0.1, 0.5]), &fmap(g, &[1, 1, 1, 1]), Weighting::Uniform).unwrap();
        assert_abs_diff_eq!(s.value, 0.0, epsilon = 1e-12);
        let s = nss(&smap(g, &[0.5; 4]), &fmap(g, &[1, 0, 0, 0]), Weighting::Uniform).unwrap();
        assert!(s.degenerate && s.value == 0.0);
        assert!(matches!(nss(&p, &fmap(g, &[0; 4]), Weighting::Uniform), Err(Error::UndefinedMetric(_))));
        assert!(nss(&p, &fmap(grid(4, 1), &[1, 0, 0, 0]), Weighting::Uniform).is_err());
    }

    #[test]
    fn sim_examples() {
        let g = grid(2, 1);
        let p = smap(g, &[0.5, 0.5]);
        assert_abs_diff_eq!(sim(&p, &p, Weighting::Uniform).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sim(&p, &smap(g, &[0.25, 0.75]), Weighting::Uniform).unwrap(), 0.75, epsilon = 1e-12);
        assert_eq!(sim(&smap(g, &[1.0, 0.0]), &smap(g, &[0.0, 3.0]), Weighting::Uniform).unwrap(), 0.0);
        assert!(sim(&p, &smap(g, &[0.0, 0.0]), Weighting::Uniform).is_err());
    }

    #[test]
    fn cc_examples() {
        let g = grid(3, 2);
        let gt = smap(g, &[0.1, 0.4, 0.2, 0.9, 0.0, 0.3]);
        assert_abs_diff_eq!(cc(&gt, &gt, Weighting::Sinusoidal).unwrap(), 1.0, epsilon = 1e-12);
        let inv: Vec<f64> = gt.values().iter().map(|v| 0.9 - v).collect();
        assert_abs_diff_eq!(cc(&smap(g, &inv), &gt, Weighting::Uniform).unwrap(), -1.0, epsilon = 1e-12);
        assert!(matches!(cc(&smap(g, &[1.0; 6]), &gt, Weighting::Uniform), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn cc_of_independent_noise_is_small() {
        use rand::{Rng, SeedableRng};
        let g = grid(64, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut small = 0;
        for _ in 0..1000 {
            let a: Vec<f64> = (0..g.len()).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..g.len()).map(|_| rng.random()).collect();
            if cc(&smap(g, &a), &smap(g, &b), Weighting::Uniform).unwrap().abs() < 0.1 {
                small += 1;
            }
        }
        assert!(small >= 990, "{small} of 1000");
    }

    #[test]
    fn kld_examples() {
        let g = grid(2, 1);
        let gt = smap(g, &[1.0, 0.0]);
        let pred = smap(g, &[0.5, 0.5]);
        let v = kld(&pred, Reference::Saliency(&gt), Weighting::Uniform, DEFAULT_KLD_EPS).unwrap();
        assert_abs_diff_eq!(v, 2f64.ln(), epsilon = 1e-6);
        let same = kld(&gt, Reference::Saliency(&gt), Weighting::Uniform, DEFAULT_KLD_EPS).unwrap();
        assert!(same.abs() <= 1e-6);
        let f = fmap(g, &[3, 0]);
        let v = kld(&smap(g, &[0.0, 1.0]), Reference::Fixation(&f), Weighting::Uniform, DEFAULT_KLD_EPS).unwrap();
        assert!(v >= (1.0 / DEFAULT_KLD_EPS).ln() - 1e-6);
        assert!(kld(&pred, Reference::Fixation(&fmap(g, &[0, 0])), Weighting::Uniform, 1e-7).is_err());
    }

    #[test]
    fn auc_examples() {
        let g = grid(3, 2);
        let f = fmap(g, &[0, 1, 0, 0, 2, 0]);
        assert_abs_diff_eq!(auc_judd(&smap(g, &[0.3; 6]), &f).unwrap(), 0.5, epsilon = 1e-12);
        let single = fmap(g, &[0, 0, 0, 1, 0, 0]);
        let p = smap(g, &[0.1, 0.2, 0.3, 0.9, 0.2, 0.1]);
        assert_abs_diff_eq!(auc_judd(&p, &single).unwrap(), 1.0, epsilon = 1e-12);
        assert!(auc_judd(&p, &fmap(g, &[0; 6])).is_err());
    }

    #[test]
    fn s_auc_examples() {
        let g = grid(3, 2);
        let f = fmap(g, &[0, 1, 0, 0, 2, 0]);
        let pool = [fmap(g, &[1, 0, 1, 1, 0, 0])];
        assert_abs_diff_eq!(s_auc(&smap(g, &[0.3; 6]), &f, &pool, 10, 1).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s_auc(&smap(g, &[0.1, 0.4, 0.3, 0.2, 0.7, 0.9]), &f, std::slice::from_ref(&f), 20, 1).unwrap(), 0.5, epsilon = 1e-12);
        let p = smap(g, &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        assert_abs_diff_eq!(s_auc(&p, &f, &pool, 10, 1).unwrap(), 1.0, epsilon = 1e-12);
        assert!(s_auc(&p, &f, &[fmap(g, &[0; 6])], 10, 1).is_err());
        let a = s_auc(&smap(g, &[0.1, 0.4, 0.3, 0.2, 0.7, 0.9]), &f, &pool, 7, 42).unwrap();
        let b = s_auc(&smap(g, &[0.1, 0.4, 0.3, 0.2, 0.7, 0.9]), &f, &pool, 7, 42).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn table_two_percentages() {
        assert_abs_diff_eq!(pct_change(6.2946, 5.5892), -11.21, epsilon = 0.005);
        assert_abs_diff_eq!(pct_change(0.8297, 0.7088), -14.57, epsilon = 0.005);
    }

    #[test]
    fn single_row_pattern_cc_unaffected_by_latitude() {
        // a pattern confined to one row sees a single weight, which cancels
        let g = grid(8, 6);
        let pattern = [0.1, 0.5, 0.9, 0.2, 0.0, 0.3, 0.7, 0.4];
        let other = [0.3, 0.1, 0.8, 0.6, 0.2, 0.1, 0.9, 0.5];
        let place = |row: usize, p: &[f64]| {
            let mut v = vec![0.0; g.len()];
            v[row * 8..row * 8 + 8].copy_from_slice(p);
            smap(g, &v)
        };
        let eq = cc(&place(2, &pattern), &place(2, &other), Weighting::Sinusoidal).unwrap();
        let hi = cc(&place(0, &pattern), &place(0, &other), Weighting::Sinusoidal).unwrap();
        assert_abs_diff_eq!(eq, hi, epsilon = 1e-12);
    }

    fn subject(name: &str, g: ErpGrid, pixels: &[(usize, usize)]) -> SubjectFixations {
        let frames = pixels
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| {
                let mut m = FixationMap::zeros(g, i);
                m.add_at(r, c, 1);
                m
            })
            .collect();
        SubjectFixations { subject: name.to_string(), frames }
    }

    #[test]
    fn identical_subjects_are_fully_consistent() {
        let g = grid(32, 16);
        let px = [(8, 4), (7, 5), (8, 20)];
        let mut groups = BTreeMap::new();
        groups.insert("mute".to_string(), (0..3).map(|i| subject(&format!("a{i}"), g, &px)).collect());
        groups.insert("ambisonics".to_string(), (0..3).map(|i| subject(&format!("b{i}"), g, &px)).collect());
        let modes = vec!["mute".to_string(), "ambisonics".to_string()];
        let params = ConsistencyParams { sigma_deg: 15.0, ..Default::default() };
        let r = consistency_baseline(&groups, &modes, &params).unwrap();
        assert_abs_diff_eq!(r.baseline["cc"], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.baseline["sim"], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.pct_change["mute-ambisonics"]["cc"], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn consistency_needs_two_subjects() {
        let g = grid(8, 4);
        let mut groups = BTreeMap::new();
        groups.insert("mute".to_string(), vec![subject("a", g, &[(1, 1)])]);
        let r = consistency_baseline(&groups, &["mute".to_string()], &ConsistencyParams::default());
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    fn arb_map() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, 36)
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(p in arb_map(), idx in proptest::collection::vec(0usize..36, 1..5)) {
            let g = grid(6, 6);
            let mut counts = vec![0u32; 36];
            for i in idx { counts[i] += 1; }
            let f = fmap(g, &counts);
            prop_assume!(counts.contains(&0));
            let a = auc_judd(&smap(g, &p), &f).unwrap();
            let t: Vec<f64> = p.iter().map(|v| (3.0 * v).exp() + 2.0).collect();
            let b = auc_judd(&smap(g, &t), &f).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn sim_kld_scale_invariant(p in arb_map(), q in arb_map(), s in 0.01f64..100.0) {
            let g = grid(6, 6);
            let (pm, qm) = (smap(g, &p), smap(g, &q));
            let ps = smap(g, &p.iter().map(|v| v * s).collect::<Vec<_>>());
            for w in [Weighting::Uniform, Weighting::Sinusoidal] {
                prop_assert!((sim(&pm, &qm, w).unwrap() - sim(&ps, &qm, w).unwrap()).abs() <= 1e-9);
                let a = kld(&pm, Reference::Saliency(&qm), w, 1e-7).unwrap();
                let b = kld(&ps, Reference::Saliency(&qm), w, 1e-7).unwrap();
                prop_assert!((a - b).abs() <= 1e-9);
                let qs = smap(g, &q.iter().map(|v| v * s).collect::<Vec<_>>());
                let c = kld(&pm, Reference::Saliency(&qs), w, 1e-7).unwrap();
                prop_assert!((a - c).abs() <= 1e-9);
            }
        }
    }
}
