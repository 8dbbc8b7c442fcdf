//! Numeric primitives: rank correlations, the Fisher z pair, binned mutual
//! information and the sigmoid squashing map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp applied to |r| before `arctanh`.
pub const FISHER_EPSILON: f64 = 1e-6;

/// Default minimum number of paired observations for a correlation.
pub const DEFAULT_MIN_SAMPLES: usize = 10;

/// A correlation coefficient with the sample count it was computed from.
/// `r` is `None` when the estimate is not valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub r: Option<f64>,
    pub n: usize,
}

impl CorrelationEstimate {
    pub fn invalid(n: usize) -> Self {
        Self { r: None, n }
    }

    pub fn valid(&self) -> bool {
        self.r.is_some()
    }
}

/// 1-based ranks with ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation of pairwise-complete observations.
///
/// Valid iff there are at least `min_samples` pairs (and at least two) and
/// neither side is constant.
pub fn spearman(pairs: &[(f64, f64)], min_samples: usize) -> CorrelationEstimate {
    let n = pairs.len();
    if n < min_samples.max(2) {
        return CorrelationEstimate::invalid(n);
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
        return CorrelationEstimate::invalid(n);
    }
    let r = pearson(&average_ranks(&xs), &average_ranks(&ys));
    CorrelationEstimate { r, n }
}

pub fn fisher_z(r: f64) -> Result<f64> {
    if !r.is_finite() {
        return Err(Error::arg(format!("fisher_z of non-finite value {r}")));
    }
    // atanh on |r| keeps the transform exactly odd
    let c = r.abs().min(1.0 - FISHER_EPSILON);
    Ok(c.atanh().copysign(r))
}

pub fn inv_fisher_z(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::arg(format!("inv_fisher_z of non-finite value {z}")));
    }
    Ok(z.tanh())
}

/// Tie-corrected Kendall rank correlation (tau-b) between two score vectors
/// over the same items, aligned by index.
///
/// Returns an error when the item sets differ in size, when fewer than two
/// items are given, or when either vector is entirely tied (tau-b undefined).
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::arg(format!(
            "kendall_tau over different item sets ({} vs {} items)",
            a.len(),
            b.len()
        )));
    }
    let k = a.len();
    if k < 2 {
        return Err(Error::arg("kendall_tau needs at least 2 items"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::arg("kendall_tau over NaN scores"));
    }
    let mut s: i64 = 0;
    for i in 0..k {
        for j in (i + 1)..k {
            let da = sign(a[i] - a[j]);
            let db = sign(b[i] - b[j]);
            s += da * db;
        }
    }
    let n0 = (k * (k - 1) / 2) as i64;
    let n1 = tied_pairs(a);
    let n2 = tied_pairs(b);
    let denom = ((n0 - n1) * (n0 - n2)) as f64;
    if denom == 0.0 {
        return Err(Error::arg("kendall_tau undefined: a ranking is fully tied"));
    }
    Ok(s as f64 / denom.sqrt())
}

fn sign(d: f64) -> i64 {
    if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    }
}

fn tied_pairs(v: &[f64]) -> i64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0i64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as i64;
        total += t * (t - 1) / 2;
        i = j;
    }
    total
}

fn bin_index(v: f64, lo: f64, width: f64, bins: usize) -> usize {
    if width == 0.0 {
        return 0;
    }
    (((v - lo) / width) as usize).min(bins - 1)
}

/// Plug-in mutual information (nats) from an equal-width joint histogram,
/// clamped at zero.
pub fn mutual_information(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::arg(format!(
            "mutual_information length mismatch ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::arg("mutual_information needs at least 2 samples"));
    }
    if bins < 2 {
        return Err(Error::arg("mutual_information needs at least 2 bins"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::arg("mutual_information over non-finite values"));
    }
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, (hi - lo) / bins as f64)
    };
    let (xlo, xw) = range(x);
    let (ylo, yw) = range(y);

    let mut joint = vec![0usize; bins * bins];
    let mut px = vec![0usize; bins];
    let mut py = vec![0usize; bins];
    for (&a, &b) in x.iter().zip(y) {
        let i = bin_index(a, xlo, xw, bins);
        let j = bin_index(b, ylo, yw, bins);
        joint[i * bins + j] += 1;
        px[i] += 1;
        py[j] += 1;
    }
    let n = x.len() as f64;
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / n;
            let denom = (px[i] as f64 / n) * (py[j] as f64 / n);
            mi += pxy * (pxy / denom).ln();
        }
    }
    Ok(mi.max(0.0))
}

/// Logistic squashing `1 / (1 + exp(-gamma * z))`.
pub fn squash(z: f64, gamma: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::arg(format!("squash of non-finite value {z}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::arg(format!("squash steepness must be positive, got {gamma}")));
    }
    let t = gamma * z;
    Ok(if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    })
}

/// Inverse of [`squash`] for `w` in (0, 1).
pub fn unsquash(w: f64, gamma: f64) -> Result<f64> {
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::arg(format!("unsquash needs w in (0,1), got {w}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::arg(format!("squash steepness must be positive, got {gamma}")));
    }
    Ok((w / (1.0 - w)).ln() / gamma)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample (n-1) standard deviation; `None` below two values.
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}
