//! Short-term, query-conditioned edge weights from recent-window abnormality
//! and the openness dial.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Node;
use crate::ingestion::{MetricSeries, SeriesValues, SubjectData};
use crate::retrieval::Window;
use crate::stats;

/// Abnormality above this many standard deviations saturates at 1.
pub const ZETA_SATURATION: f64 = 3.0;

pub const DEFAULT_GAMMA_LOCAL: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbnormalityScore {
    pub raw: f64,
    pub normalized: f64,
    pub observed_count: usize,
    pub valid: bool,
}

impl AbnormalityScore {
    fn invalid() -> Self {
        Self {
            raw: 0.0,
            normalized: 0.0,
            observed_count: 0,
            valid: false,
        }
    }
}

/// Calendar days covered by `window` ending at `t`. `Window::All` starts at
/// `first`, the earliest date of interest.
pub fn window_days(t: NaiveDate, window: Window, first: Option<NaiveDate>) -> Vec<NaiveDate> {
    let start = match window {
        Window::Days(k) => t - Duration::days(i64::from(k.max(1)) - 1),
        Window::All => first.unwrap_or(t).min(t),
    };
    start.iter_days().take_while(|d| *d <= t).collect()
}

/// Historical mean and sample standard deviation over every present value.
fn history(values: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    (stats::mean(&present), stats::sample_std(&present))
}

/// z-scores of the present values inside the window; σ = 0 (or a single
/// historical value) gives 0 for every day.
fn window_z(series: &MetricSeries, t: NaiveDate, window: Window) -> Result<Vec<f64>> {
    let SeriesValues::Numeric(values) = series.values() else {
        return Err(Error::arg("abnormality needs a numeric series"));
    };
    let (mean, sd) = history(values);
    let days = window_days(t, window, series.dates().first().copied());
    Ok(days
        .into_iter()
        .filter_map(|d| series.numeric_at(d))
        .map(|v| match (mean, sd) {
            (Some(m), Some(s)) if s > 0.0 => (v - m) / s,
            _ => 0.0,
        })
        .collect())
}

/// Mean |z| over the present days in the window ending at `t`, normalized
/// to [0, 1] by saturating at three standard deviations.
pub fn abnormality(series: &MetricSeries, t: NaiveDate, window: Window) -> Result<AbnormalityScore> {
    if let Window::Days(0) = window {
        return Err(Error::arg("window must cover at least one day"));
    }
    let z = window_z(series, t, window)?;
    if z.is_empty() {
        return Ok(AbnormalityScore::invalid());
    }
    let raw = z.iter().map(|v| v.abs()).sum::<f64>() / z.len() as f64;
    Ok(AbnormalityScore {
        raw,
        normalized: (raw / ZETA_SATURATION).min(1.0),
        observed_count: z.len(),
        valid: true,
    })
}

/// Signed mean z-score over the window; `None` when undefined.
pub fn window_deviation(series: &MetricSeries, t: NaiveDate, window: Window) -> Option<f64> {
    let z = window_z(series, t, window).ok()?;
    stats::mean(&z)
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must lie in [0,1], got {v}")))
    }
}

/// `(2η − 1)ζ + (1 − η)`: η = 1 rewards abnormal neighbors, η = 0 calm
/// ones, η = 0.5 ignores ζ.
pub fn short_term_weight(zeta: f64, eta: f64) -> Result<f64> {
    check_unit("zeta", zeta)?;
    check_unit("eta", eta)?;
    Ok(((2.0 * eta - 1.0) * zeta + (1.0 - eta)).clamp(0.0, 1.0))
}

/// Sigmoid centered on w_short = 0.5.
pub fn local_weight(w_short: f64, gamma_local: f64) -> Result<f64> {
    check_unit("w_short", w_short)?;
    stats::squash(2.0 * w_short - 1.0, gamma_local)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalWeight {
    pub zeta: f64,
    pub w_short: f64,
    pub w_local: f64,
    pub valid: bool,
}

/// Local weight per neighbor id. Neighbors without a usable numeric window
/// are scored as calm (ζ = 0) and flagged invalid.
pub fn local_weights_for_node(
    subject: &SubjectData,
    neighbors: &[&Node],
    t: NaiveDate,
    window: Window,
    eta: f64,
    gamma_local: f64,
) -> Result<BTreeMap<String, LocalWeight>> {
    let mut out = BTreeMap::new();
    for node in neighbors {
        let score = subject
            .series_for(node)
            .and_then(|s| abnormality(s, t, window).ok())
            .unwrap_or_else(AbnormalityScore::invalid);
        let zeta = if score.valid { score.normalized } else { 0.0 };
        let w_short = short_term_weight(zeta, eta)?;
        out.insert(
            node.id.clone(),
            LocalWeight {
                zeta,
                w_short,
                w_local: local_weight(w_short, gamma_local)?,
                valid: score.valid,
            },
        );
    }
    Ok(out)
}
