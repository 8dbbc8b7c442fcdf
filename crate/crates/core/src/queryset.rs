//! Data-grounded query inputs (single- and multi-metric) and aggregation of
//! per-query method rankings.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use chrono::NaiveDate;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ValueKind;
use crate::ingestion::{MetricSeries, SeriesValues, SubjectData};
use crate::local::abnormality;
use crate::providers::QUERY_CATEGORIES;
use crate::retrieval::Window;

/// Windows sampled by default.
pub const DEFAULT_WINDOWS: [Window; 5] = [
    Window::Days(1),
    Window::Days(7),
    Window::Days(14),
    Window::Days(30),
    Window::All,
];

pub const MULTI_METRIC_RETRIES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Single,
    Multiple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnomalyLevel {
    #[serde(rename = "low")]
    Low,
    #[serde(rename = "medium")]
    Medium,
    #[serde(rename = "high")]
    High,
    #[serde(rename = "missing")]
    Missing,
    #[serde(rename = "n/a")]
    NotApplicable,
}

/// One sampled query input. `anomaly_level` and `zeta` align with
/// `metrics`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryInputTuple {
    pub kind: QueryKind,
    pub metrics: Vec<String>,
    pub timestamp: NaiveDate,
    pub window: Window,
    pub anomaly_level: Vec<AnomalyLevel>,
    pub zeta: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCategory {
    pub name: String,
    pub openness_range: (f64, f64),
    pub kind: QueryKind,
}

pub fn query_categories() -> Vec<QueryCategory> {
    QUERY_CATEGORIES
        .iter()
        .map(|(name, lo, hi, multi)| QueryCategory {
            name: name.to_string(),
            openness_range: (*lo, *hi),
            kind: if *multi { QueryKind::Multiple } else { QueryKind::Single },
        })
        .collect()
}

pub fn query_category(name: &str) -> Result<QueryCategory> {
    query_categories()
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::arg(format!("unknown query category {name:?}")))
}

/// Openness drawn uniformly from the category's closed range.
pub fn assign_openness(category: &str, seed: u64) -> Result<f64> {
    let (lo, hi) = query_category(category)?.openness_range;
    Ok(ChaCha8Rng::seed_from_u64(seed).random_range(lo..=hi))
}

/// Tercile cut points `(q33, q66)` of a sorted sample.
fn tercile_cuts(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len();
    (sorted[n.div_ceil(3) - 1], sorted[(2 * n).div_ceil(3) - 1])
}

fn level_of(zeta: f64, cuts: (f64, f64)) -> AnomalyLevel {
    if zeta <= cuts.0 {
        AnomalyLevel::Low
    } else if zeta <= cuts.1 {
        AnomalyLevel::Medium
    } else {
        AnomalyLevel::High
    }
}

/// Present days whose window lies inside the recorded span, with their ζ.
fn feasible_zetas(series: &MetricSeries, window: Window) -> Vec<(NaiveDate, f64)> {
    let Some(first) = series.dates().first().copied() else {
        return Vec::new();
    };
    series
        .present_dates()
        .into_iter()
        .filter(|t| match window {
            Window::Days(k) => (*t - first).num_days() + 1 >= i64::from(k),
            Window::All => true,
        })
        .filter_map(|t| {
            let a = abnormality(series, t, window).ok()?;
            a.valid.then_some((t, a.normalized))
        })
        .collect()
}

/// Per numeric metric and window: one day from each occupied ζ tercile plus
/// one day with a missing value, if any. Per textual metric: one day with a
/// present entry.
pub fn sample_single_metric_inputs(subject: &SubjectData, windows: &[Window], seed: u64) -> Vec<QueryInputTuple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, series) in &subject.series {
        match series.values() {
            SeriesValues::Numeric(_) => {
                for &window in windows {
                    let feasible = feasible_zetas(series, window);
                    let mut groups: BTreeMap<AnomalyLevel, Vec<(NaiveDate, f64)>> = BTreeMap::new();
                    if feasible.len() >= 3 {
                        let mut sorted: Vec<f64> = feasible.iter().map(|p| p.1).collect();
                        sorted.sort_by(f64::total_cmp);
                        let cuts = tercile_cuts(&sorted);
                        for p in &feasible {
                            groups.entry(level_of(p.1, cuts)).or_default().push(*p);
                        }
                    } else if !feasible.is_empty() {
                        groups.insert(AnomalyLevel::Low, feasible);
                    }
                    for (level, members) in groups {
                        let (t, z) = *members.choose(&mut rng).expect("groups are non-empty");
                        out.push(single(name, t, window, level, Some(z)));
                    }
                    if let Some(t) = series.missing_dates().choose(&mut rng) {
                        let z = abnormality(series, *t, window).ok().filter(|a| a.valid).map(|a| a.normalized);
                        out.push(single(name, *t, window, AnomalyLevel::Missing, z));
                    }
                }
            }
            SeriesValues::Textual(_) => {
                let present = series.present_dates();
                if let (Some(t), Some(w)) = (present.choose(&mut rng), windows.choose(&mut rng)) {
                    out.push(single(name, *t, *w, AnomalyLevel::NotApplicable, None));
                }
            }
        }
    }
    out
}

fn single(metric: &str, t: NaiveDate, window: Window, level: AnomalyLevel, zeta: Option<f64>) -> QueryInputTuple {
    QueryInputTuple {
        kind: QueryKind::Single,
        metrics: vec![metric.to_string()],
        timestamp: t,
        window,
        anomaly_level: vec![level],
        zeta: vec![zeta],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSample {
    pub tuples: Vec<QueryInputTuple>,
    /// Set when the subject has fewer than two numeric metrics.
    pub insufficient_metrics: bool,
}

/// `count` draws of 2 or 3 numeric metrics sharing a present day. Draws
/// without a common day are retried a bounded number of times, then skipped.
pub fn sample_multi_metric_inputs(subject: &SubjectData, count: usize, windows: &[Window], seed: u64) -> MultiSample {
    let numeric: Vec<(&String, &MetricSeries)> = subject
        .series
        .iter()
        .filter(|(_, s)| s.kind() == ValueKind::Numeric)
        .collect();
    if numeric.len() < 2 || windows.is_empty() {
        return MultiSample {
            tuples: Vec::new(),
            insufficient_metrics: numeric.len() < 2,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tuples = Vec::new();
    for _ in 0..count {
        for _ in 0..MULTI_METRIC_RETRIES {
            let size = if numeric.len() >= 3 && rng.random_bool(0.5) { 3 } else { 2 };
            let mut idx: Vec<usize> = (0..numeric.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(size);
            idx.sort_unstable();
            let chosen: Vec<_> = idx.iter().map(|&i| numeric[i]).collect();
            let common: BTreeSet<NaiveDate> = chosen
                .iter()
                .map(|(_, s)| s.present_dates().into_iter().collect::<BTreeSet<_>>())
                .reduce(|a, b| a.intersection(&b).copied().collect())
                .unwrap_or_default();
            let common: Vec<NaiveDate> = common.into_iter().collect();
            let Some(&t) = common.choose(&mut rng) else {
                continue;
            };
            let window = *windows.choose(&mut rng).expect("non-empty windows");
            let mut levels = Vec::with_capacity(size);
            let mut zetas = Vec::with_capacity(size);
            for (_, s) in &chosen {
                let z = abnormality(s, t, window).ok().filter(|a| a.valid).map(|a| a.normalized);
                let mut sorted: Vec<f64> = feasible_zetas(s, window).into_iter().map(|p| p.1).collect();
                sorted.sort_by(f64::total_cmp);
                let level = match z {
                    Some(z) if sorted.len() >= 3 => level_of(z, tercile_cuts(&sorted)),
                    _ => AnomalyLevel::Low,
                };
                levels.push(level);
                zetas.push(z);
            }
            tuples.push(QueryInputTuple {
                kind: QueryKind::Multiple,
                metrics: chosen.iter().map(|(n, _)| n.to_string()).collect(),
                timestamp: t,
                window,
                anomaly_level: levels,
                zeta: zetas,
            });
            break;
        }
    }
    MultiSample {
        tuples,
        insufficient_metrics: false,
    }
}

/// Natural-language form of a window, as understood by the stub parser.
pub fn window_phrase(window: Window) -> String {
    match window {
        Window::Days(1) => "today".into(),
        Window::Days(d) => format!("over the past {d} days"),
        Window::All => "overall".into(),
    }
}

/// Templated question for a tuple under a category (offline stand-in for a
/// generated question).
pub fn question_stub(tuple: &QueryInputTuple, category: &str) -> Result<String> {
    query_category(category)?;
    let metrics = tuple.metrics.join(" and ").to_lowercase();
    let w = window_phrase(tuple.window);
    let t = tuple.timestamp;
    Ok(match category {
        "General Knowledge" => format!("What is the optimal range for {metrics}, looking at my data {w} as of {t}?"),
        "Data Retrieval" => format!("What was my average {metrics} {w} as of {t}?"),
        "Trend Analysis" => format!("What trend do you see in my {metrics} {w} as of {t}?"),
        "Comparative Insight" => format!("How has my {metrics} improved {w} compared to before {t}?"),
        "Anomaly Detection" => format!("Was anything unusual in my {metrics} {w} as of {t}?"),
        "Actionable Advice" => format!("How can I improve my {metrics} given my data {w} as of {t}?"),
        "Exploratory Analysis" => format!("Why might my {metrics} look the way it does {w} as of {t}?"),
        "Metric Relationships" => format!("What is the relationship between my {metrics} {w} as of {t}?"),
        _ => format!("Considering how I feel, what does my {metrics} say {w} as of {t}?"),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankRecord {
    pub query_id: String,
    pub ranks: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mean_rank: f64,
    pub win_rate: f64,
}

/// Mean rank and first-place rate per method.
pub fn aggregate_rankings(records: &[RankRecord]) -> Result<BTreeMap<String, MethodSummary>> {
    let Some(first) = records.first() else {
        return Err(Error::Validation("no rank records".into()));
    };
    let methods: BTreeSet<&String> = first.ranks.keys().collect();
    let n = methods.len() as u32;
    let mut rank_sum: BTreeMap<&String, u64> = methods.iter().map(|m| (*m, 0)).collect();
    let mut wins: BTreeMap<&String, u64> = methods.iter().map(|m| (*m, 0)).collect();
    for rec in records {
        let these: BTreeSet<&String> = rec.ranks.keys().collect();
        if these != methods {
            return Err(Error::Validation(format!("record {}: method set differs from the first record", rec.query_id)));
        }
        let mut seen: BTreeSet<u32> = rec.ranks.values().copied().collect();
        if seen.len() != rec.ranks.len() || seen.pop_first() != Some(1) || seen.last().copied().unwrap_or(1) != n {
            return Err(Error::Validation(format!(
                "record {}: ranks must be a permutation of 1..={n}",
                rec.query_id
            )));
        }
        for (m, r) in &rec.ranks {
            *rank_sum.get_mut(m).expect("method checked") += u64::from(*r);
            if *r == 1 {
                *wins.get_mut(m).expect("method checked") += 1;
            }
        }
    }
    let total = records.len() as f64;
    Ok(methods
        .into_iter()
        .map(|m| {
            (
                m.clone(),
                MethodSummary {
                    mean_rank: rank_sum[m] as f64 / total,
                    win_rate: wins[m] as f64 / total,
                },
            )
        })
        .collect())
}

pub fn write_jsonl<T: Serialize>(items: &[T], mut sink: impl Write) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut sink, item).map_err(|e| Error::Io(e.into()))?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

/// One JSON document per non-blank line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(&line);
        let item = serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Schema {
            path: format!("line {}: {}", i + 1, e.path()),
            message: e.inner().to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}
