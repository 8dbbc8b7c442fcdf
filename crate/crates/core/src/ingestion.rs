//! Per-subject daily metric series, CSV loading and the participant
//! selection statistics (missingness, valid period, variability, pairwise
//! mutual information).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Node, ValueKind};
use crate::stats;
use crate::text::normalize_name;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub const DEFAULT_MI_BINS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum SeriesValues {
    Numeric(Vec<Option<f64>>),
    Textual(Vec<Option<String>>),
}

/// One metric's daily observations. `dates` is strictly increasing and
/// aligned with the values; `None` marks a dated but missing observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    dates: Vec<NaiveDate>,
    values: SeriesValues,
}

impl MetricSeries {
    pub fn numeric(points: Vec<(NaiveDate, Option<f64>)>) -> Result<Self> {
        let (dates, values): (Vec<_>, Vec<_>) = sorted_unique(points)?.into_iter().unzip();
        Ok(Self {
            dates,
            values: SeriesValues::Numeric(values),
        })
    }

    pub fn textual(points: Vec<(NaiveDate, Option<String>)>) -> Result<Self> {
        let (dates, values): (Vec<_>, Vec<_>) = sorted_unique(points)?.into_iter().unzip();
        Ok(Self {
            dates,
            values: SeriesValues::Textual(values),
        })
    }

    pub fn kind(&self) -> ValueKind {
        match self.values {
            SeriesValues::Numeric(_) => ValueKind::Numeric,
            SeriesValues::Textual(_) => ValueKind::Textual,
        }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &SeriesValues {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn present_count(&self) -> usize {
        match &self.values {
            SeriesValues::Numeric(v) => v.iter().filter(|x| x.is_some()).count(),
            SeriesValues::Textual(v) => v.iter().filter(|x| x.is_some()).count(),
        }
    }

    fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Numeric value at `date`; `None` for missing, absent or textual.
    pub fn numeric_at(&self, date: NaiveDate) -> Option<f64> {
        match &self.values {
            SeriesValues::Numeric(v) => self.index_of(date).and_then(|i| v[i]),
            SeriesValues::Textual(_) => None,
        }
    }

    pub fn is_present(&self, date: NaiveDate) -> bool {
        self.index_of(date).is_some_and(|i| match &self.values {
            SeriesValues::Numeric(v) => v[i].is_some(),
            SeriesValues::Textual(v) => v[i].is_some(),
        })
    }

    /// Display form of the value at `date`, empty when missing.
    pub fn display_at(&self, date: NaiveDate) -> String {
        let Some(i) = self.index_of(date) else {
            return String::new();
        };
        match &self.values {
            SeriesValues::Numeric(v) => v[i].map(|x| x.to_string()).unwrap_or_default(),
            SeriesValues::Textual(v) => v[i].clone().unwrap_or_default(),
        }
    }

    /// Present numeric values, in date order.
    pub fn numeric_values(&self) -> Vec<f64> {
        match &self.values {
            SeriesValues::Numeric(v) => v.iter().flatten().copied().collect(),
            SeriesValues::Textual(_) => Vec::new(),
        }
    }

    /// Dates carrying a present value.
    pub fn present_dates(&self) -> Vec<NaiveDate> {
        self.dates
            .iter()
            .copied()
            .filter(|d| self.is_present(*d))
            .collect()
    }

    /// Dates whose value is explicitly missing.
    pub fn missing_dates(&self) -> Vec<NaiveDate> {
        self.dates
            .iter()
            .copied()
            .filter(|d| !self.is_present(*d))
            .collect()
    }
}

fn sorted_unique<T>(mut points: Vec<(NaiveDate, T)>) -> Result<Vec<(NaiveDate, T)>> {
    points.sort_by_key(|p| p.0);
    if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDate(w[0].0.to_string()));
    }
    Ok(points)
}

/// Pairwise-complete numeric observations of two series, joined on date.
/// `None` when either series is textual.
pub fn paired_observations(x: &MetricSeries, y: &MetricSeries) -> Option<Vec<(f64, f64)>> {
    let (SeriesValues::Numeric(xv), SeriesValues::Numeric(_)) = (&x.values, &y.values) else {
        return None;
    };
    Some(
        x.dates
            .iter()
            .zip(xv)
            .filter_map(|(d, xv)| Some((xv.as_ref().copied()?, y.numeric_at(*d)?)))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectData {
    pub subject_id: String,
    pub series: BTreeMap<String, MetricSeries>,
}

impl SubjectData {
    pub fn new(subject_id: impl Into<String>) -> Self {
        Self {
            subject_id: subject_id.into(),
            series: BTreeMap::new(),
        }
    }

    pub fn with_series(mut self, metric: impl Into<String>, series: MetricSeries) -> Self {
        self.series.insert(metric.into(), series);
        self
    }

    pub fn metric_kinds(&self) -> BTreeMap<&str, ValueKind> {
        self.series.iter().map(|(k, s)| (k.as_str(), s.kind())).collect()
    }

    /// Union of all dated rows across metrics.
    pub fn timestamps(&self) -> BTreeSet<NaiveDate> {
        self.series.values().flat_map(|s| s.dates.iter().copied()).collect()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.series.values().filter_map(|s| s.dates.last().copied()).max()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.series.values().filter_map(|s| s.dates.first().copied()).min()
    }

    pub fn get(&self, metric: &str) -> Option<&MetricSeries> {
        self.series.get(metric)
    }

    /// Series recorded for a graph node: a linked data-source feature first,
    /// then a metric column whose normalized name equals the node name.
    pub fn series_for(&self, node: &Node) -> Option<&MetricSeries> {
        for src in &node.data_sources {
            if let Some(s) = self.series.get(&src.feature) {
                return Some(s);
            }
        }
        let target = normalize_name(&node.name);
        self.series
            .iter()
            .find(|(k, _)| normalize_name(k) == target)
            .map(|(_, s)| s)
    }
}

/// Load one subject from a `date,<metric>,...` CSV. Empty cells are missing
/// observations; a column is numeric iff every non-empty cell parses as a
/// decimal number.
pub fn load_subject_csv(source: impl Read, subject_id: &str) -> Result<SubjectData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.get(0).map(|h| h.eq_ignore_ascii_case("date")) != Some(true) {
        return Err(Error::Csv {
            line: 1,
            message: "first column must be `date`".into(),
        });
    }
    let metrics: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut seen = BTreeSet::new();
    for m in &metrics {
        if m.is_empty() || !seen.insert(m.clone()) {
            return Err(Error::Csv {
                line: 1,
                message: format!("empty or duplicate metric column {m:?}"),
            });
        }
    }

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); metrics.len()];
    let mut date_seen = BTreeSet::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| Error::Csv {
            line,
            message: e.to_string(),
        })?;
        let raw = record.get(0).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw, DATE_FORMAT).map_err(|_| Error::Csv {
            line,
            message: format!("unparsable date {raw:?}"),
        })?;
        if !date_seen.insert(date) {
            return Err(Error::DuplicateDate(date.to_string()));
        }
        dates.push(date);
        for (j, col) in cells.iter_mut().enumerate() {
            col.push(record.get(j + 1).unwrap_or("").to_string());
        }
    }

    let mut subject = SubjectData::new(subject_id);
    for (name, col) in metrics.into_iter().zip(cells) {
        let numeric = col.iter().all(|c| c.is_empty() || parse_decimal(c).is_some());
        let series = if numeric {
            MetricSeries::numeric(
                dates
                    .iter()
                    .zip(&col)
                    .map(|(d, c)| (*d, parse_decimal(c)))
                    .collect(),
            )?
        } else {
            MetricSeries::textual(
                dates
                    .iter()
                    .zip(col)
                    .map(|(d, c)| (*d, (!c.is_empty()).then_some(c)))
                    .collect(),
            )?
        };
        subject.series.insert(name, series);
    }
    Ok(subject)
}

fn parse_decimal(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn load_subject_file(path: impl AsRef<Path>) -> Result<SubjectData> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::arg(format!("cannot derive a subject id from {}", path.display())))?;
    load_subject_csv(File::open(path)?, id)
}

/// Write a subject back out in the CSV layout [`load_subject_csv`] reads.
pub fn write_subject_csv(subject: &SubjectData, sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["date".to_string()];
    header.extend(subject.series.keys().cloned());
    w.write_record(&header).map_err(csv_io)?;
    for date in subject.timestamps() {
        let mut row = vec![date.format(DATE_FORMAT).to_string()];
        row.extend(subject.series.values().map(|s| s.display_at(date)));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Load every `*.csv` in `dir` (file stem = subject id), sorted by id.
pub fn load_cohort_dir(dir: impl AsRef<Path>) -> Result<Vec<SubjectData>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
        .collect();
    paths.sort();
    paths.into_iter().map(load_subject_file).collect()
}

/// Mean over metrics of the fraction of the subject's timestamps at which
/// that metric has no value.
pub fn missing_rate(subject: &SubjectData) -> Result<f64> {
    let timestamps = subject.timestamps().len();
    if subject.series.is_empty() || timestamps == 0 {
        return Err(Error::arg(format!("subject {} has no data", subject.subject_id)));
    }
    let total: f64 = subject
        .series
        .values()
        .map(|s| (timestamps - s.present_count()) as f64 / timestamps as f64)
        .sum();
    Ok(total / subject.series.len() as f64)
}

/// Days between the first and last timestamp.
pub fn valid_period(subject: &SubjectData) -> Result<i64> {
    match (subject.first_date(), subject.last_date()) {
        (Some(a), Some(b)) => Ok((b - a).num_days()),
        _ => Err(Error::arg(format!("subject {} has no dated rows", subject.subject_id))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variability {
    pub cv: f64,
    pub eligible_metrics: usize,
}

impl Variability {
    pub fn no_eligible_metrics(&self) -> bool {
        self.eligible_metrics == 0
    }
}

/// Sum over numeric metrics of sample std / mean. Metrics with fewer than two
/// values or |mean| < 1e-12 are skipped. The signed ratio is kept.
pub fn variability(subject: &SubjectData) -> Variability {
    let mut cv = 0.0;
    let mut eligible = 0;
    for s in subject.series.values() {
        let v = s.numeric_values();
        let (Some(m), Some(sd)) = (stats::mean(&v), stats::sample_std(&v)) else {
            continue;
        };
        if m.abs() < 1e-12 {
            continue;
        }
        cv += sd / m;
        eligible += 1;
    }
    Variability {
        cv,
        eligible_metrics: eligible,
    }
}

/// Sum of binned mutual information over all unordered numeric metric pairs,
/// each on its pairwise-complete observations. Pairs with fewer than
/// `min_samples` complete observations contribute 0.
pub fn pairwise_mi(subject: &SubjectData, bins: usize, min_samples: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::arg("pairwise_mi needs at least 2 bins"));
    }
    let numeric: Vec<&MetricSeries> = subject
        .series
        .values()
        .filter(|s| s.kind() == ValueKind::Numeric)
        .collect();
    let mut total = 0.0;
    for i in 0..numeric.len() {
        for j in (i + 1)..numeric.len() {
            let pairs = paired_observations(numeric[i], numeric[j]).unwrap_or_default();
            if pairs.len() < min_samples.max(2) {
                continue;
            }
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            total += stats::mutual_information(&x, &y, bins)?;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub md: f64,
    pub vl: i64,
    pub cv: f64,
    pub mi: f64,
}

pub fn selection_stats(subject: &SubjectData, bins: usize, min_samples: usize) -> Result<SelectionStats> {
    Ok(SelectionStats {
        md: missing_rate(subject)?,
        vl: valid_period(subject)?,
        cv: variability(subject).cv,
        mi: pairwise_mi(subject, bins, min_samples)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Subjects with a higher missing rate are ineligible.
    pub max_missing: f64,
    /// Subjects with a shorter valid period (days) are ineligible.
    pub min_valid_days: i64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            max_missing: 0.5,
            min_valid_days: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub subject_ids: Vec<String>,
    pub shortfall: bool,
}

/// Filter by completeness and duration, split the eligible subjects into
/// variability deciles and draw round-robin, one per decile, until `n` are
/// chosen.
pub fn select_participants(
    cohort: &[SubjectData],
    n: usize,
    seed: u64,
    cfg: &SelectionConfig,
) -> Result<Selection> {
    if n == 0 {
        return Err(Error::arg("select_participants needs n >= 1"));
    }
    let mut eligible: Vec<(f64, &str)> = Vec::new();
    for s in cohort {
        let (Ok(md), Ok(vl)) = (missing_rate(s), valid_period(s)) else {
            continue;
        };
        if md <= cfg.max_missing && vl >= cfg.min_valid_days {
            eligible.push((variability(s).cv, s.subject_id.as_str()));
        }
    }
    eligible.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    eligible.dedup_by(|a, b| a.1 == b.1);

    let len = eligible.len();
    let mut deciles: Vec<Vec<&str>> = vec![Vec::new(); 10];
    for (i, (_, id)) in eligible.iter().enumerate() {
        deciles[i * 10 / len.max(1)].push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for d in &mut deciles {
        d.shuffle(&mut rng);
    }

    let target = n.min(len);
    let mut chosen = Vec::with_capacity(target);
    let mut cursor = [0usize; 10];
    while chosen.len() < target {
        for (d, members) in deciles.iter().enumerate() {
            if chosen.len() == target {
                break;
            }
            if let Some(id) = members.get(cursor[d]) {
                chosen.push(id.to_string());
                cursor[d] += 1;
            }
        }
    }
    Ok(Selection {
        subject_ids: chosen,
        shortfall: n > len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, day).unwrap()
    }

    fn load(csv: &str) -> Result<SubjectData> {
        load_subject_csv(csv.as_bytes(), "s1")
    }

    #[test]
    fn loads_with_one_missing_cell() {
        let s = load("date,hr,steps\n2020-01-01,60,1000\n2020-01-02,,1200\n2020-01-03,62,900\n").unwrap();
        assert_eq!(s.series.len(), 2);
        let missing: usize = s.series.values().map(|m| m.len() - m.present_count()).sum();
        assert_eq!(missing, 1);
        assert_eq!(s.get("hr").unwrap().numeric_at(d(2)), None);
        assert_eq!(s.get("hr").unwrap().len(), 3);
    }

    #[test]
    fn duplicate_date_is_rejected() {
        match load("date,hr\n2020-01-01,60\n2020-01-01,61\n") {
            Err(Error::DuplicateDate(date)) => assert_eq!(date, "2020-01-01"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_date_reports_line() {
        match load("date,hr\n2020-01-01,60\n01/02/2020,61\n") {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mixed_column_is_textual() {
        let s = load("date,mood\n2020-01-01,3\n2020-01-02,tired\n").unwrap();
        assert_eq!(s.get("mood").unwrap().kind(), ValueKind::Textual);
    }

    #[test]
    fn rows_are_sorted_by_date() {
        let s = load("date,hr\n2020-01-03,3\n2020-01-01,1\n2020-01-02,2\n").unwrap();
        assert_eq!(s.get("hr").unwrap().numeric_values(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn missing_rate_examples() {
        let full = load("date,a\n2020-01-01,1\n2020-01-02,2\n").unwrap();
        assert_eq!(missing_rate(&full).unwrap(), 0.0);
        let empty = load("date,a,b\n2020-01-01,,\n2020-01-02,,\n").unwrap();
        assert_eq!(missing_rate(&empty).unwrap(), 1.0);
        let mixed = load(
            "date,a,b\n2020-01-01,1,\n2020-01-02,,\n2020-01-03,3,3\n2020-01-04,4,4\n",
        )
        .unwrap();
        // a: 1/4 missing, b: 2/4 missing
        assert_eq!(missing_rate(&mixed).unwrap(), 0.375);
        assert!(missing_rate(&SubjectData::new("x")).is_err());
    }

    #[test]
    fn missing_rate_ignores_column_and_row_order() {
        let a = load("date,a,b\n2020-01-01,1,\n2020-01-02,,5\n2020-01-03,3,3\n").unwrap();
        let b = load("date,b,a\n2020-01-03,3,3\n2020-01-02,5,\n2020-01-01,,1\n").unwrap();
        assert_eq!(missing_rate(&a).unwrap(), missing_rate(&b).unwrap());
    }

    #[test]
    fn valid_period_examples() {
        assert_eq!(valid_period(&load("date,a\n2020-01-01,1\n").unwrap()).unwrap(), 0);
        assert_eq!(
            valid_period(&load("date,a\n2020-01-01,1\n2020-01-08,2\n").unwrap()).unwrap(),
            7
        );
        assert!(valid_period(&load("date,a\n").unwrap()).is_err());
    }

    #[test]
    fn variability_examples() {
        let constant = load("date,a\n2020-01-01,5\n2020-01-02,5\n").unwrap();
        assert_eq!(variability(&constant).cv, 0.0);
        assert_eq!(variability(&constant).eligible_metrics, 1);

        let two = load("date,a\n2020-01-01,1\n2020-01-02,3\n").unwrap();
        assert!((variability(&two).cv - 2f64.sqrt() / 2.0).abs() < 1e-15);

        let zero_mean = load("date,a\n2020-01-01,-1\n2020-01-02,1\n").unwrap();
        let v = variability(&zero_mean);
        assert_eq!(v.cv, 0.0);
        assert!(v.no_eligible_metrics());
    }

    #[test]
    fn variability_ignores_all_missing_metric() {
        let a = load("date,a\n2020-01-01,1\n2020-01-02,3\n").unwrap();
        let b = load("date,a,b\n2020-01-01,1,\n2020-01-02,3,\n").unwrap();
        assert_eq!(variability(&a), variability(&b));
    }

    #[test]
    fn pairwise_mi_examples() {
        let one = load("date,a\n2020-01-01,1\n2020-01-02,3\n").unwrap();
        assert_eq!(pairwise_mi(&one, 8, 10).unwrap(), 0.0);

        let mut csv = String::from("date,a,b,c\n");
        for day in 1..=20 {
            let v = day % 2;
            csv.push_str(&format!("2020-01-{day:02},{v},{v},7\n"));
        }
        let s = load(&csv).unwrap();
        // a,b identical over {0,1}: ln 2; pairs with the constant c: 0
        assert!((pairwise_mi(&s, 2, 10).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        // below min_samples everything contributes 0
        assert_eq!(pairwise_mi(&s, 2, 21).unwrap(), 0.0);
    }

    fn subject_with_cv(id: &str, spread: f64) -> SubjectData {
        let points = (0..40)
            .map(|i| {
                let date = d(1) + chrono::Duration::days(i);
                (date, Some(10.0 + if i % 2 == 0 { spread } else { -spread }))
            })
            .collect();
        SubjectData::new(id).with_series("a", MetricSeries::numeric(points).unwrap())
    }

    #[test]
    fn selection_covers_every_decile() {
        let cohort: Vec<SubjectData> =
            (0..10).map(|i| subject_with_cv(&format!("s{i}"), i as f64 * 0.5)).collect();
        let sel = select_participants(&cohort, 10, 3, &SelectionConfig::default()).unwrap();
        assert_eq!(sel.subject_ids.len(), 10);
        assert!(!sel.shortfall);
        let set: BTreeSet<_> = sel.subject_ids.iter().collect();
        assert_eq!(set.len(), 10);

        let sel = select_participants(&cohort, 20, 3, &SelectionConfig::default()).unwrap();
        assert_eq!(sel.subject_ids.len(), 10);
        assert!(sel.shortfall);

        let a = select_participants(&cohort, 4, 9, &SelectionConfig::default()).unwrap();
        let b = select_participants(&cohort, 4, 9, &SelectionConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn selection_filters_short_subjects() {
        let mut cohort = vec![subject_with_cv("long", 1.0)];
        cohort.push(
            SubjectData::new("short")
                .with_series("a", MetricSeries::numeric(vec![(d(1), Some(1.0)), (d(5), Some(2.0))]).unwrap()),
        );
        let sel = select_participants(&cohort, 2, 0, &SelectionConfig::default()).unwrap();
        assert_eq!(sel.subject_ids, vec!["long".to_string()]);
        assert!(sel.shortfall);
    }

    #[test]
    fn csv_round_trip() {
        let s = load("date,hr,mood\n2020-01-01,60.5,ok\n2020-01-02,,\n2020-01-03,62,tired\n").unwrap();
        let mut buf = Vec::new();
        write_subject_csv(&s, &mut buf).unwrap();
        assert_eq!(load_subject_csv(buf.as_slice(), "s1").unwrap(), s);
    }

    #[test]
    fn pairing_joins_on_date() {
        let x = MetricSeries::numeric(vec![(d(1), Some(1.0)), (d(2), None), (d(3), Some(3.0))]).unwrap();
        let y = MetricSeries::numeric(vec![(d(1), Some(10.0)), (d(2), Some(20.0)), (d(4), Some(4.0))]).unwrap();
        assert_eq!(paired_observations(&x, &y).unwrap(), vec![(1.0, 10.0)]);
        let t = MetricSeries::textual(vec![(d(1), Some("a".into()))]).unwrap();
        assert!(paired_observations(&x, &t).is_none());
    }
}
