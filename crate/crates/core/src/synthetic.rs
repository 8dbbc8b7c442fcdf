//! Seeded synthetic inputs: a 52-metric wearable catalogue, a matching
//! knowledge fixture, a cohort generator and a rank-reversal calibration
//! fixture.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::calibration::{find_intersection, tau_curves, Stage};
use crate::error::Result;
use crate::global::{hbm_posterior, GaussianBelief, HbmConfig, NodeEvidence, Observation};
use crate::graph::{Category, DataSource, ValueKind};
use crate::ingestion::{MetricSeries, SubjectData};
use crate::providers::{FixtureEdge, KnowledgeFixture, MetricRecord};
use crate::stats;

use Category::*;

const CATALOGUE: [(&str, Category, &str, bool); 52] = [
    ("Circadian rhythm patterns", Sleep, "index", true),
    ("Sleep efficiency", Sleep, "%", true),
    ("Asleep duration", Sleep, "min", true),
    ("Total sleep duration", Sleep, "min", true),
    ("Wake after sleep onset", Sleep, "min", true),
    ("Time after wakeup", Sleep, "min", true),
    ("Time in bed", Sleep, "min", true),
    ("Sleep onset latency", Sleep, "min", true),
    ("Number of awakenings", Sleep, "count", true),
    ("REM sleep duration", Sleep, "min", true),
    ("Deep sleep duration", Sleep, "min", true),
    ("Bedtime", Sleep, "h", true),
    ("Wake time", Sleep, "h", true),
    ("Steps taken", Activity, "steps", true),
    ("Active time", Activity, "min", true),
    ("Sedentary time", Activity, "min", true),
    ("Calories burned", Activity, "kcal", true),
    ("Distance travelled", Activity, "km", true),
    ("Floors climbed", Activity, "floors", true),
    ("Moderate activity minutes", Activity, "min", true),
    ("Vigorous activity minutes", Activity, "min", true),
    ("Heart rate", Physiological, "bpm", true),
    ("Resting heart rate", Physiological, "bpm", true),
    ("Heart rate variability", Physiological, "ms", true),
    ("Respiratory rate", Physiological, "breaths/min", true),
    ("Skin temperature", Physiological, "C", true),
    ("Blood oxygen saturation", Physiological, "%", true),
    ("Body weight", Physiological, "kg", true),
    ("Mental stress", Mental, "score", true),
    ("Anxiety", Mental, "score", true),
    ("PANAS positive affect", Mental, "score", true),
    ("PANAS negative affect", Mental, "score", true),
    ("Depression score", Mental, "score", true),
    ("Fatigue level", Mental, "score", true),
    ("Mood", Mental, "", false),
    ("Maximum distance from home", Environmental, "km", true),
    ("The Radius of Gyration", Environmental, "km", true),
    ("Time at home", Environmental, "h", true),
    ("Number of visited locations", Environmental, "count", true),
    ("Location entropy", Environmental, "nats", true),
    ("Ambient light exposure", Environmental, "lux", true),
    ("Ambient noise level", Environmental, "dB", true),
    ("Number of phone unlock", Lifestyle, "count", true),
    ("Duration of phone unlock", Lifestyle, "min", true),
    ("Number of calls", Lifestyle, "count", true),
    ("Entropy of call duration", Lifestyle, "nats", true),
    ("Screen time", Lifestyle, "min", true),
    ("Caffeine intake", Lifestyle, "mg", true),
    ("Alcohol intake", Lifestyle, "drinks", true),
    ("Daily diary", Lifestyle, "", false),
    ("Age", Demographic, "years", true),
    ("Height", Demographic, "cm", true),
];

pub const SYNTHETIC_DATASET: &str = "synthetic";

/// 52 wearable metrics with categories and units.
pub fn metric_catalogue() -> Vec<MetricRecord> {
    CATALOGUE
        .iter()
        .map(|(name, category, unit, numeric)| {
            let value_kind = if *numeric { ValueKind::Numeric } else { ValueKind::Textual };
            MetricRecord {
                name: name.to_string(),
                category: Some(*category),
                description: Some(format!("Daily {} recorded by a wearable or phone.", name.to_lowercase())),
                range: numeric.then(|| format!("Typical personal range in {unit}.")),
                recommendations: None,
                value_kind,
                data_source: Some(DataSource {
                    dataset: SYNTHETIC_DATASET.into(),
                    feature: name.to_string(),
                    unit: (!unit.is_empty()).then(|| unit.to_string()),
                    value_kind,
                    path: None,
                }),
            }
        })
        .collect()
}

/// Seeded pairwise strengths for the catalogue. Same-category pairs are
/// stronger on average; roughly a fifth of cross-category pairs fall below
/// the relatedness cut.
pub fn synthetic_knowledge(metrics: &[MetricRecord], seed: u64) -> KnowledgeFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..metrics.len() {
        for j in (i + 1)..metrics.len() {
            let (a, b) = (&metrics[i], &metrics[j]);
            let strength: f64 = if a.category == b.category {
                rng.random_range(0.4..1.0)
            } else {
                rng.random_range(0.0..0.7)
            };
            let strength = (strength * 100.0).round() / 100.0;
            edges.push(FixtureEdge {
                a: a.name.clone(),
                b: b.name.clone(),
                strength,
                description: format!("{} tends to move with {}.", a.name, b.name),
            });
        }
    }
    KnowledgeFixture {
        aliases: Default::default(),
        edges,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortSpec {
    pub subjects: usize,
    pub days: usize,
    pub start: NaiveDate,
    /// Probability that a single numeric observation is missing.
    pub missing_rate: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            subjects: 10,
            days: 60,
            start: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            missing_rate: 0.05,
        }
    }
}

const MOODS: [&str; 5] = ["calm", "tired", "energetic", "stressed", "content"];

/// Subjects whose numeric metrics load on three shared daily factors plus
/// noise, so pairs of metrics are correlated to varying degrees.
pub fn synthetic_cohort(metrics: &[MetricRecord], spec: &CohortSpec, seed: u64) -> Vec<SubjectData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let loadings: Vec<[f64; 3]> = metrics
        .iter()
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let bases: Vec<f64> = metrics.iter().map(|_| rng.random_range(5.0..100.0)).collect();

    (0..spec.subjects)
        .map(|s| {
            let mut subject = SubjectData::new(format!("subject_{s:02}"));
            let factors: Vec<[f64; 3]> = (0..spec.days)
                .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)])
                .collect();
            let offset: f64 = rng.random_range(0.8..1.2);
            for (m, metric) in metrics.iter().enumerate() {
                let date = |d: usize| spec.start + Duration::days(d as i64);
                let series = match metric.value_kind {
                    ValueKind::Numeric => {
                        let scale = bases[m] * 0.1;
                        let points = factors
                            .iter()
                            .enumerate()
                            .map(|(d, f)| {
                                let latent: f64 = (0..3).map(|k| loadings[m][k] * f[k]).sum();
                                let v = bases[m] * offset + scale * (latent + 0.5 * normal.sample(&mut rng));
                                let missing = rng.random_bool(spec.missing_rate);
                                (date(d), (!missing).then_some((v * 100.0).round() / 100.0))
                            })
                            .collect();
                        MetricSeries::numeric(points)
                    }
                    ValueKind::Textual => {
                        let points = (0..spec.days)
                            .map(|d| {
                                let present = rng.random_bool(0.5);
                                let mood = MOODS[rng.random_range(0..MOODS.len())].to_string();
                                (date(d), present.then_some(mood))
                            })
                            .collect();
                        MetricSeries::textual(points)
                    }
                };
                subject.series.insert(metric.name.clone(), series.expect("generated dates are unique"));
            }
            subject
        })
        .collect()
}

/// Calibration fixture in which every node's prior ranking is the exact
/// reverse of its population correlations, and the individual correlations
/// reverse the population posterior at the population-stage crossing on
/// `grid`. Variances are equal within a node, so each pair of neighbors
/// swaps order at most once as alpha grows.
pub fn adversarial_cases(nodes: usize, neighbors: usize, seed: u64) -> Vec<NodeEvidence> {
    adversarial_cases_on(nodes, neighbors, seed, &crate::calibration::default_grid())
        .expect("fixture construction on a valid grid")
}

pub fn adversarial_cases_on(nodes: usize, neighbors: usize, seed: u64, grid: &[f64]) -> Result<Vec<NodeEvidence>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = HbmConfig::default();
    let n_pop = 200usize;
    let v_pop = 1.0 / (n_pop as f64 - 3.0);
    let spread = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<f64> {
        let step = (hi - lo) / neighbors.max(2).saturating_sub(1) as f64;
        (0..neighbors)
            .map(|j| lo + step * j as f64 + rng.random_range(-0.3..0.3) * step)
            .collect()
    };

    let mut cases: Vec<NodeEvidence> = (0..nodes)
        .map(|x| {
            let prior_mean = spread(&mut rng, -1.0, 1.0);
            let mut z_pop = spread(&mut rng, 0.2, 2.0);
            z_pop.reverse();
            let ids: Vec<(String, String)> = (0..neighbors)
                .map(|j| (format!("n{x:02}_{j:02}"), format!("Neighbor {j:02} of node {x:02}")))
                .collect();
            NodeEvidence {
                primary: format!("node_{x:02}"),
                w_prior: prior_mean
                    .iter()
                    .map(|m| stats::squash(*m, cfg.gamma_global).expect("finite"))
                    .collect(),
                neighbors: ids,
                prior: GaussianBelief {
                    mean: prior_mean,
                    var: vec![v_pop; neighbors],
                },
                pop: Observation {
                    r: z_pop.iter().map(|z| Some(z.tanh())).collect(),
                    value: z_pop,
                    var: vec![v_pop; neighbors],
                    valid: vec![true; neighbors],
                    n: vec![n_pop; neighbors],
                },
                ind: Observation::absent(neighbors),
            }
        })
        .collect();

    let (p, a) = tau_curves(Stage::Population, &cases, grid, &cfg)?;
    let alpha_pop = find_intersection(&p, &a)?.unwrap_or(1.0);
    let frozen = HbmConfig { alpha_pop, ..cfg };
    for case in &mut cases {
        let (pop, _) = hbm_posterior(&case.prior, &case.pop, &case.ind, &frozen)?;
        let mut order: Vec<usize> = (0..neighbors).collect();
        order.sort_by(|&i, &j| pop.mean[i].total_cmp(&pop.mean[j]));
        let sorted: Vec<f64> = order.iter().map(|&i| pop.mean[i]).collect();
        let min_gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let jitter = if min_gap.is_finite() { 0.2 * min_gap } else { 0.0 };
        let mut z_ind = vec![0.0; neighbors];
        for (rank, &i) in order.iter().enumerate() {
            z_ind[i] = sorted[neighbors - 1 - rank] + rng.random_range(-1.0..1.0) * jitter;
        }
        case.ind = Observation {
            r: z_ind.iter().map(|z| Some(z.tanh())).collect(),
            value: z_ind,
            var: pop.var.clone(),
            valid: vec![true; neighbors],
            n: pop.var.iter().map(|v| (1.0 / v).round() as usize + 3).collect(),
        };
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn catalogue_has_unique_names() {
        let c = metric_catalogue();
        assert_eq!(c.len(), 52);
        let names: BTreeSet<_> = c.iter().map(|m| crate::text::normalize_name(&m.name)).collect();
        assert_eq!(names.len(), 52);
    }

    #[test]
    fn cohort_is_seeded() {
        let c = metric_catalogue();
        let spec = CohortSpec {
            subjects: 2,
            days: 20,
            ..CohortSpec::default()
        };
        let a = synthetic_cohort(&c, &spec, 5);
        assert_eq!(a, synthetic_cohort(&c, &spec, 5));
        assert_ne!(a, synthetic_cohort(&c, &spec, 6));
        assert_eq!(a[0].series.len(), 52);
        assert_eq!(a[0].get("Mood").unwrap().kind(), ValueKind::Textual);
    }

    #[test]
    fn knowledge_strengths_are_in_range() {
        let c = metric_catalogue();
        let k = synthetic_knowledge(&c, 1);
        assert_eq!(k.edges.len(), 52 * 51 / 2);
        assert!(k.edges.iter().all(|e| (0.0..=1.0).contains(&e.strength)));
    }

    #[test]
    fn adversarial_rankings_are_reversed() {
        for case in adversarial_cases(3, 6, 2) {
            let tau = crate::stats::kendall_tau(&case.prior.mean, &case.pop.value).unwrap();
            assert_eq!(tau, -1.0);
        }
    }
}
