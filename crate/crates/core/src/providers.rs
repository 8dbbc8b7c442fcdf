//! Contracts for the externally intelligent dependencies (embeddings, query
//! parsing, node/edge knowledge and duplicate merging) and deterministic
//! offline stubs for each.
//!
//! Every contract is `Send + Sync`; implementations must be reentrant.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::io::Read;

use chrono::NaiveDate;
use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Category, DataSource, Node, ValueKind};
use crate::retrieval::{ParsedQuery, Window};
use crate::text::{normalize_name, normalize_text};

pub const STUB_EMBEDDING_DIM: usize = 64;

/// Strength the stub assigns to pairs missing from its fixture table.
pub const STUB_DEFAULT_STRENGTH: f64 = 0.5;

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// Unit-norm embedding of `text`.
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

pub trait QueryParserProvider: Send + Sync {
    fn parse(&self, query: &str, dictionary: &[String]) -> Result<ParsedQuery>;
}

/// A metric as it arrives for graph construction or integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub name: String,
    #[serde(default)]
    pub category: Option<Category>,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub range: Option<String>,
    #[serde(default)]
    pub recommendations: Option<String>,
    pub value_kind: ValueKind,
    #[serde(default)]
    pub data_source: Option<DataSource>,
}

impl MetricRecord {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            category: None,
            description: None,
            range: None,
            recommendations: None,
            value_kind: ValueKind::Numeric,
            data_source: None,
        }
    }
}

/// Node content produced by [`KnowledgeProvider::node_gen`], before an id is
/// assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDraft {
    pub name: String,
    pub category: Category,
    pub description: String,
    pub range: Option<String>,
    pub recommendations: Option<String>,
    pub data_source: Option<DataSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDraft {
    pub description: String,
    /// In [0, 1]; pairs below 0.1 are not related.
    pub strength: f64,
    pub from_fixture: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeMatch {
    pub node_id: String,
    /// In [0, 1].
    pub similarity: f64,
}

pub trait KnowledgeProvider: Send + Sync {
    fn node_gen(&self, metric: &MetricRecord) -> Result<NodeDraft>;

    fn edge_gen(&self, a: &NodeDraft, b: &NodeDraft) -> Result<EdgeDraft>;

    /// Decide whether `incoming` duplicates one of `candidates`.
    fn merge(&self, incoming: &MetricRecord, candidates: &[Node]) -> Result<Option<MergeMatch>>;
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::arg(format!(
            "cosine_similarity dimension mismatch ({} vs {})",
            u.len(),
            v.len()
        )));
    }
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::arg("cosine_similarity of a zero vector"));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Hashed character-trigram embedding over normalized text.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubEmbedder;

impl EmbeddingProvider for StubEmbedder {
    fn dim(&self) -> usize {
        STUB_EMBEDDING_DIM
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        stub_embed(text)
    }
}

pub fn stub_embed(text: &str) -> Result<Vec<f64>> {
    let norm = normalize_text(text);
    if norm.is_empty() {
        return Err(Error::arg(format!("cannot embed empty text {text:?}")));
    }
    let padded: Vec<char> = format!(" {norm} ").chars().collect();
    let mut counts = vec![0.0f64; STUB_EMBEDDING_DIM];
    for tri in padded.windows(3) {
        let mut h = FnvHasher::default();
        for c in tri {
            h.write_u32(*c as u32);
        }
        counts[(h.finish() % STUB_EMBEDDING_DIM as u64) as usize] += 1.0;
    }
    let norm2 = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    Ok(counts.into_iter().map(|c| c / norm2).collect())
}

/// Fixture document for [`StubKnowledge`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeFixture {
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    #[serde(default)]
    pub edges: Vec<FixtureEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEdge {
    pub a: String,
    pub b: String,
    pub strength: f64,
    pub description: String,
}

impl KnowledgeFixture {
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_reader(reader);
        let fixture: KnowledgeFixture =
            serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        for e in &fixture.edges {
            if !(0.0..=1.0).contains(&e.strength) {
                return Err(Error::Schema {
                    path: format!("edges[{}-{}].strength", e.a, e.b),
                    message: format!("strength {} outside [0,1]", e.strength),
                });
            }
        }
        Ok(fixture)
    }
}

/// Offline knowledge provider: verbatim node drafts, fixture-or-default edge
/// strengths, and merging on normalized-name equality (after alias lookup).
#[derive(Debug, Clone, Default)]
pub struct StubKnowledge {
    aliases: BTreeMap<String, String>,
    edges: BTreeMap<(String, String), (f64, String)>,
}

pub fn stub_knowledge(fixture: Option<&KnowledgeFixture>) -> StubKnowledge {
    let mut stub = StubKnowledge::default();
    if let Some(f) = fixture {
        for (from, to) in &f.aliases {
            stub.aliases.insert(normalize_name(from), normalize_name(to));
        }
        for e in &f.edges {
            stub.edges.insert(pair_key(&e.a, &e.b), (e.strength, e.description.clone()));
        }
    }
    stub
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    let (a, b) = (normalize_name(a), normalize_name(b));
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl StubKnowledge {
    fn canonical(&self, name: &str) -> String {
        let n = normalize_name(name);
        self.aliases.get(&n).cloned().unwrap_or(n)
    }
}

impl KnowledgeProvider for StubKnowledge {
    fn node_gen(&self, metric: &MetricRecord) -> Result<NodeDraft> {
        Ok(NodeDraft {
            name: metric.name.trim().to_string(),
            category: metric.category.unwrap_or_else(|| guess_category(&metric.name)),
            description: metric.description.clone().unwrap_or_default(),
            range: metric.range.clone(),
            recommendations: metric.recommendations.clone(),
            data_source: metric.data_source.clone(),
        })
    }

    fn edge_gen(&self, a: &NodeDraft, b: &NodeDraft) -> Result<EdgeDraft> {
        if let Some((strength, description)) = self.edges.get(&pair_key(&a.name, &b.name)) {
            return Ok(EdgeDraft {
                description: description.clone(),
                strength: *strength,
                from_fixture: true,
            });
        }
        Ok(EdgeDraft {
            description: format!("{} and {} may influence each other.", a.name, b.name),
            strength: STUB_DEFAULT_STRENGTH,
            from_fixture: false,
        })
    }

    fn merge(&self, incoming: &MetricRecord, candidates: &[Node]) -> Result<Option<MergeMatch>> {
        let target = self.canonical(&incoming.name);
        Ok(candidates
            .iter()
            .find(|c| normalize_name(&c.name) == target)
            .map(|c| MergeMatch {
                node_id: c.id.clone(),
                similarity: 1.0,
            }))
    }
}

/// Keyword heuristic for metrics that arrive without a category.
pub fn guess_category(name: &str) -> Category {
    let n = format!(" {} ", normalize_text(name));
    let has = |keys: &[&str]| keys.iter().any(|k| n.contains(k));
    if has(&[" sleep", "bedtime", "wake", "asleep", "rem ", "circadian", "nap"]) {
        Category::Sleep
    } else if has(&["stress", "mood", "anxiety", "panas", "affect", "depress", "mental", "happi"]) {
        Category::Mental
    } else if has(&["step", "active", "exercise", "distance", "gyration", "walk", "calori", "workout"]) {
        Category::Activity
    } else if has(&["phone", "call", "unlock", "screen", "social", "caffeine", "alcohol", "meal"]) {
        Category::Lifestyle
    } else if has(&["temperature outside", "weather", "noise", "light exposure", "humidity"]) {
        Category::Environmental
    } else if has(&[" age ", "gender", "height", " bmi", " sex "]) {
        Category::Demographic
    } else {
        Category::Physiological
    }
}

/// Query categories and their openness ranges.
pub const QUERY_CATEGORIES: [(&str, f64, f64, bool); 9] = [
    ("General Knowledge", 0.2, 0.4, false),
    ("Data Retrieval", 0.1, 0.3, false),
    ("Trend Analysis", 0.4, 0.6, false),
    ("Comparative Insight", 0.5, 0.7, false),
    ("Anomaly Detection", 0.6, 0.8, false),
    ("Actionable Advice", 0.3, 0.5, false),
    ("Exploratory Analysis", 0.7, 1.0, false),
    ("Metric Relationships", 0.4, 0.6, true),
    ("Contextual Queries", 0.5, 0.7, true),
];

const CATEGORY_CUES: [(&str, &[&str]); 9] = [
    ("General Knowledge", &["what is", "what are", "define", "meaning of", "optimal range"]),
    ("Data Retrieval", &["what was", "how many", "how much", "average", "count"]),
    ("Trend Analysis", &["trend", "trends", "over time", "typically"]),
    ("Comparative Insight", &["compare", "compared", "comparison", "improved", "versus", "vs"]),
    ("Anomaly Detection", &["unusual", "abnormal", "anomaly", "anomalies", "deviation", "deviations", "outlier", "outliers", "spike"]),
    ("Actionable Advice", &["how to", "how can i", "ways to", "should i", "tips"]),
    ("Exploratory Analysis", &["why", "what factors", "causing", "cause", "causes", "explain", "reason"]),
    ("Metric Relationships", &["correlate", "correlation", "relationship", "impact", "influence"]),
    ("Contextual Queries", &["given that", "considering", "feeling"]),
];

const WINDOW_PHRASES: [(&str, Option<u32>); 12] = [
    ("today", Some(1)),
    ("past 7 days", Some(7)),
    ("past week", Some(7)),
    ("this week", Some(7)),
    ("past 14 days", Some(14)),
    ("past two weeks", Some(14)),
    ("past 30 days", Some(30)),
    ("past month", Some(30)),
    ("this month", Some(30)),
    ("past 60 days", Some(60)),
    ("overall", None),
    ("all time", None),
];

/// Deterministic rule-based parser.
///
/// - window: first phrase-table hit in query order, default 7 days;
/// - metrics: longest non-overlapping normalized dictionary matches on word
///   boundaries, in query order;
/// - openness: midpoint of the span covered by the openness ranges of every
///   category whose cue words occur, default 0.5;
/// - reference time: the first ISO date in the query, if any.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubQueryParser;

impl QueryParserProvider for StubQueryParser {
    fn parse(&self, query: &str, dictionary: &[String]) -> Result<ParsedQuery> {
        if dictionary.is_empty() {
            return Err(Error::arg("parse_query needs a non-empty metric dictionary"));
        }
        let text = format!(" {} ", normalize_text(query));

        let window = WINDOW_PHRASES
            .iter()
            .filter_map(|(p, w)| text.find(&format!(" {p} ")).map(|pos| (pos, *w)))
            .min_by_key(|(pos, _)| *pos)
            .map(|(_, w)| match w {
                Some(d) => Window::Days(d),
                None => Window::All,
            })
            .unwrap_or(Window::Days(7));

        let mut candidates: Vec<(usize, usize, &String)> = Vec::new();
        for name in dictionary {
            let needle = normalize_text(name);
            if needle.is_empty() {
                continue;
            }
            let needle = format!(" {needle} ");
            let mut from = 0;
            while let Some(off) = text[from..].find(&needle) {
                let start = from + off;
                candidates.push((start, start + needle.len(), name));
                from = start + 1;
            }
        }
        candidates.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)).then(a.2.cmp(b.2)));
        let mut taken: Vec<(usize, usize, &String)> = Vec::new();
        for c in candidates {
            // needles share their padding spaces with neighbours, hence the +1/-1
            let overlaps = taken.iter().any(|t| c.0 + 1 < t.1 && t.0 + 1 < c.1);
            if !overlaps && !taken.iter().any(|t| t.2 == c.2) {
                taken.push(c);
            }
        }
        taken.sort_by_key(|t| t.0);
        let metrics = taken.into_iter().map(|t| t.2.clone()).collect();

        let mut span: Option<(f64, f64)> = None;
        for (category, cues) in CATEGORY_CUES {
            if cues.iter().any(|c| text.contains(&format!(" {c} "))) {
                let (_, lo, hi, _) = QUERY_CATEGORIES
                    .iter()
                    .find(|c| c.0 == category)
                    .expect("cue table names a known category");
                span = Some(match span {
                    Some((a, b)) => (a.min(*lo), b.max(*hi)),
                    None => (*lo, *hi),
                });
            }
        }
        let openness = span.map(|(lo, hi)| (lo + hi) / 2.0).unwrap_or(0.5);

        let reference_time = query
            .split(|c: char| !(c.is_ascii_digit() || c == '-'))
            .find_map(|tok| NaiveDate::parse_from_str(tok, "%Y-%m-%d").ok());

        Ok(ParsedQuery {
            metrics,
            window,
            reference_time,
            openness,
        })
    }
}
