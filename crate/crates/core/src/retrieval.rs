//! Query-time pipeline: parse, link metrics to nodes, budget neighbors by
//! openness, fuse global and local weights, select, and render the context
//! document.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global::{self, HbmConfig, NeighborWeight};
use crate::graph::{KnowledgeGraph, Node};
use crate::ingestion::SubjectData;
use crate::local::{self, LocalWeight};
use crate::providers::{cosine_similarity, EmbeddingProvider, QueryParserProvider};

/// Windows a parsed query may carry.
pub const VALID_WINDOW_DAYS: [u32; 5] = [1, 7, 14, 30, 60];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "WindowRepr", into = "WindowRepr")]
pub enum Window {
    Days(u32),
    All,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WindowRepr {
    Days(u32),
    Word(String),
}

impl TryFrom<WindowRepr> for Window {
    type Error = String;

    fn try_from(r: WindowRepr) -> std::result::Result<Self, String> {
        match r {
            WindowRepr::Days(0) => Err("window must be positive".into()),
            WindowRepr::Days(d) => Ok(Window::Days(d)),
            WindowRepr::Word(w) if w == "all" => Ok(Window::All),
            WindowRepr::Word(w) => Err(format!("unknown window {w:?}")),
        }
    }
}

impl From<Window> for WindowRepr {
    fn from(w: Window) -> Self {
        match w {
            Window::Days(d) => WindowRepr::Days(d),
            Window::All => WindowRepr::Word("all".into()),
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Days(d) => write!(f, "{d}"),
            Window::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedQuery {
    pub metrics: Vec<String>,
    pub window: Window,
    /// `None` means the subject's most recent day.
    pub reference_time: Option<NaiveDate>,
    pub openness: f64,
}

impl ParsedQuery {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.openness) {
            return Err(Error::Validation(format!("openness {} outside [0,1]", self.openness)));
        }
        if let Window::Days(d) = self.window {
            if !VALID_WINDOW_DAYS.contains(&d) {
                return Err(Error::Validation(format!("unsupported window of {d} days")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub kappa: usize,
    pub beta: f64,
    pub delta: f64,
    pub default_window: Window,
    pub gamma_global: f64,
    pub gamma_local: f64,
    pub alpha_pop: f64,
    pub alpha_ind: f64,
    pub min_samples: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            kappa: 5,
            beta: 0.5,
            delta: 0.85,
            default_window: Window::Days(7),
            gamma_global: global::DEFAULT_GAMMA_GLOBAL,
            gamma_local: local::DEFAULT_GAMMA_LOCAL,
            alpha_pop: 1.0,
            alpha_ind: 1.0,
            min_samples: crate::stats::DEFAULT_MIN_SAMPLES,
        }
    }
}

impl RetrievalConfig {
    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_reader(reader);
        let cfg: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Validation(format!("beta {} outside [0,1]", self.beta)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Validation(format!("delta {} outside (0,1]", self.delta)));
        }
        if !(self.gamma_local > 0.0 && self.gamma_local.is_finite()) {
            return Err(Error::Validation(format!("gamma_local must be positive, got {}", self.gamma_local)));
        }
        self.hbm().validate()
    }

    pub fn hbm(&self) -> HbmConfig {
        HbmConfig {
            alpha_pop: self.alpha_pop,
            alpha_ind: self.alpha_ind,
            min_samples: self.min_samples,
            gamma_global: self.gamma_global,
            ..HbmConfig::default()
        }
    }
}

/// Run the parser provider and check its output.
pub fn parse_query(text: &str, dictionary: &[String], parser: &dyn QueryParserProvider) -> Result<ParsedQuery> {
    if dictionary.is_empty() {
        return Err(Error::arg("parse_query needs a non-empty metric dictionary"));
    }
    let parsed = parser.parse(text, dictionary)?;
    parsed.validate()?;
    Ok(parsed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimaryMatch {
    pub metric: String,
    pub node_id: String,
    pub node_name: String,
    pub similarity: f64,
}

/// Link each query metric to its most similar node, accepted at
/// similarity >= `delta`. Metrics resolving to an already matched node are
/// dropped; unmatched metrics are returned as misses.
pub fn match_entities(
    metrics: &[String],
    graph: &KnowledgeGraph,
    embedder: &dyn EmbeddingProvider,
    delta: f64,
) -> Result<(Vec<PrimaryMatch>, Vec<String>)> {
    let node_vecs: Vec<(&Node, Vec<f64>)> = graph
        .nodes()
        .map(|n| {
            let v = match &n.name_embedding {
                Some(e) => e.clone(),
                None => embedder.embed(&n.name)?,
            };
            Ok((n, v))
        })
        .collect::<Result<_>>()?;

    let mut primaries: Vec<PrimaryMatch> = Vec::new();
    let mut misses = Vec::new();
    for metric in metrics {
        let q = embedder.embed(metric)?;
        let mut best: Option<(f64, &Node)> = None;
        for (node, v) in &node_vecs {
            let sim = cosine_similarity(&q, v)?;
            let better = match best {
                None => true,
                Some((b, bn)) => sim > b || (sim == b && node.name < bn.name),
            };
            if better {
                best = Some((sim, node));
            }
        }
        match best {
            Some((sim, node)) if sim >= delta => {
                if !primaries.iter().any(|p| p.node_id == node.id) {
                    primaries.push(PrimaryMatch {
                        metric: metric.clone(),
                        node_id: node.id.clone(),
                        node_name: node.name.clone(),
                        similarity: sim,
                    });
                }
            }
            _ => misses.push(metric.clone()),
        }
    }
    Ok((primaries, misses))
}

/// Neighbor budget per primary (in primary name order): `round(eta * kappa)`
/// split evenly, with the remainder going one each to the first primaries.
pub fn neighbor_budget(eta: f64, kappa: usize, primary_count: usize) -> Result<Vec<usize>> {
    if primary_count == 0 {
        return Err(Error::arg("neighbor_budget needs at least one primary node"));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::arg(format!("openness {eta} outside [0,1]")));
    }
    let total = ((eta * kappa as f64 + 0.5 + 1e-9).floor() as usize).min(kappa);
    let base = total / primary_count;
    let extra = total % primary_count;
    Ok((0..primary_count).map(|i| base + usize::from(i < extra)).collect())
}

/// `(1 - beta) * w_global + beta * w_local`.
pub fn fuse(w_global: f64, w_local: f64, beta: f64) -> Result<f64> {
    for (name, v) in [("w_global", w_global), ("w_local", w_local), ("beta", beta)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::arg(format!("{name} {v} outside [0,1]")));
        }
    }
    let lo = w_global.min(w_local);
    let hi = w_global.max(w_local);
    Ok(((1.0 - beta) * w_global + beta * w_local).clamp(lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedNeighbor {
    #[serde(flatten)]
    pub global: NeighborWeight,
    pub zeta: f64,
    pub w_short: f64,
    pub w_local: f64,
    pub local_valid: bool,
    pub w_final: f64,
}

/// Selection order: higher w_final, then higher w_global, then name.
pub fn selection_order(a: &SelectedNeighbor, b: &SelectedNeighbor) -> Ordering {
    b.w_final
        .total_cmp(&a.w_final)
        .then(b.global.w_global.total_cmp(&a.global.w_global))
        .then_with(|| a.global.neighbor_name.cmp(&b.global.neighbor_name))
        .then_with(|| a.global.neighbor.cmp(&b.global.neighbor))
}

pub fn select_top(mut candidates: Vec<SelectedNeighbor>, budget: usize) -> Vec<SelectedNeighbor> {
    candidates.sort_by(selection_order);
    candidates.truncate(budget);
    candidates
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimarySelection {
    #[serde(flatten)]
    pub primary: PrimaryMatch,
    pub budget: usize,
    pub neighbors: Vec<SelectedNeighbor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub subject_id: String,
    pub metrics: Vec<String>,
    pub window: Window,
    pub reference_time: Option<NaiveDate>,
    pub openness: f64,
    pub primaries: Vec<PrimarySelection>,
    pub misses: Vec<String>,
    pub no_match: bool,
    pub context: String,
}

/// Fused and ranked candidates for one primary, excluding `exclude` ids.
pub fn score_neighbors(
    graph: &KnowledgeGraph,
    cohort: &[SubjectData],
    subject: &SubjectData,
    primary: &str,
    exclude: &BTreeSet<&str>,
    t: NaiveDate,
    window: Window,
    eta: f64,
    cfg: &RetrievalConfig,
) -> Result<Vec<SelectedNeighbor>> {
    let bundle = global::global_weights_for_node(graph, cohort, subject, primary, &cfg.hbm())?;
    let weights: Vec<NeighborWeight> = bundle
        .neighbors
        .into_iter()
        .filter(|w| !exclude.contains(w.neighbor.as_str()))
        .collect();
    let nodes: Vec<&Node> = weights
        .iter()
        .map(|w| graph.node(&w.neighbor).expect("neighbor ids come from the graph"))
        .collect();
    let locals = local::local_weights_for_node(subject, &nodes, t, window, eta, cfg.gamma_local)?;
    let mut scored = Vec::with_capacity(weights.len());
    for w in weights {
        let LocalWeight {
            zeta,
            w_short,
            w_local,
            valid,
        } = locals[&w.neighbor];
        scored.push(SelectedNeighbor {
            w_final: fuse(w.w_global, w_local, cfg.beta)?,
            global: w,
            zeta,
            w_short,
            w_local,
            local_valid: valid,
        });
    }
    scored.sort_by(selection_order);
    Ok(scored)
}

/// Full retrieval for one parsed query. Never fails for unmatched metrics;
/// a result without primaries is flagged `no_match`.
pub fn retrieve(
    graph: &KnowledgeGraph,
    cohort: &[SubjectData],
    subject: &SubjectData,
    parsed: &ParsedQuery,
    cfg: &RetrievalConfig,
    embedder: &dyn EmbeddingProvider,
) -> Result<RetrievalResult> {
    parsed.validate()?;
    cfg.validate()?;
    let (mut matches, misses) = match_entities(&parsed.metrics, graph, embedder, cfg.delta)?;
    let t = parsed.reference_time.or_else(|| subject.last_date());

    let mut result = RetrievalResult {
        subject_id: subject.subject_id.clone(),
        metrics: parsed.metrics.clone(),
        window: parsed.window,
        reference_time: t,
        openness: parsed.openness,
        primaries: Vec::new(),
        misses,
        no_match: matches.is_empty(),
        context: String::new(),
    };
    if matches.is_empty() {
        return Ok(result);
    }
    let t = t.ok_or_else(|| {
        Error::InsufficientData(format!("subject {} has no dated observations", subject.subject_id))
    })?;

    matches.sort_by(|a, b| a.node_name.cmp(&b.node_name).then_with(|| a.node_id.cmp(&b.node_id)));
    let budgets = neighbor_budget(parsed.openness, cfg.kappa, matches.len())?;
    let primary_ids: BTreeSet<&str> = matches.iter().map(|m| m.node_id.as_str()).collect();
    for (m, budget) in matches.iter().zip(budgets) {
        let scored = score_neighbors(
            graph,
            cohort,
            subject,
            &m.node_id,
            &primary_ids,
            t,
            parsed.window,
            parsed.openness,
            cfg,
        )?;
        result.primaries.push(PrimarySelection {
            primary: m.clone(),
            budget,
            neighbors: select_top(scored, budget),
        });
    }
    result.context = render_context(graph, &result.primaries, subject, t, parsed.window);
    Ok(result)
}

fn node_section(out: &mut String, node: &Node, subject: &SubjectData, t: NaiveDate, window: Window) {
    let _ = writeln!(out, "{}:", node.name);
    if !node.description.is_empty() {
        let _ = writeln!(out, "Description: {}", node.description);
    }
    if let Some(r) = &node.range {
        let _ = writeln!(out, "Range: {r}");
    }
    if let Some(r) = &node.recommendations {
        let _ = writeln!(out, "Recommendations: {r}");
    }
    let series = subject.series_for(node);
    let days = local::window_days(t, window, subject.first_date());
    out.push_str("| date | value |\n| --- | --- |\n");
    for d in &days {
        let v = series.map(|s| s.display_at(*d)).unwrap_or_default();
        let _ = writeln!(out, "| {} | {} |", d.format(crate::ingestion::DATE_FORMAT), v);
    }
    let z = series
        .and_then(|s| local::window_deviation(s, t, window))
        .map(|z| format!("{z:.2}"))
        .unwrap_or_else(|| "nan".into());
    let _ = writeln!(
        out,
        "Recent {}-day value deviates from the individual's average by {z} standard deviations.",
        days.len()
    );
}

/// Plain-text context: every primary section, then the selected neighbors
/// with the relation that links them.
pub fn render_context(
    graph: &KnowledgeGraph,
    primaries: &[PrimarySelection],
    subject: &SubjectData,
    t: NaiveDate,
    window: Window,
) -> String {
    let mut out = String::from("Matched nodes:\n");
    for p in primaries {
        if let Some(node) = graph.node(&p.primary.node_id) {
            out.push('\n');
            node_section(&mut out, node, subject, t, window);
        }
    }
    if primaries.iter().all(|p| p.neighbors.is_empty()) {
        return out;
    }
    out.push_str("\nNodes related to matched nodes which might be helpful:\n");
    for p in primaries {
        for n in &p.neighbors {
            let (Some(node), Some(edge)) = (
                graph.node(&n.global.neighbor),
                graph.edge(&p.primary.node_id, &n.global.neighbor),
            ) else {
                continue;
            };
            let _ = writeln!(out, "\n{} is related to {}: {}", node.name, p.primary.node_name, edge.description);
            node_section(&mut out, node, subject, t, window);
        }
    }
    out
}
