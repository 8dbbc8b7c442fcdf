//! Metric knowledge graph: typed nodes, weighted undirected edges,
//! construction from a metric list, incremental integration, neighborhood
//! queries and JSON persistence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::providers::{EdgeDraft, KnowledgeProvider, MetricRecord, NodeDraft};
use crate::text::{normalize_name, slug};

pub const SCHEMA_VERSION: u32 = 1;

/// Edges weaker than this are not stored.
pub const MIN_EDGE_STRENGTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Physiological,
    Sleep,
    Activity,
    Mental,
    Environmental,
    Lifestyle,
    Demographic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Numeric,
    Textual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSource {
    pub dataset: String,
    pub feature: String,
    #[serde(default)]
    pub unit: Option<String>,
    pub value_kind: ValueKind,
    #[serde(default)]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub name: String,
    pub category: Category,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub range: Option<String>,
    #[serde(default)]
    pub recommendations: Option<String>,
    /// Every sensor feature this metric has been linked to.
    #[serde(default)]
    pub data_sources: Vec<DataSource>,
    /// Unit-norm name embedding.
    #[serde(default)]
    pub name_embedding: Option<Vec<f64>>,
    /// Opaque structural embedding; stored, never computed here.
    #[serde(default)]
    pub graph_embedding: Option<Vec<f64>>,
    #[serde(default)]
    pub is_data_associated: bool,
}

impl Node {
    pub fn new(id: impl Into<String>, name: impl Into<String>, category: Category) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            category,
            description: String::new(),
            range: None,
            recommendations: None,
            data_sources: Vec::new(),
            name_embedding: None,
            graph_embedding: None,
            is_data_associated: false,
        }
    }

    fn from_draft(id: String, draft: NodeDraft) -> Self {
        let mut node = Node::new(id, draft.name, draft.category);
        node.description = draft.description;
        node.range = draft.range;
        node.recommendations = draft.recommendations;
        if let Some(src) = draft.data_source {
            node.data_sources.push(src);
            node.is_data_associated = true;
        }
        node
    }

    fn draft(&self) -> NodeDraft {
        NodeDraft {
            name: self.name.clone(),
            category: self.category,
            description: self.description.clone(),
            range: self.range.clone(),
            recommendations: self.recommendations.clone(),
            data_source: self.data_sources.first().cloned(),
        }
    }

    /// Fold sensor-specific fields of a duplicate metric into this node.
    /// Applying the same record twice is a no-op the second time.
    fn absorb(&mut self, draft: NodeDraft) {
        if self.description.is_empty() {
            self.description = draft.description;
        }
        if self.range.is_none() {
            self.range = draft.range;
        }
        if self.recommendations.is_none() {
            self.recommendations = draft.recommendations;
        }
        if let Some(src) = draft.data_source {
            if !self.data_sources.contains(&src) {
                self.data_sources.push(src);
            }
            self.is_data_associated = true;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    LlmGenerated,
    Expert,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Sorted endpoint ids, `endpoints.0 < endpoints.1`.
    pub endpoints: (String, String),
    pub description: String,
    pub prior_weight: f64,
    pub provenance: Provenance,
}

impl Edge {
    pub fn other(&self, id: &str) -> &str {
        if self.endpoints.0 == id {
            &self.endpoints.1
        } else {
            &self.endpoints.0
        }
    }
}

pub fn edge_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationReport {
    /// (incoming metric name, existing node id)
    pub merged: Vec<(String, String)>,
    pub created: Vec<String>,
    pub new_edges: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    pub schema_version: u32,
    nodes: BTreeMap<String, Node>,
    edges: BTreeMap<(String, String), Edge>,
}

impl Default for KnowledgeGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn node_mut(&mut self, id: &str) -> Option<&mut Node> {
        self.nodes.get_mut(id)
    }

    pub fn edge(&self, a: &str, b: &str) -> Option<&Edge> {
        self.edges.get(&edge_key(a, b))
    }

    /// Fill every missing name embedding from `embedder`.
    pub fn embed_names(&mut self, embedder: &dyn crate::providers::EmbeddingProvider) -> Result<()> {
        for node in self.nodes.values_mut() {
            if node.name_embedding.is_none() {
                let e = embedder.embed(&node.name)?;
                check_unit_norm(&e).map_err(|m| Error::arg(format!("node {}: {m}", node.id)))?;
                node.name_embedding = Some(e);
            }
        }
        Ok(())
    }

    pub fn node_by_name(&self, name: &str) -> Option<&Node> {
        let n = normalize_name(name);
        self.nodes.values().find(|node| normalize_name(&node.name) == n)
    }

    pub fn add_node(&mut self, node: Node) -> Result<()> {
        if node.name.trim().is_empty() {
            return Err(Error::arg(format!("node {} has an empty name", node.id)));
        }
        if self.nodes.contains_key(&node.id) {
            return Err(Error::arg(format!("node id {} already present", node.id)));
        }
        if let Some(e) = &node.name_embedding {
            check_unit_norm(e).map_err(|m| Error::arg(format!("node {}: {m}", node.id)))?;
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        a: &str,
        b: &str,
        description: impl Into<String>,
        prior_weight: f64,
        provenance: Provenance,
    ) -> Result<()> {
        if a == b {
            return Err(Error::arg(format!("self-loop on {a}")));
        }
        for id in [a, b] {
            if !self.nodes.contains_key(id) {
                return Err(Error::NotFound(id.to_string()));
            }
        }
        if !(MIN_EDGE_STRENGTH..=1.0).contains(&prior_weight) {
            return Err(Error::arg(format!(
                "edge {a}-{b} prior weight {prior_weight} outside [0.1, 1]"
            )));
        }
        let key = edge_key(a, b);
        self.edges.insert(
            key.clone(),
            Edge {
                endpoints: key,
                description: description.into(),
                prior_weight,
                provenance,
            },
        );
        Ok(())
    }

    /// All nodes sharing an edge with `id`, ordered by name then id.
    pub fn neighborhood(&self, id: &str) -> Result<Vec<(&Node, &Edge)>> {
        if !self.nodes.contains_key(id) {
            return Err(Error::NotFound(id.to_string()));
        }
        let mut out: Vec<(&Node, &Edge)> = self
            .edges
            .values()
            .filter(|e| e.endpoints.0 == id || e.endpoints.1 == id)
            .map(|e| (&self.nodes[e.other(id)], e))
            .collect();
        out.sort_by(|a, b| a.0.name.cmp(&b.0.name).then_with(|| a.0.id.cmp(&b.0.id)));
        Ok(out)
    }

    fn fresh_id(&self, name: &str) -> String {
        let base = match slug(name) {
            s if s.is_empty() => "node".to_string(),
            s => s,
        };
        if !self.nodes.contains_key(&base) {
            return base;
        }
        (2..)
            .map(|i| format!("{base}_{i}"))
            .find(|id| !self.nodes.contains_key(id))
            .expect("unbounded suffix search")
    }

    fn insert_draft(&mut self, draft: NodeDraft) -> String {
        let id = self.fresh_id(&draft.name);
        self.nodes.insert(id.clone(), Node::from_draft(id.clone(), draft));
        id
    }

    fn link(&mut self, a: &str, b: &str, edge: EdgeDraft) -> Result<bool> {
        if edge.strength < MIN_EDGE_STRENGTH {
            return Ok(false);
        }
        let provenance = if edge.from_fixture {
            Provenance::Fixture
        } else {
            Provenance::LlmGenerated
        };
        self.add_edge(a, b, edge.description, edge.strength, provenance)?;
        Ok(true)
    }

    /// Integrate one metric. Either the provider (or exact normalized-name
    /// equality) identifies an existing node, which absorbs the metric's
    /// sensor fields, or a new node is created and linked to every existing
    /// node. The graph is left untouched on error.
    pub fn integrate_metric(
        &mut self,
        metric: &MetricRecord,
        knowledge: &dyn KnowledgeProvider,
    ) -> Result<IntegrationReport> {
        if metric.name.trim().is_empty() {
            return Err(Error::arg("incoming metric has an empty name"));
        }
        let mut work = self.clone();
        let report = work.integrate_in_place(metric, knowledge)?;
        *self = work;
        Ok(report)
    }

    /// Atomic batch form of [`Self::integrate_metric`].
    pub fn integrate_metrics(
        &mut self,
        metrics: &[MetricRecord],
        knowledge: &dyn KnowledgeProvider,
    ) -> Result<IntegrationReport> {
        let mut work = self.clone();
        let mut total = IntegrationReport::default();
        for m in metrics {
            if m.name.trim().is_empty() {
                return Err(Error::arg("incoming metric has an empty name"));
            }
            let r = work.integrate_in_place(m, knowledge)?;
            total.merged.extend(r.merged);
            total.created.extend(r.created);
            total.new_edges += r.new_edges;
        }
        *self = work;
        Ok(total)
    }

    fn integrate_in_place(
        &mut self,
        metric: &MetricRecord,
        knowledge: &dyn KnowledgeProvider,
    ) -> Result<IntegrationReport> {
        let provider_err = |ctx: String| move |e: Error| Error::Provider {
            context: ctx,
            message: e.to_string(),
        };
        let draft = knowledge
            .node_gen(metric)
            .map_err(provider_err(format!("node_gen({})", metric.name)))?;

        let exact = self.node_by_name(&metric.name).map(|n| n.id.clone());
        let matched = match exact {
            Some(id) => Some(id),
            None => {
                let candidates: Vec<Node> = self.nodes.values().cloned().collect();
                let m = knowledge
                    .merge(metric, &candidates)
                    .map_err(provider_err(format!("merge({})", metric.name)))?;
                match m {
                    Some(m) if !(0.0..=1.0).contains(&m.similarity) => {
                        return Err(Error::Provider {
                            context: format!("merge({})", metric.name),
                            message: format!("similarity {} outside [0,1]", m.similarity),
                        })
                    }
                    Some(m) if !self.nodes.contains_key(&m.node_id) => {
                        return Err(Error::Provider {
                            context: format!("merge({})", metric.name),
                            message: format!("matched unknown node {}", m.node_id),
                        })
                    }
                    Some(m) => Some(m.node_id),
                    None => None,
                }
            }
        };

        let mut report = IntegrationReport::default();
        if let Some(id) = matched {
            self.nodes.get_mut(&id).expect("checked above").absorb(draft);
            report.merged.push((metric.name.clone(), id));
            return Ok(report);
        }

        let existing: Vec<(String, NodeDraft)> =
            self.nodes.values().map(|n| (n.id.clone(), n.draft())).collect();
        let new_id = self.insert_draft(draft.clone());
        for (other_id, other) in existing {
            let edge = knowledge
                .edge_gen(&draft, &other)
                .map_err(provider_err(format!("edge_gen({}, {})", draft.name, other.name)))?;
            check_strength(&edge, &draft.name, &other.name)?;
            if self.link(&new_id, &other_id, edge)? {
                report.new_edges += 1;
            }
        }
        report.created.push(new_id);
        Ok(report)
    }

    /// Check every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for (id, n) in &self.nodes {
            if id != &n.id {
                return Err(Error::InvariantViolation(format!("node key {id} != id {}", n.id)));
            }
            if n.name.trim().is_empty() {
                return Err(Error::InvariantViolation(format!("node {id} has an empty name")));
            }
            if !names.insert(normalize_name(&n.name)) {
                return Err(Error::InvariantViolation(format!("duplicate node name {}", n.name)));
            }
            if let Some(e) = &n.name_embedding {
                check_unit_norm(e).map_err(|m| Error::InvariantViolation(format!("node {id}: {m}")))?;
            }
        }
        for (key, e) in &self.edges {
            if key != &e.endpoints || key.0 >= key.1 {
                return Err(Error::InvariantViolation(format!("bad edge key {key:?}")));
            }
            for id in [&key.0, &key.1] {
                if !self.nodes.contains_key(id) {
                    return Err(Error::InvariantViolation(format!("edge endpoint {id} missing")));
                }
            }
            if !(MIN_EDGE_STRENGTH..=1.0).contains(&e.prior_weight) {
                return Err(Error::InvariantViolation(format!(
                    "edge {key:?} weight {} outside [0.1,1]",
                    e.prior_weight
                )));
            }
        }
        Ok(())
    }

    pub fn to_writer(&self, writer: impl Write) -> Result<()> {
        let file = GraphFile {
            schema_version: self.schema_version,
            nodes: self.nodes.values().cloned().collect(),
            edges: self
                .edges
                .values()
                .map(|e| EdgeRecord {
                    endpoints: [e.endpoints.0.clone(), e.endpoints.1.clone()],
                    description: e.description.clone(),
                    prior_weight: e.prior_weight,
                    provenance: e.provenance,
                })
                .collect(),
        };
        serde_json::to_writer_pretty(writer, &file)
            .map_err(|e| Error::Io(std::io::Error::other(e)))
    }

    pub fn from_reader(mut reader: impl Read) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: "$".into(),
            message: e.to_string(),
        })?;
        let version = value.get("schema_version").ok_or_else(|| Error::Schema {
            path: "schema_version".into(),
            message: "missing field".into(),
        })?;
        let found = version.as_i64().ok_or_else(|| Error::Schema {
            path: "schema_version".into(),
            message: format!("expected an integer, found {version}"),
        })?;
        if found != SCHEMA_VERSION as i64 {
            return Err(Error::IncompatibleVersion {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        let file: GraphFile = serde_path_to_error::deserialize(value).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;

        let mut graph = KnowledgeGraph::new();
        for (i, node) in file.nodes.into_iter().enumerate() {
            let id = node.id.clone();
            graph.add_node(node).map_err(|e| Error::Schema {
                path: format!("nodes[{i}]"),
                message: format!("{id}: {e}"),
            })?;
        }
        for (i, e) in file.edges.into_iter().enumerate() {
            let [a, b] = e.endpoints;
            if a >= b {
                return Err(Error::Schema {
                    path: format!("edges[{i}].endpoints"),
                    message: format!("endpoints must be sorted and distinct: [{a}, {b}]"),
                });
            }
            if graph.edges.contains_key(&(a.clone(), b.clone())) {
                return Err(Error::Schema {
                    path: format!("edges[{i}].endpoints"),
                    message: format!("duplicate edge [{a}, {b}]"),
                });
            }
            graph
                .add_edge(&a, &b, e.description, e.prior_weight, e.provenance)
                .map_err(|err| Error::Schema {
                    path: format!("edges[{i}]"),
                    message: err.to_string(),
                })?;
        }
        graph.validate().map_err(|e| Error::Schema {
            path: "$".into(),
            message: e.to_string(),
        })?;
        Ok(graph)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.to_writer(&mut w)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(File::open(path)?)
    }
}

fn check_unit_norm(v: &[f64]) -> std::result::Result<(), String> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        Err(format!("embedding norm {norm} is not 1"))
    } else {
        Ok(())
    }
}

fn check_strength(edge: &EdgeDraft, a: &str, b: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&edge.strength) {
        return Err(Error::Provider {
            context: format!("edge_gen({a}, {b})"),
            message: format!("strength {} outside [0,1]", edge.strength),
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    schema_version: u32,
    nodes: Vec<Node>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    endpoints: [String; 2],
    description: String,
    prior_weight: f64,
    provenance: Provenance,
}

/// Build the general graph: one node per metric, one edge per pair whose
/// provider strength reaches [`MIN_EDGE_STRENGTH`].
pub fn init_general_graph(
    metrics: &[MetricRecord],
    knowledge: &dyn KnowledgeProvider,
) -> Result<KnowledgeGraph> {
    if metrics.is_empty() {
        return Err(Error::arg("init_general_graph needs at least one metric"));
    }
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for m in metrics {
        *seen.entry(normalize_name(&m.name)).or_default() += 1;
    }
    if seen.contains_key("") {
        return Err(Error::arg("metric with an empty name"));
    }
    let dups: Vec<String> = seen.into_iter().filter(|(_, c)| *c > 1).map(|(n, _)| n).collect();
    if !dups.is_empty() {
        return Err(Error::DuplicateNames(dups));
    }

    let mut graph = KnowledgeGraph::new();
    let mut drafts: Vec<(String, NodeDraft)> = Vec::with_capacity(metrics.len());
    for m in metrics {
        let draft = knowledge.node_gen(m).map_err(|e| Error::Provider {
            context: format!("node_gen({})", m.name),
            message: e.to_string(),
        })?;
        let id = graph.insert_draft(draft.clone());
        drafts.push((id, draft));
    }
    for i in 0..drafts.len() {
        for j in (i + 1)..drafts.len() {
            let (ia, a) = &drafts[i];
            let (ib, b) = &drafts[j];
            let edge = knowledge.edge_gen(a, b).map_err(|e| Error::Provider {
                context: format!("edge_gen({}, {})", a.name, b.name),
                message: e.to_string(),
            })?;
            check_strength(&edge, &a.name, &b.name)?;
            graph.link(ia, ib, edge)?;
        }
    }
    Ok(graph)
}

/// [`init_general_graph`] from bare metric names.
pub fn init_general_graph_from_names(
    names: &[&str],
    knowledge: &dyn KnowledgeProvider,
) -> Result<KnowledgeGraph> {
    let records: Vec<MetricRecord> = names.iter().map(|n| MetricRecord::named(*n)).collect();
    init_general_graph(&records, knowledge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{stub_knowledge, stub_embed, MergeMatch};

    struct ConstKnowledge(f64);

    impl KnowledgeProvider for ConstKnowledge {
        fn node_gen(&self, m: &MetricRecord) -> Result<NodeDraft> {
            stub_knowledge(None).node_gen(m)
        }
        fn edge_gen(&self, _: &NodeDraft, _: &NodeDraft) -> Result<EdgeDraft> {
            Ok(EdgeDraft {
                description: "c".into(),
                strength: self.0,
                from_fixture: false,
            })
        }
        fn merge(&self, _: &MetricRecord, _: &[Node]) -> Result<Option<MergeMatch>> {
            Ok(None)
        }
    }

    struct FailingEdges;

    impl KnowledgeProvider for FailingEdges {
        fn node_gen(&self, m: &MetricRecord) -> Result<NodeDraft> {
            stub_knowledge(None).node_gen(m)
        }
        fn edge_gen(&self, a: &NodeDraft, b: &NodeDraft) -> Result<EdgeDraft> {
            if b.name == "Mood" || a.name == "Mood" {
                Err(Error::arg("service unavailable"))
            } else {
                stub_knowledge(None).edge_gen(a, b)
            }
        }
        fn merge(&self, _: &MetricRecord, _: &[Node]) -> Result<Option<MergeMatch>> {
            Ok(None)
        }
    }

    /// Reports "steps" as the same concept as "Steps taken" with graded similarity.
    struct GradedMerge;

    impl KnowledgeProvider for GradedMerge {
        fn node_gen(&self, m: &MetricRecord) -> Result<NodeDraft> {
            stub_knowledge(None).node_gen(m)
        }
        fn edge_gen(&self, a: &NodeDraft, b: &NodeDraft) -> Result<EdgeDraft> {
            stub_knowledge(None).edge_gen(a, b)
        }
        fn merge(&self, m: &MetricRecord, c: &[Node]) -> Result<Option<MergeMatch>> {
            Ok(if m.name == "steps" {
                c.iter().find(|n| n.name == "Steps taken").map(|n| MergeMatch {
                    node_id: n.id.clone(),
                    similarity: 0.95,
                })
            } else {
                None
            })
        }
    }

    fn three() -> KnowledgeGraph {
        init_general_graph_from_names(&["Steps taken", "Sleep efficiency", "Mood"], &stub_knowledge(None))
            .unwrap()
    }

    #[test]
    fn single_metric_has_no_edges() {
        let g = init_general_graph_from_names(&["Heart rate"], &stub_knowledge(None)).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
    }

    #[test]
    fn three_metrics_form_a_triangle() {
        let g = three();
        assert_eq!((g.node_count(), g.edge_count()), (3, 3));
        assert!(g.edges().all(|e| e.prior_weight == 0.5));
        g.validate().unwrap();
    }

    #[test]
    fn weak_pairs_are_dropped() {
        let g = init_general_graph_from_names(&["A", "B", "C"], &ConstKnowledge(0.05)).unwrap();
        assert_eq!(g.edge_count(), 0);
        let g = init_general_graph_from_names(&["A", "B", "C"], &ConstKnowledge(0.1)).unwrap();
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = init_general_graph_from_names(&["Heart rate", "heart  RATE", "Mood"], &stub_knowledge(None))
            .unwrap_err();
        match err {
            Error::DuplicateNames(d) => assert_eq!(d, vec!["heart rate".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn provider_failure_names_the_pair() {
        let err = init_general_graph_from_names(&["Steps taken", "Mood"], &FailingEdges).unwrap_err();
        match err {
            Error::Provider { context, .. } => assert_eq!(context, "edge_gen(Steps taken, Mood)"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn graded_merge_updates_existing_node() {
        let mut g = three();
        let mut rec = MetricRecord::named("steps");
        rec.data_source = Some(DataSource {
            dataset: "watch".into(),
            feature: "steps".into(),
            unit: Some("count".into()),
            value_kind: ValueKind::Numeric,
            path: None,
        });
        let report = g.integrate_metric(&rec, &GradedMerge).unwrap();
        assert_eq!(report.merged, vec![("steps".to_string(), "steps_taken".to_string())]);
        assert!(report.created.is_empty());
        assert_eq!(g.node_count(), 3);
        let n = g.node("steps_taken").unwrap();
        assert!(n.is_data_associated);
        assert_eq!(n.data_sources.len(), 1);
    }

    #[test]
    fn exact_duplicate_merges_and_is_idempotent() {
        let mut g = three();
        let mut rec = MetricRecord::named("sleep   Efficiency");
        rec.range = Some("85-95%".into());
        let r = g.integrate_metric(&rec, &stub_knowledge(None)).unwrap();
        assert_eq!(r.merged.len(), 1);
        let once = g.clone();
        g.integrate_metric(&rec, &stub_knowledge(None)).unwrap();
        assert_eq!(g, once);
        assert_eq!(g.node_count(), 3);
    }

    #[test]
    fn new_metric_joins_every_node() {
        let mut g = three();
        let r = g.integrate_metric(&MetricRecord::named("Heart rate"), &stub_knowledge(None)).unwrap();
        assert_eq!(r.created, vec!["heart_rate".to_string()]);
        assert_eq!(r.new_edges, 3);
        assert_eq!((g.node_count(), g.edge_count()), (4, 6));
    }

    #[test]
    fn failed_integration_leaves_graph_untouched() {
        let mut g = init_general_graph_from_names(&["Steps taken", "Sleep efficiency"], &stub_knowledge(None))
            .unwrap();
        let before = g.clone();
        assert!(g.integrate_metric(&MetricRecord::named("Mood"), &FailingEdges).is_err());
        assert_eq!(g, before);
    }

    #[test]
    fn neighborhood_contract() {
        let mut g = three();
        g.add_node(Node::new("lonely", "Lonely", Category::Mental)).unwrap();
        assert!(g.neighborhood("lonely").unwrap().is_empty());
        let nb = g.neighborhood("mood").unwrap();
        let names: Vec<&str> = nb.iter().map(|(n, _)| n.name.as_str()).collect();
        assert_eq!(names, vec!["Sleep efficiency", "Steps taken"]);
        match g.neighborhood("nope") {
            Err(Error::NotFound(id)) => assert_eq!(id, "nope"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn neighborhood_is_symmetric() {
        let g = init_general_graph_from_names(&["A", "B", "C", "D", "E"], &stub_knowledge(None)).unwrap();
        for x in g.nodes() {
            for (y, _) in g.neighborhood(&x.id).unwrap() {
                assert!(g.neighborhood(&y.id).unwrap().iter().any(|(z, _)| z.id == x.id));
            }
        }
    }

    #[test]
    fn round_trip_empty_and_unicode() {
        let g = KnowledgeGraph::new();
        let mut buf = Vec::new();
        g.to_writer(&mut buf).unwrap();
        assert_eq!(KnowledgeGraph::from_reader(buf.as_slice()).unwrap(), g);

        let mut g = init_general_graph_from_names(&["Schlafeffizienz ü", "心拍数", "Humeur été"], &stub_knowledge(None))
            .unwrap();
        let ids: Vec<String> = g.nodes().map(|n| n.id.clone()).collect();
        for id in &ids {
            let name = g.node(id).unwrap().name.clone();
            g.node_mut(id).unwrap().name_embedding = Some(stub_embed(&name).unwrap());
        }
        let mut buf = Vec::new();
        g.to_writer(&mut buf).unwrap();
        assert_eq!(KnowledgeGraph::from_reader(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn truncated_document_is_a_schema_error() {
        let mut buf = Vec::new();
        three().to_writer(&mut buf).unwrap();
        buf.truncate(buf.len() / 2);
        assert!(matches!(KnowledgeGraph::from_reader(buf.as_slice()), Err(Error::Schema { .. })));
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let doc = r#"{"schema_version": 99, "nodes": [], "edges": []}"#;
        assert!(matches!(
            KnowledgeGraph::from_reader(doc.as_bytes()),
            Err(Error::IncompatibleVersion { found: 99, .. })
        ));
    }

    #[test]
    fn schema_error_names_the_path() {
        let doc = r#"{"schema_version": 1, "nodes": [{"id": "a", "name": "A", "category": "Cosmic"}], "edges": []}"#;
        match KnowledgeGraph::from_reader(doc.as_bytes()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "nodes[0].category"),
            other => panic!("{other:?}"),
        }
        let doc = r#"{"schema_version": 1, "nodes": [{"id": "a", "name": "A", "category": "Sleep"}],
                      "edges": [{"endpoints": ["a", "b"], "description": "", "prior_weight": 0.5, "provenance": "expert"}]}"#;
        match KnowledgeGraph::from_reader(doc.as_bytes()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "edges[0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsorted_edge_key_rejected() {
        let doc = r#"{"schema_version": 1,
            "nodes": [{"id": "a", "name": "A", "category": "Sleep"}, {"id": "b", "name": "B", "category": "Sleep"}],
            "edges": [{"endpoints": ["b", "a"], "description": "", "prior_weight": 0.5, "provenance": "expert"}]}"#;
        assert!(matches!(KnowledgeGraph::from_reader(doc.as_bytes()), Err(Error::Schema { .. })));
    }

    #[test]
    fn edge_weight_bounds_enforced() {
        let mut g = three();
        assert!(g.add_edge("mood", "steps_taken", "x", 0.05, Provenance::Expert).is_err());
        assert!(g.add_edge("mood", "steps_taken", "x", 1.2, Provenance::Expert).is_err());
        assert!(g.add_edge("mood", "ghost", "x", 0.5, Provenance::Expert).is_err());
    }
}
