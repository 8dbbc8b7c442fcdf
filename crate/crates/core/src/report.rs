//! Per-edge weight components for a batch of queries, as CSV.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global::FallbackPath;
use crate::graph::KnowledgeGraph;
use crate::ingestion::SubjectData;
use crate::providers::EmbeddingProvider;
use crate::retrieval::{match_entities, score_neighbors, ParsedQuery, RetrievalConfig};
use crate::stats::squash;

pub const REPORT_COLUMNS: [&str; 12] = [
    "query",
    "primary",
    "neighbor",
    "w_prior",
    "r_pop",
    "r_ind",
    "mu_pop",
    "mu_ind",
    "w_global",
    "w_local",
    "w_final",
    "fallback_path",
];

/// One candidate edge. `mu_pop` and `mu_ind` are the stage posteriors mapped
/// into (0, 1) with the global steepness so every column shares a scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub query: String,
    pub primary: String,
    pub neighbor: String,
    pub w_prior: f64,
    pub r_pop: Option<f64>,
    pub r_ind: Option<f64>,
    pub mu_pop: f64,
    pub mu_ind: f64,
    pub w_global: f64,
    pub w_local: f64,
    pub w_final: f64,
    pub fallback_path: FallbackPath,
}

/// Rows for every candidate neighbor of every matched primary, not only the
/// selected ones.
pub fn weight_report(
    graph: &KnowledgeGraph,
    cohort: &[SubjectData],
    subject: &SubjectData,
    queries: &[(String, ParsedQuery)],
    cfg: &RetrievalConfig,
    embedder: &dyn EmbeddingProvider,
) -> Result<Vec<WeightRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (qid, parsed) in queries {
        parsed.validate()?;
        let (mut primaries, _) = match_entities(&parsed.metrics, graph, embedder, cfg.delta)?;
        if primaries.is_empty() {
            continue;
        }
        let t = parsed.reference_time.or_else(|| subject.last_date()).ok_or_else(|| {
            Error::InsufficientData(format!("subject {} has no dated observations", subject.subject_id))
        })?;
        primaries.sort_by(|a, b| a.node_name.cmp(&b.node_name).then_with(|| a.node_id.cmp(&b.node_id)));
        let exclude: BTreeSet<&str> = primaries.iter().map(|p| p.node_id.as_str()).collect();
        for p in &primaries {
            let scored = score_neighbors(
                graph,
                cohort,
                subject,
                &p.node_id,
                &exclude,
                t,
                parsed.window,
                parsed.openness,
                cfg,
            )?;
            for n in scored {
                let g = n.global;
                rows.push(WeightRow {
                    query: qid.clone(),
                    primary: p.node_id.clone(),
                    neighbor: g.neighbor,
                    w_prior: g.w_prior,
                    r_pop: g.r_pop,
                    r_ind: g.r_ind,
                    mu_pop: squash(g.mu_pop, cfg.gamma_global)?,
                    mu_ind: squash(g.mu_ind, cfg.gamma_global)?,
                    w_global: g.w_global,
                    w_local: n.w_local,
                    w_final: n.w_final,
                    fallback_path: g.fallback_path,
                });
            }
        }
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header-only output for an empty row set.
pub fn write_weight_csv(rows: &[WeightRow], sink: impl Write) -> Result<()> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(REPORT_COLUMNS).map_err(io)?;
    for r in rows {
        w.write_record([
            r.query.clone(),
            r.primary.clone(),
            r.neighbor.clone(),
            r.w_prior.to_string(),
            opt(r.r_pop),
            opt(r.r_ind),
            r.mu_pop.to_string(),
            r.mu_ind.to_string(),
            r.w_global.to_string(),
            r.w_local.to_string(),
            r.w_final.to_string(),
            r.fallback_path.as_str().to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
