//! Long-term edge weights: a two-stage Gaussian update on the Fisher-z
//! scale (prior, then population, then individual evidence) with a
//! per-neighbor fallback ladder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Node, ValueKind};
use crate::ingestion::{paired_observations, SubjectData};
use crate::stats::{self, CorrelationEstimate};

pub const DEFAULT_GAMMA_GLOBAL: f64 = 0.9;

/// Prior variance on the z-scale for neighbors without population evidence.
pub const DEFAULT_PRIOR_VAR: f64 = 1.0;

/// Prior weights are clamped this far from {0, 1} before the logit.
const LOGIT_EPSILON: f64 = 1e-6;

/// Independent (diagonal) Gaussian beliefs, one entry per neighbor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianBelief {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.mean.len() != self.var.len() {
            return Err(Error::arg(format!("{what}: mean/var dimensions differ")));
        }
        if let Some(i) = self.var.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::arg(format!("{what}: variance {} at index {i} is not positive", self.var[i])));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::arg(format!("{what}: non-finite mean")));
        }
        Ok(())
    }
}

/// Correlation evidence per neighbor on the z-scale. Entries with
/// `valid[i] == false` carry no information and are skipped by the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub value: Vec<f64>,
    pub var: Vec<f64>,
    pub valid: Vec<bool>,
    pub n: Vec<usize>,
    /// |spearman| when valid.
    pub r: Vec<Option<f64>>,
}

impl Observation {
    pub fn absent(len: usize) -> Self {
        Self {
            value: vec![0.0; len],
            var: vec![1.0; len],
            valid: vec![false; len],
            n: vec![0; len],
            r: vec![None; len],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    fn check(&self, what: &str, len: usize) -> Result<()> {
        let lens = [self.value.len(), self.var.len(), self.valid.len(), self.n.len(), self.r.len()];
        if lens.iter().any(|l| *l != len) {
            return Err(Error::arg(format!("{what}: dimension mismatch, expected {len}, got {lens:?}")));
        }
        for i in 0..len {
            if self.valid[i] && !(self.var[i] > 0.0 && self.var[i].is_finite() && self.value[i].is_finite()) {
                return Err(Error::arg(format!(
                    "{what}: valid entry {i} has variance {} and value {}",
                    self.var[i], self.value[i]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbmConfig {
    pub alpha_pop: f64,
    pub alpha_ind: f64,
    pub min_samples: usize,
    pub gamma_global: f64,
    pub default_prior_var: f64,
}

impl Default for HbmConfig {
    fn default() -> Self {
        Self {
            alpha_pop: 1.0,
            alpha_ind: 1.0,
            min_samples: stats::DEFAULT_MIN_SAMPLES,
            gamma_global: DEFAULT_GAMMA_GLOBAL,
            default_prior_var: DEFAULT_PRIOR_VAR,
        }
    }
}

impl HbmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_pop", self.alpha_pop),
            ("alpha_ind", self.alpha_ind),
            ("gamma_global", self.gamma_global),
            ("default_prior_var", self.default_prior_var),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.min_samples == 0 {
            return Err(Error::Validation("min_samples must be positive".into()));
        }
        Ok(())
    }
}

/// Prior weight mapped onto the z-scale so that `squash(gamma * z) == w`.
pub fn prior_z(w_prior: f64, gamma_global: f64) -> Result<f64> {
    let w = w_prior.clamp(LOGIT_EPSILON, 1.0 - LOGIT_EPSILON);
    stats::unsquash(w, gamma_global)
}

/// Prior belief over the edges `(x, y)` for each `y` in `neighbors`.
pub fn prior_belief(
    graph: &KnowledgeGraph,
    x: &str,
    neighbors: &[&str],
    gamma_global: f64,
    prior_var: &[f64],
) -> Result<GaussianBelief> {
    if prior_var.len() != neighbors.len() {
        return Err(Error::arg("prior_belief: one prior variance per neighbor required"));
    }
    let mean = neighbors
        .iter()
        .map(|y| {
            let edge = graph
                .edge(x, y)
                .ok_or_else(|| Error::InvariantViolation(format!("no edge between {x} and {y}")))?;
            prior_z(edge.prior_weight, gamma_global)
        })
        .collect::<Result<Vec<_>>>()?;
    let belief = GaussianBelief {
        mean,
        var: prior_var.to_vec(),
    };
    belief.check("prior")?;
    Ok(belief)
}

/// Correlation evidence from paired observations per neighbor. `None` marks
/// a neighbor without numeric data.
pub fn empirical_relationships(pairs: &[Option<Vec<(f64, f64)>>], min_samples: usize) -> Observation {
    let mut obs = Observation::absent(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let Some(p) = p else { continue };
        let est: CorrelationEstimate = stats::spearman(p, min_samples);
        obs.n[i] = est.n;
        let (Some(r), true) = (est.r, est.n > 3) else {
            continue;
        };
        let r = r.abs();
        obs.r[i] = Some(r);
        obs.value[i] = stats::fisher_z(r).expect("finite correlation");
        obs.var[i] = 1.0 / (est.n as f64 - 3.0);
        obs.valid[i] = true;
    }
    obs
}

fn update(belief: &GaussianBelief, obs: &Observation, alpha: f64) -> GaussianBelief {
    let mut out = belief.clone();
    for i in 0..belief.len() {
        if !obs.valid[i] {
            continue;
        }
        let prior_prec = 1.0 / belief.var[i];
        let obs_prec = alpha / obs.var[i];
        let var = 1.0 / (prior_prec + obs_prec);
        out.var[i] = var;
        out.mean[i] = var * (belief.mean[i] * prior_prec + obs.value[i] * obs_prec);
    }
    out
}

/// Stage 1 updates the prior with population evidence, stage 2 updates that
/// result with individual evidence. The effective observation variance at
/// each stage is V / alpha.
pub fn hbm_posterior(
    prior: &GaussianBelief,
    pop: &Observation,
    ind: &Observation,
    cfg: &HbmConfig,
) -> Result<(GaussianBelief, GaussianBelief)> {
    prior.check("prior")?;
    pop.check("population evidence", prior.len())?;
    ind.check("individual evidence", prior.len())?;
    for (name, a) in [("alpha_pop", cfg.alpha_pop), ("alpha_ind", cfg.alpha_ind)] {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::arg(format!("{name} must be positive and finite, got {a}")));
        }
    }
    let pop_belief = update(prior, pop, cfg.alpha_pop);
    let ind_belief = update(&pop_belief, ind, cfg.alpha_ind);
    Ok((pop_belief, ind_belief))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FallbackPath {
    Individual,
    Population,
    Prior,
}

impl FallbackPath {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Individual => "individual",
            Self::Population => "population",
            Self::Prior => "prior",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborWeight {
    pub neighbor: String,
    pub neighbor_name: String,
    pub w_prior: f64,
    pub z_prior: f64,
    pub prior_var: f64,
    pub r_pop: Option<f64>,
    pub n_pop: usize,
    pub r_ind: Option<f64>,
    pub n_ind: usize,
    /// Posterior means on the z-scale after each stage.
    pub mu_pop: f64,
    pub mu_ind: f64,
    pub w_global: f64,
    pub fallback_path: FallbackPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeightBundle {
    pub primary: String,
    pub neighbors: Vec<NeighborWeight>,
}

/// Evidence assembled for one primary node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEvidence {
    pub primary: String,
    pub neighbors: Vec<(String, String)>,
    pub w_prior: Vec<f64>,
    pub prior: GaussianBelief,
    pub pop: Observation,
    pub ind: Observation,
}

fn subject_pairs(subject: &SubjectData, x: &Node, y: &Node) -> Option<Vec<(f64, f64)>> {
    let sx = subject.series_for(x)?;
    let sy = subject.series_for(y)?;
    if sx.kind() != ValueKind::Numeric || sy.kind() != ValueKind::Numeric {
        return None;
    }
    paired_observations(sx, sy)
}

/// Concatenation of every cohort member's paired observations.
pub fn pooled_pairs(cohort: &[SubjectData], x: &Node, y: &Node) -> Option<Vec<(f64, f64)>> {
    let parts: Vec<_> = cohort.iter().filter_map(|s| subject_pairs(s, x, y)).collect();
    (!parts.is_empty()).then(|| parts.concat())
}

pub fn node_evidence(
    graph: &KnowledgeGraph,
    cohort: &[SubjectData],
    subject: &SubjectData,
    x: &str,
    cfg: &HbmConfig,
) -> Result<NodeEvidence> {
    cfg.validate()?;
    let hood = graph.neighborhood(x)?;
    let xn = graph.node(x).expect("neighborhood checked the id");
    let pop = empirical_relationships(
        &hood.iter().map(|(y, _)| pooled_pairs(cohort, xn, y)).collect::<Vec<_>>(),
        cfg.min_samples,
    );
    let ind = empirical_relationships(
        &hood.iter().map(|(y, _)| subject_pairs(subject, xn, y)).collect::<Vec<_>>(),
        cfg.min_samples,
    );
    let prior_var: Vec<f64> = (0..hood.len())
        .map(|i| if pop.valid[i] { pop.var[i] } else { cfg.default_prior_var })
        .collect();
    let ids: Vec<&str> = hood.iter().map(|(y, _)| y.id.as_str()).collect();
    let prior = prior_belief(graph, x, &ids, cfg.gamma_global, &prior_var)?;
    Ok(NodeEvidence {
        primary: x.to_string(),
        neighbors: hood.iter().map(|(y, _)| (y.id.clone(), y.name.clone())).collect(),
        w_prior: hood.iter().map(|(_, e)| e.prior_weight).collect(),
        prior,
        pop,
        ind,
    })
}

/// Global weights for every neighbor of `x`, with the fallback path taken
/// and all intermediate quantities.
pub fn weights_from_evidence(ev: &NodeEvidence, cfg: &HbmConfig) -> Result<EdgeWeightBundle> {
    let (pop_belief, ind_belief) = hbm_posterior(&ev.prior, &ev.pop, &ev.ind, cfg)?;
    let mut neighbors = Vec::with_capacity(ev.neighbors.len());
    for (i, (id, name)) in ev.neighbors.iter().enumerate() {
        let (path, w_global) = if ev.ind.valid[i] {
            (FallbackPath::Individual, stats::squash(ind_belief.mean[i], cfg.gamma_global)?)
        } else if ev.pop.valid[i] {
            (FallbackPath::Population, stats::squash(pop_belief.mean[i], cfg.gamma_global)?)
        } else {
            (FallbackPath::Prior, ev.w_prior[i])
        };
        neighbors.push(NeighborWeight {
            neighbor: id.clone(),
            neighbor_name: name.clone(),
            w_prior: ev.w_prior[i],
            z_prior: ev.prior.mean[i],
            prior_var: ev.prior.var[i],
            r_pop: ev.pop.r[i],
            n_pop: ev.pop.n[i],
            r_ind: ev.ind.r[i],
            n_ind: ev.ind.n[i],
            mu_pop: pop_belief.mean[i],
            mu_ind: ind_belief.mean[i],
            w_global,
            fallback_path: path,
        });
    }
    Ok(EdgeWeightBundle {
        primary: ev.primary.clone(),
        neighbors,
    })
}

pub fn global_weights_for_node(
    graph: &KnowledgeGraph,
    cohort: &[SubjectData],
    subject: &SubjectData,
    x: &str,
    cfg: &HbmConfig,
) -> Result<EdgeWeightBundle> {
    let ev = node_evidence(graph, cohort, subject, x, cfg)?;
    weights_from_evidence(&ev, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Category, Provenance};
    use crate::ingestion::MetricSeries;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn scalar(mean: f64, var: f64) -> GaussianBelief {
        GaussianBelief {
            mean: vec![mean],
            var: vec![var],
        }
    }

    fn obs(value: f64, var: f64) -> Observation {
        Observation {
            value: vec![value],
            var: vec![var],
            valid: vec![true],
            n: vec![10],
            r: vec![None],
        }
    }

    fn cfg(alpha_pop: f64, alpha_ind: f64) -> HbmConfig {
        HbmConfig {
            alpha_pop,
            alpha_ind,
            ..HbmConfig::default()
        }
    }

    /// Golden-section minimization of the stage-1 negative log posterior.
    fn argmin_stage1(mu0: f64, s0: f64, z: f64, v: f64, a: f64) -> f64 {
        let f = |t: f64| (t - mu0).powi(2) / s0 + a * (z - t).powi(2) / v;
        let (mut lo, mut hi) = (-10.0, 10.0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = hi - g * (hi - lo);
            let d = lo + g * (hi - lo);
            if f(c) < f(d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        (lo + hi) / 2.0
    }

    #[test]
    fn stage_one_scalar_example() {
        let (pop, ind) = hbm_posterior(&scalar(0.0, 1.0), &obs(1.5, 1.0), &Observation::absent(1), &cfg(1.0, 1.0)).unwrap();
        assert!((pop.mean[0] - 0.75).abs() < 1e-15);
        assert!((pop.var[0] - 0.5).abs() < 1e-15);
        assert_eq!(pop, ind);
        assert!((argmin_stage1(0.0, 1.0, 1.5, 1.0, 1.0) - 0.75).abs() < 1e-6);
    }

    #[test]
    fn tiny_alpha_leaves_prior() {
        let prior = scalar(0.3, 0.8);
        let (pop, ind) = hbm_posterior(&prior, &obs(2.0, 0.1), &obs(-1.0, 0.1), &cfg(1e-14, 1e-14)).unwrap();
        assert!((pop.mean[0] - 0.3).abs() < 1e-9 && (pop.var[0] - 0.8).abs() < 1e-9);
        assert!((ind.mean[0] - 0.3).abs() < 1e-9 && (ind.var[0] - 0.8).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_variances() {
        assert!(hbm_posterior(&scalar(0.0, 0.0), &obs(1.0, 1.0), &Observation::absent(1), &cfg(1.0, 1.0)).is_err());
        assert!(hbm_posterior(&scalar(0.0, 1.0), &obs(1.0, -1.0), &Observation::absent(1), &cfg(1.0, 1.0)).is_err());
        assert!(hbm_posterior(&scalar(0.0, 1.0), &obs(1.0, 1.0), &Observation::absent(2), &cfg(1.0, 1.0)).is_err());
        // invalid entries may carry any variance
        let mut o = obs(1.0, -1.0);
        o.valid[0] = false;
        assert!(hbm_posterior(&scalar(0.0, 1.0), &o, &o, &cfg(1.0, 1.0)).is_ok());
    }

    #[test]
    fn prior_z_examples() {
        assert_eq!(prior_z(0.5, 0.9).unwrap(), 0.0);
        let expected = (0.7f64 / 0.3).ln() / 0.9;
        assert!((prior_z(0.7, 0.9).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.94150).abs() < 1e-4);
        assert!(prior_z(1.0, 0.9).unwrap().is_finite());
    }

    #[test]
    fn evidence_examples() {
        let nine: Vec<(f64, f64)> = (0..9).map(|i| (i as f64, i as f64)).collect();
        let twenty: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, i as f64)).collect();
        let o = empirical_relationships(&[Some(nine), Some(twenty), None], 10);
        assert_eq!(o.valid, vec![false, true, false]);
        assert_eq!(o.value[1], (1.0 - 1e-6f64).atanh());
        assert_eq!(o.var[1], 1.0 / 17.0);
        assert_eq!(o.r[1], Some(1.0));
    }

    #[test]
    fn negative_correlation_counts_by_magnitude() {
        let pairs: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, -(i as f64))).collect();
        let o = empirical_relationships(&[Some(pairs)], 10);
        assert_eq!(o.r[0], Some(1.0));
    }

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 1, 1).unwrap() + chrono::Duration::days(i)
    }

    fn numeric(vals: impl Iterator<Item = f64>) -> MetricSeries {
        MetricSeries::numeric(vals.enumerate().map(|(i, v)| (day(i as i64), Some(v))).collect()).unwrap()
    }

    fn ladder_fixture() -> (KnowledgeGraph, Vec<SubjectData>, SubjectData) {
        let mut g = KnowledgeGraph::new();
        for id in ["x", "a", "b", "c"] {
            g.add_node(Node::new(id, id, Category::Activity)).unwrap();
        }
        for (y, w) in [("a", 0.4), ("b", 0.6), ("c", 0.73)] {
            g.add_edge("x", y, "", w, Provenance::Expert).unwrap();
        }
        let pop_member = SubjectData::new("p")
            .with_series("x", numeric((0..30).map(|i| i as f64)))
            .with_series("a", numeric((0..30).map(|i| (i * 7 % 11) as f64)))
            .with_series("b", numeric((0..30).map(|i| (i * i % 13) as f64)))
            .with_series("c", MetricSeries::textual(vec![(day(0), Some("fine".into()))]).unwrap());
        let subject = SubjectData::new("s")
            .with_series("x", numeric((0..15).map(|i| i as f64)))
            .with_series("a", numeric((0..15).map(|i| (i % 4) as f64)))
            .with_series("b", numeric((0..5).map(|i| i as f64)));
        (g, vec![pop_member], subject)
    }

    #[test]
    fn fallback_ladder() {
        let (g, cohort, subject) = ladder_fixture();
        let c = HbmConfig::default();
        let bundle = global_weights_for_node(&g, &cohort, &subject, "x", &c).unwrap();
        let paths: Vec<_> = bundle.neighbors.iter().map(|n| n.fallback_path).collect();
        assert_eq!(paths, vec![FallbackPath::Individual, FallbackPath::Population, FallbackPath::Prior]);
        let [a, b, cn] = &bundle.neighbors[..] else { panic!() };
        assert_eq!(a.w_global, stats::squash(a.mu_ind, 0.9).unwrap());
        assert_eq!(b.w_global, stats::squash(b.mu_pop, 0.9).unwrap());
        assert_eq!(b.mu_pop, b.mu_ind);
        assert_eq!(cn.w_global, 0.73);
        assert_eq!(cn.prior_var, DEFAULT_PRIOR_VAR);
        assert_eq!(b.prior_var, 1.0 / (b.n_pop as f64 - 3.0));
    }

    #[test]
    fn missing_node_is_not_found() {
        let (g, cohort, subject) = ladder_fixture();
        assert!(matches!(
            global_weights_for_node(&g, &cohort, &subject, "nope", &HbmConfig::default()),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn missing_edge_is_an_invariant_violation() {
        let (g, ..) = ladder_fixture();
        assert!(matches!(
            prior_belief(&g, "a", &["b"], 0.9, &[1.0]),
            Err(Error::InvariantViolation(_))
        ));
    }

    fn one_shot(mu0: f64, s0: f64, zp: f64, vp: f64, ap: f64, zi: f64, vi: f64, ai: f64) -> (f64, f64) {
        let lambda = 1.0 / s0 + ap / vp + ai / vi;
        let b = mu0 / s0 + ap * zp / vp + ai * zi / vi;
        (b / lambda, 1.0 / lambda)
    }

    proptest! {
        #[test]
        fn prior_round_trip(w in 0.1f64..0.99) {
            let z = prior_z(w, 0.9).unwrap();
            prop_assert!((stats::squash(z, 0.9).unwrap() - w).abs() < 1e-12);
        }

        #[test]
        fn sequential_matches_one_shot(
            mu0 in -3.0f64..3.0, s0 in 0.01f64..5.0,
            zp in -4.0f64..4.0, vp in 0.01f64..2.0, ap in 0.01f64..50.0,
            zi in -4.0f64..4.0, vi in 0.01f64..2.0, ai in 0.01f64..50.0,
        ) {
            let (_, ind) = hbm_posterior(&scalar(mu0, s0), &obs(zp, vp), &obs(zi, vi), &cfg(ap, ai)).unwrap();
            let (m, v) = one_shot(mu0, s0, zp, vp, ap, zi, vi, ai);
            prop_assert!((ind.mean[0] - m).abs() < 1e-10);
            prop_assert!((ind.var[0] - v).abs() < 1e-10);
        }

        #[test]
        fn shrinkage_and_variance_bounds(
            mu0 in -3.0f64..3.0, s0 in 0.01f64..5.0,
            zp in -4.0f64..4.0, vp in 0.01f64..2.0, ap in 0.01f64..50.0,
            zi in -4.0f64..4.0, vi in 0.01f64..2.0, ai in 0.01f64..50.0,
        ) {
            prop_assume!((zp - mu0).abs() > 1e-6);
            let (pop, ind) = hbm_posterior(&scalar(mu0, s0), &obs(zp, vp), &obs(zi, vi), &cfg(ap, ai)).unwrap();
            let (lo, hi) = (mu0.min(zp), mu0.max(zp));
            prop_assert!(pop.mean[0] > lo && pop.mean[0] < hi);
            prop_assert!(pop.var[0] <= s0 && pop.var[0] <= vp / ap);
            if (zi - pop.mean[0]).abs() > 1e-6 {
                let (lo, hi) = (pop.mean[0].min(zi), pop.mean[0].max(zi));
                prop_assert!(ind.mean[0] >= lo && ind.mean[0] <= hi);
            }
            prop_assert!(ind.var[0] <= pop.var[0] && ind.var[0] <= vi / ai);
        }

        #[test]
        fn more_trust_moves_toward_population(
            mu0 in -3.0f64..3.0, s0 in 0.1f64..5.0, zp in -4.0f64..4.0, vp in 0.05f64..2.0,
            a1 in 0.01f64..10.0, factor in 1.5f64..10.0,
        ) {
            prop_assume!((zp - mu0).abs() > 1e-3);
            let none = Observation::absent(1);
            let (p1, _) = hbm_posterior(&scalar(mu0, s0), &obs(zp, vp), &none, &cfg(a1, 1.0)).unwrap();
            let (p2, _) = hbm_posterior(&scalar(mu0, s0), &obs(zp, vp), &none, &cfg(a1 * factor, 1.0)).unwrap();
            prop_assert!((p2.mean[0] - zp).abs() < (p1.mean[0] - zp).abs());
        }
    }
}
