use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use wag::calibration::{self, calibrate, write_curves_csv};
use wag::global::node_evidence;
use wag::graph::{init_general_graph, DataSource, KnowledgeGraph, ValueKind};
use wag::ingestion::{self, load_cohort_dir, load_subject_file, SelectionConfig, SubjectData};
use wag::providers::{stub_knowledge, KnowledgeFixture, MetricRecord, StubEmbedder, StubQueryParser};
use wag::queryset::{self, QueryInputTuple, RankRecord, DEFAULT_WINDOWS};
use wag::report::{weight_report, write_weight_csv};
use wag::retrieval::{neighbor_budget, parse_query, retrieve, ParsedQuery, RetrievalConfig};
use wag::synthetic::metric_catalogue;
use wag::Error;

#[derive(Parser)]
#[command(name = "wag", version, about = "Query-adaptive context retrieval over personal health knowledge graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the general graph from cohort columns (or the built-in catalogue).
    BuildGraph(Flags),
    /// Integrate a subject's (or cohort's) metrics into an existing graph.
    Integrate(Flags),
    /// Participant selection statistics for a cohort directory.
    IngestStats(Flags),
    /// Retrieve the context subgraph for one query.
    Retrieve(Flags),
    /// Total neighbor budget for an openness score.
    Budget(Flags),
    /// Calibrate alpha_pop and alpha_ind from Kendall-tau curves.
    Calibrate(Flags),
    /// Sample single- and multi-metric query inputs for a subject.
    Queryset(Flags),
    /// Aggregate rank records (JSON Lines) into mean rank and win rate.
    EvalAgg(Flags),
    /// Per-edge weight components for sampled queries, as CSV.
    WeightReport(Flags),
}

#[derive(Args, Default)]
struct Flags {
    #[arg(long, value_name = "PATH")]
    graph: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    cohort: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    subject: Option<PathBuf>,
    #[arg(long, value_name = "STRING")]
    query: Option<String>,
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "UINT")]
    seed: Option<u64>,
    #[arg(long, value_name = "FLOAT")]
    eta: Option<f64>,
    #[arg(long, value_name = "UINT")]
    kappa: Option<usize>,
    #[arg(long, value_name = "min,max,points")]
    grid: Option<String>,
    #[arg(long)]
    text: bool,
}

impl Flags {
    fn need<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
        v.as_ref().ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required")).into())
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn graph(&self) -> Result<KnowledgeGraph> {
        let path = Self::need(&self.graph, "graph")?;
        KnowledgeGraph::load(path).with_context(|| format!("loading graph {}", path.display()))
    }

    fn subject(&self) -> Result<SubjectData> {
        let path = Self::need(&self.subject, "subject")?;
        load_subject_file(path).with_context(|| format!("loading subject {}", path.display()))
    }

    fn cohort(&self) -> Result<Vec<SubjectData>> {
        let dir = Self::need(&self.cohort, "cohort")?;
        load_cohort_dir(dir).with_context(|| format!("loading cohort {}", dir.display()))
    }

    fn cohort_or(&self, subject: &SubjectData) -> Result<Vec<SubjectData>> {
        if self.cohort.is_some() {
            self.cohort()
        } else {
            Ok(vec![subject.clone()])
        }
    }

    fn retrieval_config(&self) -> Result<RetrievalConfig> {
        let mut cfg = match &self.config {
            Some(p) => RetrievalConfig::from_reader(open(p)?).with_context(|| format!("reading config {}", p.display()))?,
            None => RetrievalConfig::default(),
        };
        if let Some(k) = self.kappa {
            cfg.kappa = k;
        }
        Ok(cfg)
    }

    fn knowledge_fixture(&self) -> Result<Option<KnowledgeFixture>> {
        self.config
            .as_ref()
            .map(|p| KnowledgeFixture::from_reader(open(p)?).with_context(|| format!("reading knowledge fixture {}", p.display())))
            .transpose()
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).map_err(Error::Io).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn emit_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Metric records for every column of the given subjects, sorted by name.
/// A column is numeric only if it is numeric for every subject carrying it.
fn records_from(subjects: &[SubjectData], dataset: &str) -> Vec<MetricRecord> {
    let mut kinds: BTreeMap<&str, ValueKind> = BTreeMap::new();
    for s in subjects {
        for (name, kind) in s.metric_kinds() {
            let k = kinds.entry(name).or_insert(kind);
            if kind == ValueKind::Textual {
                *k = ValueKind::Textual;
            }
        }
    }
    kinds
        .into_iter()
        .map(|(name, value_kind)| MetricRecord {
            value_kind,
            data_source: Some(DataSource {
                dataset: dataset.to_string(),
                feature: name.to_string(),
                unit: None,
                value_kind,
                path: None,
            }),
            ..MetricRecord::named(name)
        })
        .collect()
}

fn build_graph(f: &Flags) -> Result<()> {
    let out = Flags::need(&f.out, "out")?;
    let fixture = f.knowledge_fixture()?;
    let records = match &f.cohort {
        Some(dir) => records_from(&f.cohort()?, &dir.display().to_string()),
        None => metric_catalogue(),
    };
    let mut graph = init_general_graph(&records, &stub_knowledge(fixture.as_ref()))?;
    graph.embed_names(&StubEmbedder)?;
    graph.save(out)?;
    emit_json(&serde_json::json!({
        "nodes": graph.node_count(),
        "edges": graph.edge_count(),
        "out": out.display().to_string(),
    }))
}

fn integrate(f: &Flags) -> Result<()> {
    let out = Flags::need(&f.out, "out")?;
    let mut graph = f.graph()?;
    let fixture = f.knowledge_fixture()?;
    let records = match (&f.subject, &f.cohort) {
        (Some(p), _) => records_from(&[f.subject()?], &p.display().to_string()),
        (None, Some(d)) => records_from(&f.cohort()?, &d.display().to_string()),
        (None, None) => bail!(Error::InvalidArgument("--subject or --cohort is required".into())),
    };
    let report = graph.integrate_metrics(&records, &stub_knowledge(fixture.as_ref()))?;
    graph.embed_names(&StubEmbedder)?;
    graph.save(out)?;
    emit_json(&report)
}

#[derive(Serialize)]
struct SubjectStats {
    subject_id: String,
    #[serde(flatten)]
    stats: ingestion::SelectionStats,
}

fn ingest_stats(f: &Flags) -> Result<()> {
    let cohort = f.cohort()?;
    let mut rows = Vec::with_capacity(cohort.len());
    for s in &cohort {
        rows.push(SubjectStats {
            subject_id: s.subject_id.clone(),
            stats: ingestion::selection_stats(s, ingestion::DEFAULT_MI_BINS, wag::stats::DEFAULT_MIN_SAMPLES)?,
        });
    }
    let n = f.kappa.unwrap_or(10).max(1);
    let selection = ingestion::select_participants(&cohort, n, f.seed(), &SelectionConfig::default())?;
    emit_json(&serde_json::json!({ "subjects": rows, "selection": selection }))
}

fn dictionary(graph: &KnowledgeGraph) -> Vec<String> {
    graph.nodes().map(|n| n.name.clone()).collect()
}

fn retrieve_cmd(f: &Flags) -> Result<()> {
    let query = Flags::need(&f.query, "query")?;
    let graph = f.graph()?;
    let subject = f.subject()?;
    let cohort = f.cohort_or(&subject)?;
    let cfg = f.retrieval_config()?;
    let mut parsed = parse_query(query, &dictionary(&graph), &StubQueryParser)?;
    if let Some(eta) = f.eta {
        parsed.openness = eta;
    }
    let result = retrieve(&graph, &cohort, &subject, &parsed, &cfg, &StubEmbedder)?;
    if f.text {
        print!("{}", result.context);
        Ok(())
    } else {
        emit_json(&result)
    }
}

fn budget(f: &Flags) -> Result<()> {
    let eta = *Flags::need(&f.eta, "eta")?;
    let kappa = f.kappa.unwrap_or(RetrievalConfig::default().kappa);
    let total: usize = neighbor_budget(eta, kappa, 1)?.iter().sum();
    println!("{total}");
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let [min, max, points] = parts[..] else {
        bail!(Error::InvalidArgument(format!("--grid expects \"min,max,points\", got {spec:?}")));
    };
    let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad grid value {s:?}")));
    let points: usize = points
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad grid point count {points:?}")))?;
    Ok(calibration::log_grid(parse(min)?, parse(max)?, points)?)
}

/// Subjects used for the individual stage of calibration.
const CALIBRATION_SUBJECTS: usize = 3;

fn calibrate_cmd(f: &Flags) -> Result<()> {
    let graph = f.graph()?;
    let cohort = f.cohort()?;
    let cfg = f.retrieval_config()?.hbm();
    let grid = match &f.grid {
        Some(g) => parse_grid(g)?,
        None => calibration::default_grid(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(f.seed());
    let sample: Vec<&SubjectData> = cohort
        .choose_multiple(&mut rng, CALIBRATION_SUBJECTS.min(cohort.len()))
        .collect();
    let mut cases = Vec::new();
    for s in sample {
        for node in graph.nodes() {
            cases.push(node_evidence(&graph, &cohort, s, &node.id, &cfg)?);
        }
    }
    match calibrate(&cases, &grid, &cfg) {
        Ok(cal) => {
            if let Some(out) = &f.out {
                write_curves_csv(&cal.curves, File::create(out).map_err(Error::Io)?)?;
            }
            emit_json(&serde_json::json!({ "alpha_pop": cal.alpha_pop, "alpha_ind": cal.alpha_ind }))
        }
        Err(Error::NoIntersection { stage, preserve, align }) => {
            if let Some(out) = &f.out {
                write_curves_csv(&[*preserve.clone(), *align.clone()], File::create(out).map_err(Error::Io)?)?;
            }
            Err(Error::NoIntersection { stage, preserve, align }.into())
        }
        Err(e) => Err(e.into()),
    }
}

/// Query tuples for one subject: every single-metric tuple plus ten
/// multi-metric ones.
fn sample_tuples(subject: &SubjectData, seed: u64) -> Vec<QueryInputTuple> {
    let mut tuples = queryset::sample_single_metric_inputs(subject, &DEFAULT_WINDOWS, seed);
    tuples.extend(queryset::sample_multi_metric_inputs(subject, 10, &DEFAULT_WINDOWS, seed).tuples);
    tuples
}

fn queryset_cmd(f: &Flags) -> Result<()> {
    let subject = f.subject()?;
    let tuples = sample_tuples(&subject, f.seed());
    match &f.out {
        Some(p) => queryset::write_jsonl(&tuples, File::create(p).map_err(Error::Io)?)?,
        None => queryset::write_jsonl(&tuples, io::stdout().lock())?,
    }
    Ok(())
}

fn eval_agg(f: &Flags) -> Result<()> {
    let records: Vec<RankRecord> = match &f.config {
        Some(p) => queryset::read_jsonl(open(p)?)?,
        None => {
            let mut buf = String::new();
            io::stdin().read_to_string(&mut buf).map_err(Error::Io)?;
            queryset::read_jsonl(buf.as_bytes())?
        }
    };
    emit_json(&queryset::aggregate_rankings(&records)?)
}

/// Queries behind the weight report: `--query` when given, otherwise up to
/// `--kappa` (default 20) sampled tuples rendered through the question
/// templates with seeded categories.
fn report_queries(f: &Flags, graph: &KnowledgeGraph, subject: &SubjectData) -> Result<Vec<(String, ParsedQuery)>> {
    let dict = dictionary(graph);
    if let Some(q) = &f.query {
        return Ok(vec![("q0".into(), parse_query(q, &dict, &StubQueryParser)?)]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(f.seed());
    let categories = queryset::query_categories();
    let limit = f.kappa.unwrap_or(20);
    let mut out = Vec::new();
    for (i, t) in sample_tuples(subject, f.seed()).into_iter().take(limit).enumerate() {
        let cat = categories.choose(&mut rng).expect("categories are non-empty");
        let text = queryset::question_stub(&t, &cat.name)?;
        out.push((format!("q{i}"), parse_query(&text, &dict, &StubQueryParser)?));
    }
    Ok(out)
}

fn weight_report_cmd(f: &Flags) -> Result<()> {
    let graph = f.graph()?;
    let subject = f.subject()?;
    let cohort = f.cohort_or(&subject)?;
    let cfg = f.retrieval_config()?;
    let queries = report_queries(f, &graph, &subject)?;
    let rows = weight_report(&graph, &cohort, &subject, &queries, &cfg, &StubEmbedder)?;
    match &f.out {
        Some(p) => write_weight_csv(&rows, File::create(p).map_err(Error::Io)?)?,
        None => write_weight_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::BuildGraph(f) => build_graph(f),
        Command::Integrate(f) => integrate(f),
        Command::IngestStats(f) => ingest_stats(f),
        Command::Retrieve(f) => retrieve_cmd(f),
        Command::Budget(f) => budget(f),
        Command::Calibrate(f) => calibrate_cmd(f),
        Command::Queryset(f) => queryset_cmd(f),
        Command::EvalAgg(f) => eval_agg(f),
        Command::WeightReport(f) => weight_report_cmd(f),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return if e.is_io_or_schema() { 2 } else { 1 };
        }
        if cause.is::<io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
