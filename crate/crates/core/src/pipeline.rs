//! Batch front-end: summarize a JSONL corpus, explain one transport plan,
//! and score summaries against references.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::beam::{beam_search, BeamConfig, BeamRound};
use crate::bip::{bip_optimize, BipConfig};
use crate::embedding::{cost_matrix, load_embeddings, CostMatrix, EmbeddingTable, Metric};
use crate::error::{Error, Result};
use crate::heatmap::render_svg;
use crate::objective::SelectionProblem;
use crate::ot::{csv_field, Solver, SolverConfig, TransportPlan};
use crate::rouge::{score_texts, RougeTriple};
use crate::text::{
    english_stopwords, load_stopwords, tokenize, Distribution, RawDocument, TokenSplit,
    TokenizeOptions, Tokenized,
};

pub const FORMAT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SUMMARIES_FILE: &str = "summaries.jsonl";
pub const TRACE_DIR: &str = "traces";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Beam,
    Bip,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "beam" => Ok(Strategy::Beam),
            "bip" => Ok(Strategy::Bip),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Beam => "beam",
            Strategy::Bip => "bip",
        })
    }
}

/// Per-corpus sentence budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    MultiNews,
    BillSum,
    PubMed,
    CnnDm,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::MultiNews, Preset::BillSum, Preset::PubMed, Preset::CnnDm];

    pub fn budget(self) -> usize {
        match self {
            Preset::MultiNews => 9,
            Preset::BillSum => 7,
            Preset::PubMed => 6,
            Preset::CnnDm => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::MultiNews => "multinews",
            Preset::BillSum => "billsum",
            Preset::PubMed => "pubmed",
            Preset::CnnDm => "cnndm",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopwordConfig {
    pub enabled: bool,
    /// One word per line; the built-in English list when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list: Option<PathBuf>,
}

impl Default for StopwordConfig {
    fn default() -> Self {
        StopwordConfig {
            enabled: true,
            list: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSettings {
    pub width: usize,
    pub final_beam_only: bool,
}

impl Default for BeamSettings {
    fn default() -> Self {
        BeamSettings {
            width: 5,
            final_beam_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub embeddings: PathBuf,
    pub metric: Metric,
    pub stopwords: StopwordConfig,
    pub lowercase: bool,
    pub token_split: TokenSplit,
    pub drop_oov: bool,
    pub strategy: Strategy,
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam: Option<BeamSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bip: Option<BipConfig>,
    pub solver: SolverConfig,
}

impl RunConfig {
    pub fn new(embeddings: impl Into<PathBuf>) -> Self {
        RunConfig {
            embeddings: embeddings.into(),
            metric: Metric::Euclidean,
            stopwords: StopwordConfig::default(),
            lowercase: true,
            token_split: TokenSplit::Alphanumeric,
            drop_oov: true,
            strategy: Strategy::Beam,
            budget: 3,
            preset: None,
            beam: None,
            bip: None,
            solver: SolverConfig::default(),
        }
    }

    /// Fills in the settings block of the active strategy, drops the other
    /// one and validates everything.
    pub fn normalized(mut self) -> Result<Self> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        match self.strategy {
            Strategy::Beam => {
                let beam = self.beam.take().unwrap_or_default();
                self.beam_config_for(&beam).validate()?;
                self.beam = Some(beam);
                self.bip = None;
            }
            Strategy::Bip => {
                let bip = self.bip.take().unwrap_or_default();
                bip.validate()?;
                self.bip = Some(bip);
                self.beam = None;
            }
        }
        self.solver.validate()?;
        Ok(self)
    }

    fn beam_config_for(&self, beam: &BeamSettings) -> BeamConfig {
        BeamConfig {
            budget: self.budget,
            width: beam.width,
            final_beam_only: beam.final_beam_only,
        }
    }

    /// Reads a config from a JSON object, or from the header line of a
    /// previous run's output.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(first) {
            if let Some(config) = map.get("config") {
                return Ok(serde_json::from_value(config.clone())?);
            }
        }
        Ok(serde_json::from_str(&text)?)
    }
}

/// A tokenized document with everything needed to build selection problems.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub tokenized: Tokenized,
    pub dists: Vec<Distribution>,
    pub cost: CostMatrix,
}

impl Prepared {
    pub fn problem(&self) -> Result<SelectionProblem<'_>> {
        SelectionProblem::new(&self.dists, &self.cost)
    }

    pub fn render(&self, selected: &[usize]) -> String {
        let text = self.tokenized.document.source_text().unwrap_or(&[]);
        selected
            .iter()
            .filter_map(|&i| text.get(i).map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trace {
    Beam {
        rounds: Vec<BeamRound>,
    },
    Bip {
        rng: String,
        seed: u64,
        empty_samples: usize,
        loss_history: Vec<f64>,
        final_scores: Vec<f64>,
    },
    /// Fewer eligible sentences than the budget; all were taken unsearched.
    AllEligible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentSummary {
    pub selected: Vec<usize>,
    pub summary: String,
    pub coverage: f64,
    pub distance: f64,
    pub budget_unmet: bool,
    pub eligible: usize,
    pub strategy: Strategy,
    /// Transport solves spent on the search itself.
    pub solves: usize,
    pub oov_dropped: usize,
    #[serde(skip)]
    pub trace: Trace,
}

pub struct Pipeline {
    config: RunConfig,
    table: EmbeddingTable,
    options: TokenizeOptions,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        let table = load_embeddings(&config.embeddings)?;
        Pipeline::with_table(config, table)
    }

    pub fn with_table(config: RunConfig, table: EmbeddingTable) -> Result<Self> {
        let config = config.normalized()?;
        let stopwords: Option<HashSet<String>> = match &config.stopwords {
            StopwordConfig { enabled: false, .. } => None,
            StopwordConfig {
                list: Some(path), ..
            } => Some(load_stopwords(path)?),
            StopwordConfig { list: None, .. } => Some(english_stopwords()),
        };
        let options = TokenizeOptions {
            lowercase: config.lowercase,
            stopwords,
            drop_oov: config.drop_oov,
            split: config.token_split,
        };
        Ok(Pipeline {
            config,
            table,
            options,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn prepare(&self, raw: &RawDocument) -> Result<Prepared> {
        let tokenized = tokenize(raw, &self.table, &self.options)?;
        let cost = cost_matrix(&tokenized.vocab, &self.table, self.config.metric)?;
        let dists = tokenized.document.distributions(tokenized.vocab.len());
        Ok(Prepared {
            tokenized,
            dists,
            cost,
        })
    }

    fn solver(&self) -> Result<Solver> {
        Solver::new(self.config.solver.clone())
    }

    pub fn summarize(&self, raw: &RawDocument) -> Result<DocumentSummary> {
        let prepared = self.prepare(raw)?;
        self.summarize_prepared(&prepared)
    }

    pub fn summarize_prepared(&self, prepared: &Prepared) -> Result<DocumentSummary> {
        let problem = prepared.problem()?;
        let solver = self.solver()?;
        let budget = self.config.budget;
        let eligible = problem.eligible().len();

        let (selected, coverage, solves, trace) = if eligible < budget {
            let all = problem.eligible().to_vec();
            let coverage = problem.coverage(&all, &solver)?;
            (all, coverage, 0, Trace::AllEligible)
        } else {
            match self.config.strategy {
                Strategy::Beam => {
                    let beam = self.config.beam.clone().unwrap_or_default();
                    let out = beam_search(&problem, &self.config.beam_config_for(&beam), &solver)?;
                    (
                        out.best.selected,
                        out.best.score,
                        out.solves,
                        Trace::Beam { rounds: out.trace },
                    )
                }
                Strategy::Bip => {
                    let config = self.config.bip.clone().unwrap_or_default();
                    let out = bip_optimize(&problem, budget, &config, &solver)?;
                    let selected = out.extraction.indices();
                    let coverage = problem.coverage(&selected, &solver)?;
                    let trace = Trace::Bip {
                        rng: out.rng,
                        seed: config.seed,
                        empty_samples: out.empty_samples,
                        loss_history: out.state.loss_history,
                        final_scores: out.final_scores,
                    };
                    (selected, coverage, out.solves, trace)
                }
            }
        };

        Ok(DocumentSummary {
            summary: prepared.render(&selected),
            selected,
            coverage,
            distance: 1.0 - coverage,
            budget_unmet: eligible < budget,
            eligible,
            strategy: self.config.strategy,
            solves,
            oov_dropped: prepared.tokenized.oov_dropped,
            trace,
        })
    }

    /// Transport plan between the document and its summary. With
    /// `selected = None` the configured strategy picks the summary.
    pub fn explain(&self, raw: &RawDocument, selected: Option<&[usize]>) -> Result<Explanation> {
        let prepared = self.prepare(raw)?;
        let selected = match selected {
            Some(s) => s.to_vec(),
            None => self.summarize_prepared(&prepared)?.selected,
        };
        let problem = prepared.problem()?;
        let summary = problem.summary_dist(&selected)?;
        let plan = self.solver()?.solve(problem.doc_dist(), &summary, problem.cost())?;
        let rows = (0..summary.len())
            .filter(|&i| problem.doc_dist()[i] > 0.0)
            .collect();
        let cols = (0..summary.len()).filter(|&j| summary[j] > 0.0).collect();
        Ok(Explanation {
            labels: prepared.tokenized.vocab.tokens().to_vec(),
            doc_weights: problem.doc_dist().to_vec(),
            summary_weights: summary,
            cost: prepared.cost.clone(),
            selected,
            plan,
            rows,
            cols,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Explanation {
    pub selected: Vec<usize>,
    pub plan: TransportPlan,
    pub cost: CostMatrix,
    pub labels: Vec<String>,
    pub doc_weights: Vec<f64>,
    pub summary_weights: Vec<f64>,
    /// Document tokens, in vocabulary order.
    pub rows: Vec<usize>,
    /// Summary tokens, in vocabulary order.
    pub cols: Vec<usize>,
}

impl Explanation {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.plan
            .write_csv(&self.cost, &self.rows, &self.cols, |i| self.labels[i].clone(), out)
    }

    pub fn svg(&self) -> String {
        render_svg(&self.plan, &self.rows, &self.cols, |i| self.labels[i].clone())
    }

    /// Writes `plan.csv` and `plan.svg` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut csv = BufWriter::new(File::create(dir.join("plan.csv"))?);
        self.write_csv(&mut csv)?;
        csv.flush()?;
        fs::write(dir.join("plan.svg"), self.svg())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
struct InputRecord {
    #[serde(default)]
    id: Option<Value>,
    #[serde(flatten)]
    document: RawDocument,
}

fn id_string(id: Option<&Value>, index: usize) -> String {
    match id {
        Some(Value::String(s)) => s.clone(),
        Some(v) => v.to_string(),
        None => index.to_string(),
    }
}

/// One input line: its id and the parsed document, or the parse error.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<(String, Result<RawDocument>)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let index = out.len();
        let entry = match serde_json::from_str::<InputRecord>(&line) {
            Ok(rec) => (id_string(rec.id.as_ref(), index), Ok(rec.document)),
            Err(e) => {
                let id = serde_json::from_str::<Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").cloned());
                (id_string(id.as_ref(), index), Err(Error::from(e)))
            }
        };
        out.push(entry);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct ErrorReport {
    kind: &'static str,
    message: String,
}

#[derive(Debug, Serialize)]
struct OutputLine<'a> {
    index: usize,
    id: &'a str,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    result: Option<&'a DocumentSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchReport {
    pub documents: usize,
    pub failures: usize,
}

fn trace_name(index: usize) -> String {
    format!("doc-{index:06}")
}

/// Summarizes every line of `input` into `output_dir/summaries.jsonl`, with
/// one trace file per document under `output_dir/traces`. Documents run on
/// the current rayon pool; output keeps input order.
pub fn summarize_corpus(
    pipeline: &Pipeline,
    input: impl AsRef<Path>,
    output_dir: impl AsRef<Path>,
) -> Result<BatchReport> {
    let output_dir = output_dir.as_ref();
    let corpus = read_corpus(input)?;
    let trace_dir = output_dir.join(TRACE_DIR);
    fs::create_dir_all(&trace_dir)?;

    let (ids, docs): (Vec<String>, Vec<Result<RawDocument>>) = corpus.into_iter().unzip();
    let results: Vec<Result<DocumentSummary>> = docs
        .into_par_iter()
        .map(|doc| doc.and_then(|raw| pipeline.summarize(&raw)))
        .collect();

    let mut out = BufWriter::new(File::create(output_dir.join(SUMMARIES_FILE))?);
    let header = serde_json::json!({
        "version": FORMAT_VERSION,
        "config": pipeline.config(),
    });
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;

    let mut failures = 0;
    for (index, (id, result)) in ids.iter().zip(&results).enumerate() {
        let line = match result {
            Ok(summary) => {
                let name = trace_name(index);
                let rel = format!("{TRACE_DIR}/{name}.json");
                fs::write(
                    output_dir.join(&rel),
                    serde_json::to_string_pretty(&summary.trace)? + "\n",
                )?;
                if let Trace::Bip { loss_history, .. } = &summary.trace {
                    let mut csv = String::from("iteration,loss\n");
                    for (t, loss) in loss_history.iter().enumerate() {
                        csv.push_str(&format!("{t},{loss}\n"));
                    }
                    fs::write(trace_dir.join(format!("{name}.loss.csv")), csv)?;
                }
                OutputLine {
                    index,
                    id,
                    result: Some(summary),
                    trace: Some(rel),
                    error: None,
                }
            }
            Err(e) => {
                failures += 1;
                log::warn!("document {id}: {e}");
                OutputLine {
                    index,
                    id,
                    result: None,
                    trace: None,
                    error: Some(ErrorReport {
                        kind: e.kind(),
                        message: e.to_string(),
                    }),
                }
            }
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(BatchReport {
        documents: ids.len(),
        failures,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub scores: Option<RougeTriple>,
    pub error: Option<String>,
}

/// `(id, summary)` from a summaries file; failed documents carry `None`.
/// The header line is skipped.
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<(String, Option<String>)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        if v.get("config").is_some() && v.get("version").is_some() {
            continue;
        }
        let index = out.len();
        let id = id_string(v.get("id"), index);
        let summary = v.get("summary").and_then(Value::as_str).map(str::to_string);
        out.push((id, summary));
    }
    Ok(out)
}

/// References keyed by id. Each line holds `id` and one of `reference`,
/// `summary` or `text`.
pub fn read_references(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        let id = id_string(v.get("id"), out.len());
        let text = ["reference", "summary", "text"]
            .iter()
            .find_map(|k| v.get(*k).and_then(Value::as_str))
            .ok_or_else(|| Error::Parse {
                line: n + 1,
                message: "reference line has no text".into(),
            })?;
        out.insert(id, text.to_string());
    }
    Ok(out)
}

/// Self-contained `{id?, candidate, reference}` lines.
pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<(String, String, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line)?;
        let field = |k: &str| {
            v.get(k)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| Error::Parse {
                    line: n + 1,
                    message: format!("missing `{k}`"),
                })
        };
        out.push((id_string(v.get("id"), out.len()), field("candidate")?, field("reference")?));
    }
    Ok(out)
}

pub fn evaluate(
    results: &[(String, Option<String>)],
    references: &HashMap<String, String>,
) -> Vec<EvalRow> {
    results
        .par_iter()
        .map(|(id, candidate)| match (candidate, references.get(id)) {
            (_, None) => EvalRow {
                id: id.clone(),
                scores: None,
                error: Some(Error::MissingReference(id.clone()).to_string()),
            },
            (None, Some(_)) => EvalRow {
                id: id.clone(),
                scores: None,
                error: Some("document has no summary".into()),
            },
            (Some(c), Some(r)) => EvalRow {
                id: id.clone(),
                scores: Some(score_texts(c, r)),
                error: None,
            },
        })
        .collect()
}

pub fn evaluate_pairs(pairs: &[(String, String, String)]) -> Vec<EvalRow> {
    pairs
        .par_iter()
        .map(|(id, c, r)| EvalRow {
            id: id.clone(),
            scores: Some(score_texts(c, r)),
            error: None,
        })
        .collect()
}

/// Mean F-scores over rows that were scored.
pub fn mean_scores(rows: &[EvalRow]) -> Option<[f64; 3]> {
    let scored: Vec<&RougeTriple> = rows.iter().filter_map(|r| r.scores.as_ref()).collect();
    if scored.is_empty() {
        return None;
    }
    let n = scored.len() as f64;
    let mut sum = [0.0; 3];
    for s in scored {
        sum[0] += s.rouge1.f1;
        sum[1] += s.rouge2.f1;
        sum[2] += s.rouge_l.f1;
    }
    Some(sum.map(|x| x / n))
}

/// Per-document rows then a `mean` row over the scored documents.
pub fn write_eval_csv<W: Write>(rows: &[EvalRow], mut out: W) -> Result<()> {
    writeln!(out, "id,rouge1_f,rouge2_f,rougeL_f,error")?;
    for row in rows {
        match &row.scores {
            Some(s) => writeln!(
                out,
                "{},{},{},{},",
                csv_field(&row.id),
                s.rouge1.f1,
                s.rouge2.f1,
                s.rouge_l.f1
            )?,
            None => writeln!(
                out,
                "{},,,,{}",
                csv_field(&row.id),
                csv_field(row.error.as_deref().unwrap_or(""))
            )?,
        }
    }
    match mean_scores(rows) {
        Some([r1, r2, rl]) => writeln!(out, "mean,{r1},{r2},{rl},")?,
        None => writeln!(out, "mean,,,,no scored documents")?,
    }
    Ok(())
}
