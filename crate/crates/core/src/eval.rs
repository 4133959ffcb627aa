//! One-shot evaluation: categorized questions, one fresh agent run each,
//! human ratings ingested from file, percentage tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{run, AgentConfig, AgentContext, AgentTrace, TraceStatus};
use crate::graph::CodeGraph;
use crate::provider::LlmProvider;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Factual,
    MultiSource,
    Predictive,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Factual, Category::MultiSource, Category::Predictive];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Factual => "factual",
            Category::MultiSource => "multi_source",
            Category::Predictive => "predictive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalQuestion {
    pub id: String,
    pub category: Category,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    High,
    Medium,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rating {
    #[serde(rename = "questionId")]
    pub question_id: String,
    pub accuracy: Level,
    pub completeness: Level,
    pub coherence: Level,
    #[serde(default)]
    pub annotator: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerStatus {
    Answered,
    Forced,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    #[serde(rename = "questionId")]
    pub question_id: String,
    pub category: Category,
    pub question: String,
    pub status: AnswerStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub steps: usize,
    /// Relative to the answers file.
    pub trace: String,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("duplicate question id {0:?}")]
    DuplicateQuestion(String),
    #[error("duplicate rating for question {question:?} by annotator {annotator:?}")]
    DuplicateRating { question: String, annotator: String },
    #[error("no ratings")]
    NoRatings,
    #[error("rating refers to unknown question id {0:?}")]
    UnknownQuestionId(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.to_path_buf(), source }
}

/// Reads line-delimited JSON, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_jsonl(&text, path)
}

fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(line)
            .map_err(|e| EvalError::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        out.push(v);
    }
    Ok(out)
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn load_questions(path: &Path) -> Result<Vec<EvalQuestion>, EvalError> {
    let qs: Vec<EvalQuestion> = read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    for q in &qs {
        if !seen.insert(q.id.as_str()) {
            return Err(EvalError::DuplicateQuestion(q.id.clone()));
        }
    }
    Ok(qs)
}

pub fn load_ratings(path: &Path) -> Result<Vec<Rating>, EvalError> {
    let rs: Vec<Rating> = read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    for r in &rs {
        if !seen.insert((r.question_id.as_str(), r.annotator.as_str())) {
            return Err(EvalError::DuplicateRating { question: r.question_id.clone(), annotator: r.annotator.clone() });
        }
    }
    Ok(rs)
}

fn trace_file_name(id: &str) -> String {
    let safe: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("traces/{safe}.jsonl")
}

pub fn answer_record(q: &EvalQuestion, trace: &AgentTrace) -> AnswerRecord {
    let status = match trace.status {
        TraceStatus::Answered => AnswerStatus::Answered,
        TraceStatus::Forced => AnswerStatus::Forced,
        TraceStatus::Error => AnswerStatus::Failed,
    };
    AnswerRecord {
        question_id: q.id.clone(),
        category: q.category,
        question: q.text.clone(),
        status,
        answer: trace.final_answer.clone(),
        error: trace.error.clone(),
        steps: trace.step_count(),
        trace: trace_file_name(&q.id),
    }
}

/// One fresh agent session per question, in file order. Writes
/// `answers.jsonl` and `traces/<id>.jsonl` under `out_dir`. A failed run is
/// recorded and the next question proceeds.
pub fn run_eval(
    questions: &[EvalQuestion],
    graph: &CodeGraph,
    provider: &dyn LlmProvider,
    config: AgentConfig,
    out_dir: &Path,
) -> Result<Vec<AnswerRecord>, EvalError> {
    let traces_dir = out_dir.join("traces");
    fs::create_dir_all(&traces_dir).map_err(io_err(&traces_dir))?;
    let ctx = AgentContext::new(graph, provider, config);
    let mut answers = Vec::new();
    for q in questions {
        let trace = run(&q.text, &ctx, &mut |_| {});
        let record = answer_record(q, &trace);
        let path = out_dir.join(&record.trace);
        fs::write(&path, trace.to_jsonl()).map_err(io_err(&path))?;
        tracing::info!(question = %q.id, status = ?record.status, steps = record.steps, "question done");
        answers.push(record);
    }
    let path = out_dir.join("answers.jsonl");
    fs::write(&path, to_jsonl(&answers)).map_err(io_err(&path))?;
    Ok(answers)
}

/// Percentages to one decimal that sum to exactly 100.0, by largest
/// remainder over tenths of a percent. Returned in tenths.
pub fn percentages_tenths(counts: [usize; 3]) -> [u64; 3] {
    let total: u64 = counts.iter().map(|c| *c as u64).sum();
    if total == 0 {
        return [0; 3];
    }
    let mut tenths = [0u64; 3];
    let mut rems = [0u64; 3];
    for i in 0..3 {
        let scaled = counts[i] as u64 * 1000;
        tenths[i] = scaled / total;
        rems[i] = scaled % total;
    }
    let mut left = 1000 - tenths.iter().sum::<u64>();
    let mut order = [0usize, 1, 2];
    // Stable: equal remainders favour High, then Medium.
    order.sort_by(|a, b| rems[*b].cmp(&rems[*a]));
    for i in order {
        if left == 0 {
            break;
        }
        if rems[i] > 0 {
            tenths[i] += 1;
            left -= 1;
        }
    }
    tenths
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub high: f64,
    pub medium: f64,
    pub low: f64,
    pub counts: [usize; 3],
}

impl MetricRow {
    fn from_levels<'a>(metric: &str, levels: impl Iterator<Item = &'a Level>) -> Self {
        let mut counts = [0usize; 3];
        for l in levels {
            counts[*l as usize] += 1;
        }
        let t = percentages_tenths(counts);
        Self { metric: metric.to_string(), high: t[0] as f64 / 10.0, medium: t[1] as f64 / 10.0, low: t[2] as f64 / 10.0, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub rated: usize,
    pub rows: Vec<MetricRow>,
}

impl Table {
    fn from_ratings(ratings: &[&Rating]) -> Self {
        Self {
            rated: ratings.len(),
            rows: vec![
                MetricRow::from_levels("Accuracy", ratings.iter().map(|r| &r.accuracy)),
                MetricRow::from_levels("Completeness", ratings.iter().map(|r| &r.completeness)),
                MetricRow::from_levels("Coherence", ratings.iter().map(|r| &r.coherence)),
            ],
        }
    }

    pub fn row(&self, metric: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14}{:>10}{:>12}{:>9}", "Metric", "High (%)", "Medium (%)", "Low (%)")?;
        for r in &self.rows {
            writeln!(f, "{:<14}{:>10.1}{:>12.1}{:>9.1}", r.metric, r.high, r.medium, r.low)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Table,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_category: BTreeMap<Category, Table>,
    /// Answers without a rating.
    pub unrated: Vec<String>,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "All questions ({} rated)", self.overall.rated)?;
        write!(f, "{}", self.overall)?;
        for (c, t) in &self.by_category {
            writeln!(f, "\n{} ({} rated)", c.as_str(), t.rated)?;
            write!(f, "{t}")?;
        }
        for id in &self.unrated {
            writeln!(f, "warning: answer {id} has no rating")?;
        }
        Ok(())
    }
}

/// Percentage of ratings at each level per metric. Every rated question
/// must have an answer; unrated answers are reported as warnings.
pub fn report(ratings: &[Rating], answers: &[AnswerRecord], by_category: bool) -> Result<EvalReport, EvalError> {
    if ratings.is_empty() {
        return Err(EvalError::NoRatings);
    }
    let by_id: BTreeMap<&str, &AnswerRecord> = answers.iter().map(|a| (a.question_id.as_str(), a)).collect();
    for r in ratings {
        if !by_id.contains_key(r.question_id.as_str()) {
            return Err(EvalError::UnknownQuestionId(r.question_id.clone()));
        }
    }
    let rated: BTreeSet<&str> = ratings.iter().map(|r| r.question_id.as_str()).collect();
    let unrated: Vec<String> = answers.iter().filter(|a| !rated.contains(a.question_id.as_str())).map(|a| a.question_id.clone()).collect();
    for id in &unrated {
        tracing::warn!(question = %id, "answer has no rating");
    }
    let all: Vec<&Rating> = ratings.iter().collect();
    let mut cats = BTreeMap::new();
    if by_category {
        for c in Category::ALL {
            let subset: Vec<&Rating> = ratings.iter().filter(|r| by_id[r.question_id.as_str()].category == c).collect();
            if !subset.is_empty() {
                cats.insert(c, Table::from_ratings(&subset));
            }
        }
    }
    Ok(EvalReport { overall: Table::from_ratings(&all), by_category: cats, unrated })
}
