//! Shared domain types: the unified training sample, instruction templating,
//! unit-norm embeddings and cosine similarity, plus the JSONL sample format.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Negative pool size for retrieval and clustering samples.
pub const RETRIEVAL_NEGATIVES: usize = 24;
/// Negative pool size for classification samples.
pub const CLASSIFICATION_NEGATIVES: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    Retrieval,
    Classification,
    Clustering,
}

impl TaskType {
    /// Number of hard negatives every sample of this task carries.
    pub fn negative_pool(self) -> usize {
        match self {
            TaskType::Retrieval | TaskType::Clustering => RETRIEVAL_NEGATIVES,
            TaskType::Classification => CLASSIFICATION_NEGATIVES,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::Retrieval => "retrieval",
            TaskType::Classification => "classification",
            TaskType::Clustering => "clustering",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One (instructed query, positive, hard negatives) tuple.
///
/// The query is stored raw; [`TrainingSample::instructed_query`] applies the
/// template. Passages never receive a prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub source: String,
    pub task: TaskType,
    pub instruction: String,
    pub query: String,
    pub positive: String,
    pub negatives: Vec<String>,
}

impl TrainingSample {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.instruction.is_empty() {
            return Err("instruction is empty".into());
        }
        if self.query.is_empty() {
            return Err("query is empty".into());
        }
        if self.positive.is_empty() {
            return Err("positive is empty".into());
        }
        let want = self.task.negative_pool();
        if self.negatives.len() != want {
            return Err(format!(
                "{} sample has {} negatives, expected {}",
                self.task,
                self.negatives.len(),
                want
            ));
        }
        if self.negatives.iter().any(|n| n == &self.positive) {
            return Err("positive appears among negatives".into());
        }
        Ok(())
    }

    pub fn instructed_query(&self) -> String {
        template(&self.instruction, &self.query)
    }
}

fn template(instruction: &str, query: &str) -> String {
    format!("Instruct: {instruction}\nQuery: {query}")
}

/// Prefix a query with its task instruction.
pub fn format_query(instruction: &str, query: &str) -> Result<String> {
    if instruction.is_empty() {
        return Err(Error::validation("instruction", "must be non-empty"));
    }
    if query.is_empty() {
        return Err(Error::validation("query", "must be non-empty"));
    }
    Ok(template(instruction, query))
}

/// A unit-norm dense vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// L2-normalize `values`. Fails on non-finite entries or a zero vector.
    pub fn normalize(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        if !norm.is_finite() {
            return Err(Error::NonFinite("embedding norm".into()));
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Embedding(values))
    }

    /// Wrap values that are already unit norm (checked to `tol`).
    pub fn from_unit(values: Vec<f64>, tol: f64) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > tol {
            return Err(Error::validation(
                "embedding",
                format!("norm {norm} is not 1 within {tol}"),
            ));
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Embedding {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cosine input".into()));
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Anything that maps text to an embedding: the trainable encoder, a
/// lookup of precomputed teacher vectors, or a test double.
pub trait TextEmbedder: Sync {
    fn embed(&self, text: &str) -> Result<Embedding>;
}

impl<F> TextEmbedder for F
where
    F: Fn(&str) -> Result<Embedding> + Sync,
{
    fn embed(&self, text: &str) -> Result<Embedding> {
        self(text)
    }
}

/// Precomputed vectors keyed by the exact text they embed.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedEmbedder {
    pub by_text: std::collections::HashMap<String, Embedding>,
}

impl TextEmbedder for PrecomputedEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding> {
        self.by_text
            .get(text)
            .cloned()
            .ok_or_else(|| Error::validation("embedding", format!("no vector for text {text:?}")))
    }
}

/// Dataset name → instruction. Loaded from JSON; the default carries a few
/// common retrieval, classification and clustering instructions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstructionMap(pub BTreeMap<String, String>);

impl InstructionMap {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn get(&self, dataset: &str) -> Option<&str> {
        self.0.get(dataset).map(String::as_str)
    }
}

impl Default for InstructionMap {
    fn default() -> Self {
        let entries = [
            ("qa", "Given a question, retrieve passages that answer the question."),
            ("web", "Given a web search query, retrieve relevant passages that answer the query."),
            ("nli", "Given a premise, retrieve hypotheses that are entailed by the premise."),
            ("summarization", "Given a news summary, retrieve the original news article."),
            ("duplicates", "Given a question, retrieve questions that are semantically equivalent."),
            ("sts", "Retrieve semantically similar text."),
            ("polarity", "Classify the given Amazon review into positive or negative sentiment."),
            ("toxicity", "Classify the given comments as either toxic or not toxic."),
            ("emotion", "Classify the emotion expressed in the given Twitter message into one of the six emotions: anger, fear, joy, love, sadness, and surprise."),
            ("topic", "Identify the topic or theme of the given news articles."),
        ];
        InstructionMap(
            entries
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }
}

/// Read one JSON value per non-blank line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Read a JSONL sample file. Blank lines are skipped; line numbers in
/// errors are 1-based physical lines.
pub fn read_samples(path: &Path) -> Result<Vec<TrainingSample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: TrainingSample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        sample.validate().map_err(|reason| Error::InvalidSample {
            index: samples.len(),
            reason: format!("line {}: {reason}", i + 1),
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn write_samples(samples: &[TrainingSample], path: &Path) -> Result<()> {
    for (index, s) in samples.iter().enumerate() {
        s.validate()
            .map_err(|reason| Error::InvalidSample { index, reason })?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn retrieval_sample() -> TrainingSample {
        TrainingSample {
            source: "toy".into(),
            task: TaskType::Retrieval,
            instruction: "Retrieve semantically similar text.".into(),
            query: "a man is playing guitar".into(),
            positive: "someone plays a guitar".into(),
            negatives: (0..24).map(|i| format!("neg {i}")).collect(),
        }
    }

    #[test]
    fn template_matches_expected_layout() {
        assert_eq!(
            format_query(
                "Retrieve semantically similar text.",
                "a man is playing guitar"
            )
            .unwrap(),
            "Instruct: Retrieve semantically similar text.\nQuery: a man is playing guitar"
        );
        assert_eq!(format_query("X", "Y").unwrap(), "Instruct: X\nQuery: Y");
    }

    #[test]
    fn template_length_is_sum_of_parts() {
        let instruction = "Given a question, retrieve passages that answer the question.";
        let query = "what is bgp";
        let out = format_query(instruction, query).unwrap();
        // "Instruct: " + instruction + "\n" + "Query: " + query
        let expected = "Instruct: ".chars().count()
            + instruction.chars().count()
            + 1
            + "Query: ".chars().count()
            + query.chars().count();
        assert_eq!(out.chars().count(), expected);
        assert_eq!(expected, 90);
    }

    #[test]
    fn empty_fields_are_named() {
        match format_query("", "q") {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "instruction"),
            other => panic!("unexpected {other:?}"),
        }
        match format_query("i", "") {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "query"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cosine_edge_cases() {
        let e = Embedding::normalize(vec![0.3, -0.4, 1.2]).unwrap();
        let neg: Vec<f64> = e.iter().map(|v| -v).collect();
        assert!((cosine(&e, &e).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&e, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(
            cosine(&[1.0, 0.0], &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNorm)
        ));
        assert!(cosine(&[f64::NAN, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn normalize_rejects_zero_and_nan() {
        assert!(matches!(
            Embedding::normalize(vec![0.0; 4]),
            Err(Error::ZeroNorm)
        ));
        assert!(Embedding::normalize(vec![1.0, f64::INFINITY]).is_err());
        let e = Embedding::normalize(vec![3.0, 4.0]).unwrap();
        assert!((l2_norm(&e) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sample_invariants() {
        let mut s = retrieval_sample();
        assert!(s.validate().is_ok());
        s.negatives.pop();
        assert!(s.validate().is_err());
        let mut s = retrieval_sample();
        s.negatives[3] = s.positive.clone();
        assert!(s.validate().is_err());
        let mut s = retrieval_sample();
        s.task = TaskType::Classification;
        s.negatives = vec!["negative".into()];
        assert!(s.validate().is_ok());
    }

    #[test]
    fn task_serializes_lowercase() {
        let json = serde_json::to_string(&retrieval_sample()).unwrap();
        assert!(json.contains("\"task\":\"retrieval\""));
    }

    #[test]
    fn short_negative_list_rejected_at_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let good = serde_json::to_string(&retrieval_sample()).unwrap();
        let mut bad = retrieval_sample();
        bad.negatives.truncate(23);
        let bad = serde_json::to_string(&bad).unwrap();
        std::fs::write(&path, format!("{good}\n{good}\n{bad}\n")).unwrap();
        let err = read_samples(&path).unwrap_err();
        match err {
            Error::InvalidSample { index, reason } => {
                assert_eq!(index, 2);
                assert!(reason.contains("line 3"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let good = serde_json::to_string(&retrieval_sample()).unwrap();
        std::fs::write(&path, format!("{good}\n{{not json\n")).unwrap();
        assert!(matches!(
            read_samples(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_file_reads_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_samples(&path).unwrap().is_empty());
    }
}
