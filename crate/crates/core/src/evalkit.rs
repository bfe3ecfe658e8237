//! Evaluation for the four task families: retrieval (nDCG@10, recall@1,
//! recall@10), STS (Spearman), classification (nearest label text) and
//! clustering (k-means + V-measure).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::{LabeledRecord, StsRecord, TextRecord};
use crate::error::{Error, Result};
use crate::miner::{top_k, EmbeddingMatrix};
use crate::sample::{dot, format_query, read_jsonl, Embedding, TextEmbedder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalKind {
    Retrieval,
    Sts,
    Classification,
    Clustering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qrel {
    pub query_id: String,
    pub doc_id: String,
    #[serde(default = "default_grade")]
    pub grade: f64,
}

fn default_grade() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub ndcg_at_10: f64,
    pub recall_at_1: f64,
    pub recall_at_10: f64,
    pub evaluated: usize,
    /// Queries without any relevant document.
    pub excluded: Vec<String>,
}

fn embed_texts(model: &dyn TextEmbedder, texts: &[String]) -> Result<Vec<Embedding>> {
    texts.par_iter().map(|t| model.embed(t)).collect()
}

fn instructed(instruction: &str, texts: impl Iterator<Item = String>) -> Result<Vec<String>> {
    texts.map(|t| format_query(instruction, &t)).collect()
}

/// DCG over the first `k` gains with log2 discounts.
pub fn dcg(gains: &[f64], k: usize) -> f64 {
    gains
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, g)| g / ((r + 2) as f64).log2())
        .sum()
}

pub fn eval_retrieval(
    queries: &[TextRecord],
    corpus: &[TextRecord],
    qrels: &[Qrel],
    model: &dyn TextEmbedder,
    instruction: &str,
) -> Result<RetrievalMetrics> {
    let doc_ids: HashSet<&str> = corpus.iter().map(|d| d.id.as_str()).collect();
    let query_ids: HashSet<&str> = queries.iter().map(|q| q.id.as_str()).collect();
    let mut relevant: HashMap<&str, HashMap<&str, f64>> = HashMap::new();
    for r in qrels {
        if !doc_ids.contains(r.doc_id.as_str()) || !query_ids.contains(r.query_id.as_str()) {
            return Err(Error::validation(
                "qrels",
                format!("unknown pair ({:?}, {:?})", r.query_id, r.doc_id),
            ));
        }
        if r.grade > 0.0 {
            relevant
                .entry(r.query_id.as_str())
                .or_default()
                .insert(r.doc_id.as_str(), r.grade);
        }
    }
    let doc_vecs = embed_texts(
        model,
        &corpus.iter().map(|d| d.text.clone()).collect::<Vec<_>>(),
    )?;
    let matrix = EmbeddingMatrix::from_embeddings(
        corpus.iter().map(|d| d.id.clone()).zip(doc_vecs).collect(),
    )?;
    let (kept, excluded): (Vec<&TextRecord>, Vec<&TextRecord>) = queries
        .iter()
        .partition(|q| relevant.contains_key(q.id.as_str()));
    let query_vecs = embed_texts(
        model,
        &instructed(instruction, kept.iter().map(|q| q.text.clone()))?,
    )?;
    let k = 10.min(matrix.len());
    let per_query: Vec<(f64, f64, f64)> = kept
        .iter()
        .zip(&query_vecs)
        .map(|(q, v)| {
            let rel = &relevant[q.id.as_str()];
            let ranked = top_k(v, &matrix, k)?;
            let gains: Vec<f64> = ranked
                .iter()
                .map(|s| rel.get(s.id.as_str()).copied().unwrap_or(0.0))
                .collect();
            let mut ideal: Vec<f64> = rel.values().copied().collect();
            ideal.sort_by(|a, b| b.total_cmp(a));
            let ndcg = dcg(&gains, 10) / dcg(&ideal, 10);
            let hits = |n: usize| gains.iter().take(n).filter(|g| **g > 0.0).count() as f64;
            Ok((
                ndcg,
                hits(1) / rel.len() as f64,
                hits(10) / rel.len() as f64,
            ))
        })
        .collect::<Result<_>>()?;
    let n = per_query.len().max(1) as f64;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| per_query.iter().map(f).sum::<f64>() / n;
    Ok(RetrievalMetrics {
        ndcg_at_10: mean(|t| t.0),
        recall_at_1: mean(|t| t.1),
        recall_at_10: mean(|t| t.2),
        evaluated: per_query.len(),
        excluded: excluded.iter().map(|q| q.id.clone()).collect(),
    })
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

pub fn spearman(predicted: &[f64], gold: &[f64]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            actual: predicted.len(),
        });
    }
    if predicted.len() < 3 {
        return Err(Error::validation("pairs", "need at least 3"));
    }
    pearson(&average_ranks(predicted), &average_ranks(gold))
        .ok_or_else(|| Error::validation("scores", "constant ranking, correlation undefined"))
}

/// Spearman between pair cosines and gold scores. Both sentences carry the
/// instruction.
pub fn eval_sts(pairs: &[StsRecord], model: &dyn TextEmbedder, instruction: &str) -> Result<f64> {
    if pairs.len() < 3 {
        return Err(Error::validation("pairs", "need at least 3"));
    }
    let a = embed_texts(
        model,
        &instructed(instruction, pairs.iter().map(|p| p.sentence_a.clone()))?,
    )?;
    let b = embed_texts(
        model,
        &instructed(instruction, pairs.iter().map(|p| p.sentence_b.clone()))?,
    )?;
    let predicted: Vec<f64> = a.iter().zip(&b).map(|(x, y)| dot(x, y)).collect();
    let gold: Vec<f64> = pairs.iter().map(|p| p.score).collect();
    spearman(&predicted, &gold)
}

/// Accuracy of predicting each record's label as the label text whose
/// embedding is closest to the instructed record text.
pub fn eval_classification(
    records: &[LabeledRecord],
    label_texts: &[String],
    model: &dyn TextEmbedder,
    instruction: &str,
) -> Result<f64> {
    if label_texts.len() < 2 {
        return Err(Error::validation("label_texts", "need at least 2 labels"));
    }
    let mut position = HashMap::new();
    for (i, l) in label_texts.iter().enumerate() {
        if position.insert(l.as_str(), i).is_some() {
            return Err(Error::validation(
                "label_texts",
                format!("duplicate label {l:?}"),
            ));
        }
    }
    let gold = records
        .iter()
        .map(|r| {
            position.get(r.label_text.as_str()).copied().ok_or_else(|| {
                Error::validation(
                    "records",
                    format!("label {:?} not in label set", r.label_text),
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if records.is_empty() {
        return Err(Error::validation("records", "no records"));
    }
    let labels = embed_texts(model, label_texts)?;
    let texts = embed_texts(
        model,
        &instructed(instruction, records.iter().map(|r| r.text.clone()))?,
    )?;
    let correct = texts
        .iter()
        .zip(&gold)
        .filter(|(v, &g)| predict_label(v, &labels) == g)
        .count();
    Ok(correct as f64 / records.len() as f64)
}

/// Index of the most similar label; the lowest index wins ties.
pub fn predict_label(v: &[f64], labels: &[Embedding]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, l) in labels.iter().enumerate() {
        let s = dot(v, l);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub text: String,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Homogeneity, completeness and their harmonic mean.
pub fn v_measure(gold: &[usize], predicted: &[usize]) -> VMeasure {
    let n = gold.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut by_gold: BTreeMap<usize, usize> = BTreeMap::new();
    let mut by_pred: BTreeMap<usize, usize> = BTreeMap::new();
    for (&c, &k) in gold.iter().zip(predicted) {
        *joint.entry((c, k)).or_default() += 1;
        *by_gold.entry(c).or_default() += 1;
        *by_pred.entry(k).or_default() += 1;
    }
    let h_c = entropy(by_gold.values().copied(), n);
    let h_k = entropy(by_pred.values().copied(), n);
    let mut h_c_given_k = 0.0;
    let mut h_k_given_c = 0.0;
    for (&(c, k), &nck) in &joint {
        let p = nck as f64 / n;
        h_c_given_k -= p * (nck as f64 / by_pred[&k] as f64).ln();
        h_k_given_c -= p * (nck as f64 / by_gold[&c] as f64).ln();
    }
    let homogeneity = if h_c == 0.0 {
        1.0
    } else {
        1.0 - h_c_given_k / h_c
    };
    let completeness = if h_k == 0.0 {
        1.0
    } else {
        1.0 - h_k_given_c / h_k
    };
    let v = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    VMeasure {
        homogeneity,
        completeness,
        v_measure: v,
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding then Lloyd iterations; returns (assignment, inertia).
fn kmeans_once(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let n = points.len();
    let mut centers: Vec<Vec<f64>> = vec![points[rng.gen_range(0..n)].clone()];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total == 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut t = rng.gen::<f64>() * total;
            d.iter()
                .position(|&x| {
                    t -= x;
                    t <= 0.0
                })
                .unwrap_or(n - 1)
        };
        centers.push(points[next].clone());
    }
    let mut assign = vec![usize::MAX; n];
    for _ in 0..300 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b])))
                .unwrap();
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            for (d, x) in center.iter_mut().enumerate() {
                *x = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&assign)
        .map(|(p, &a)| sq_dist(p, &centers[a]))
        .sum();
    (assign, inertia)
}

/// Best-inertia assignment over `restarts` seeded k-means runs.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || points.len() < k {
        return Err(Error::validation(
            "records",
            format!("{} points cannot form {k} clusters", points.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..restarts.max(1) {
        let (assign, inertia) = kmeans_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((assign, inertia));
        }
    }
    Ok(best.unwrap().0)
}

pub const KMEANS_RESTARTS: usize = 10;

pub fn eval_clustering(
    records: &[ClusterRecord],
    model: &dyn TextEmbedder,
    instruction: &str,
    seed: u64,
) -> Result<VMeasure> {
    let mut classes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        let next = classes.len();
        classes.entry(r.label.as_str()).or_insert(next);
    }
    if classes.len() < 2 {
        return Err(Error::validation("records", "need at least 2 gold classes"));
    }
    let gold: Vec<usize> = records.iter().map(|r| classes[r.label.as_str()]).collect();
    let vecs = embed_texts(
        model,
        &instructed(instruction, records.iter().map(|r| r.text.clone()))?,
    )?;
    let points: Vec<Vec<f64>> = vecs.into_iter().map(Embedding::into_inner).collect();
    let predicted = kmeans(&points, classes.len(), KMEANS_RESTARTS, seed)?;
    Ok(v_measure(&gold, &predicted))
}

/// `task.json` of a task bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTask {
    pub name: String,
    pub kind: EvalKind,
    pub instruction: String,
    #[serde(default)]
    pub seed: u64,
}

/// Run a bundle: `task.json` plus `queries.jsonl`/`corpus.jsonl`/
/// `qrels.jsonl` (retrieval), `pairs.jsonl` (sts) or `records.jsonl`
/// (classification, clustering).
pub fn eval_bundle(dir: &Path, model: &dyn TextEmbedder) -> Result<Vec<MetricReport>> {
    let task_path = dir.join("task.json");
    let task: EvalTask = serde_json::from_str(
        &std::fs::read_to_string(&task_path).map_err(|e| Error::io(&task_path, e))?,
    )?;
    let report = |metric: &str, value: f64| MetricReport {
        task: task.name.clone(),
        metric: metric.to_string(),
        value,
    };
    Ok(match task.kind {
        EvalKind::Retrieval => {
            let queries: Vec<TextRecord> = read_jsonl(&dir.join("queries.jsonl"))?;
            let corpus: Vec<TextRecord> = read_jsonl(&dir.join("corpus.jsonl"))?;
            let qrels: Vec<Qrel> = read_jsonl(&dir.join("qrels.jsonl"))?;
            let m = eval_retrieval(&queries, &corpus, &qrels, model, &task.instruction)?;
            vec![
                report("ndcg@10", m.ndcg_at_10),
                report("recall@1", m.recall_at_1),
                report("recall@10", m.recall_at_10),
            ]
        }
        EvalKind::Sts => {
            let pairs: Vec<StsRecord> = read_jsonl(&dir.join("pairs.jsonl"))?;
            vec![report(
                "spearman",
                eval_sts(&pairs, model, &task.instruction)?,
            )]
        }
        EvalKind::Classification => {
            let records: Vec<LabeledRecord> = read_jsonl(&dir.join("records.jsonl"))?;
            let labels: BTreeMap<i64, String> = records
                .iter()
                .map(|r| (r.label_id, r.label_text.clone()))
                .collect();
            let labels: Vec<String> = labels.into_values().collect();
            vec![report(
                "accuracy",
                eval_classification(&records, &labels, model, &task.instruction)?,
            )]
        }
        EvalKind::Clustering => {
            let records: Vec<ClusterRecord> = read_jsonl(&dir.join("records.jsonl"))?;
            let v = eval_clustering(&records, model, &task.instruction, task.seed)?;
            vec![report("v_measure", v.v_measure)]
        }
    })
}

/// Aligned plain-text table of metric reports.
pub fn render_table(reports: &[MetricReport]) -> String {
    let tw = reports
        .iter()
        .map(|r| r.task.len())
        .max()
        .unwrap_or(0)
        .max(4);
    let mw = reports
        .iter()
        .map(|r| r.metric.len())
        .max()
        .unwrap_or(0)
        .max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<tw$}  {:<mw$}  {:>8}", "task", "metric", "value");
    for r in reports {
        let _ = writeln!(out, "{:<tw$}  {:<mw$}  {:>8.4}", r.task, r.metric, r.value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 20.0, 5.0]),
            vec![2.0, 3.5, 3.5, 1.0]
        );
    }

    #[test]
    fn spearman_extremes() {
        let g = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&[0.1, 0.2, 0.3, 0.9], &g).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[0.9, 0.3, 0.2, 0.1], &g).unwrap() + 1.0).abs() < 1e-12);
        assert!(spearman(&[0.5; 4], &g).is_err());
        assert!(spearman(&[0.1, 0.2], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn v_measure_extremes() {
        let gold = [0, 0, 0, 1, 1, 1];
        assert!((v_measure(&gold, &[5, 5, 5, 2, 2, 2]).v_measure - 1.0).abs() < 1e-12);
        let single = v_measure(&gold, &[0; 6]);
        assert_eq!(single.homogeneity, 0.0);
        assert_eq!(single.v_measure, 0.0);
    }

    #[test]
    fn kmeans_separates_orthogonal_groups() {
        let mut points = Vec::new();
        for c in 0..3 {
            for _ in 0..5 {
                let mut v = vec![0.0; 3];
                v[c] = 1.0;
                points.push(v);
            }
        }
        let assign = kmeans(&points, 3, 10, 4).unwrap();
        let gold: Vec<usize> = (0..15).map(|i| i / 5).collect();
        assert!((v_measure(&gold, &assign).v_measure - 1.0).abs() < 1e-12);
        assert!(kmeans(&points[..2], 3, 10, 4).is_err());
    }

    #[test]
    fn dcg_matches_definition() {
        let d = dcg(&[1.0, 0.0, 1.0], 10);
        assert!((d - (1.0 / 2f64.log2() + 1.0 / 4f64.log2())).abs() < 1e-15);
    }

    #[test]
    fn table_is_aligned() {
        let t = render_table(&[
            MetricReport {
                task: "a".into(),
                metric: "ndcg@10".into(),
                value: 0.5,
            },
            MetricReport {
                task: "longer".into(),
                metric: "r@1".into(),
                value: 1.0,
            },
        ]);
        let widths: HashSet<usize> = t.lines().map(str::len).collect();
        assert_eq!(widths.len(), 1, "{t}");
    }
}
