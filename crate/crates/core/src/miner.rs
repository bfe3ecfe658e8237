//! Margin-based hard-negative mining over an exact cosine ranking.
//!
//! For each query the pool is the corpus minus its related passages. The
//! pool is ranked by cosine, the first `exclude_top` ranks are skipped as
//! likely false negatives, and of the next ranks up to `top_k` only those
//! scoring strictly below both `abs_ceiling` and `rel_factor × s(q, d⁺)`
//! survive. The best `keep` survivors become the negatives; fewer than
//! `keep` discards the query.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::fnv1a64;
use crate::error::{Error, Result};
use crate::sample::{dot, Embedding, TaskType, TrainingSample};

const MATRIX_MAGIC: &[u8; 8] = b"EMBMAT01";
const UNIT_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinerConfig {
    pub top_k: usize,
    pub exclude_top: usize,
    pub abs_ceiling: f64,
    pub rel_factor: f64,
    pub keep: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            top_k: 100,
            exclude_top: 5,
            abs_ceiling: 0.8,
            rel_factor: 0.95,
            keep: 24,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.exclude_top >= self.top_k {
            return Err(Error::validation("exclude_top", "must be below top_k"));
        }
        if !(self.rel_factor > 0.0 && self.rel_factor <= 1.0) {
            return Err(Error::validation("rel_factor", "must lie in (0, 1]"));
        }
        if self.keep > self.top_k - self.exclude_top {
            return Err(Error::validation(
                "keep",
                "must not exceed top_k - exclude_top",
            ));
        }
        if !self.abs_ceiling.is_finite() {
            return Err(Error::validation("abs_ceiling", "must be finite"));
        }
        Ok(())
    }
}

/// Passage ids with their unit-norm vectors, one row each.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Rows must be unit norm within 1e-5; they are re-normalized exactly.
    pub fn new(ids: Vec<String>, dim: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * dim,
                actual: data.len(),
            });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::validation("ids", format!("duplicate id {id:?}")));
            }
        }
        if dim > 0 {
            for (row, id) in data.chunks_exact_mut(dim).zip(&ids) {
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("vector {id:?}")));
                }
                let norm = dot(row, row).sqrt();
                if (norm - 1.0).abs() > UNIT_TOL {
                    return Err(Error::validation(
                        "vector",
                        format!("{id:?} has norm {norm}, expected 1"),
                    ));
                }
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Ok(EmbeddingMatrix { ids, dim, data })
    }

    pub fn from_embeddings(entries: Vec<(String, Embedding)>) -> Result<Self> {
        let dim = entries.first().map_or(0, |(_, e)| e.dim());
        let mut ids = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dim);
        for (id, e) in entries {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: e.dim(),
                });
            }
            ids.push(id);
            data.extend_from_slice(&e);
        }
        Self::new(ids, dim, data)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// Binary layout: magic, `N` and `D` as little-endian u64, `N × D`
    /// little-endian f32 row-major, then each id as u32 byte length + UTF-8.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        out.write_all(MATRIX_MAGIC).map_err(io)?;
        out.write_all(&(self.len() as u64).to_le_bytes())
            .map_err(io)?;
        out.write_all(&(self.dim as u64).to_le_bytes())
            .map_err(io)?;
        for v in &self.data {
            out.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
        }
        for id in &self.ids {
            out.write_all(&(id.len() as u32).to_le_bytes())
                .map_err(io)?;
            out.write_all(id.as_bytes()).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Load either the binary layout or JSONL `{"id": .., "vector": [..]}`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(MATRIX_MAGIC) {
            Self::decode_binary(&bytes)
        } else {
            Self::decode_jsonl(&bytes)
        }
    }

    fn decode_binary(bytes: &[u8]) -> Result<Self> {
        let corrupt = |what: &str| Error::validation("embedding matrix", what.to_string());
        let mut cursor = MATRIX_MAGIC.len();
        let mut take = |n: usize| -> Result<&[u8]> {
            let slice = bytes
                .get(cursor..cursor + n)
                .ok_or_else(|| corrupt("truncated file"))?;
            cursor += n;
            Ok(slice)
        };
        let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let d = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let raw = take(
            n.checked_mul(d)
                .and_then(|x| x.checked_mul(4))
                .ok_or_else(|| corrupt("size overflow"))?,
        )?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let id = std::str::from_utf8(take(len)?).map_err(|_| corrupt("id is not UTF-8"))?;
            ids.push(id.to_string());
        }
        Self::new(ids, d, data)
    }

    fn decode_jsonl(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            id: String,
            vector: Vec<f64>,
        }
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (i, line) in BufReader::new(bytes).lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            match dim {
                None => dim = Some(row.vector.len()),
                Some(d) if d != row.vector.len() => {
                    return Err(Error::Parse {
                        line: i + 1,
                        reason: format!("vector has {} entries, expected {d}", row.vector.len()),
                    })
                }
                _ => {}
            }
            ids.push(row.id);
            data.extend(row.vector);
        }
        Self::new(ids, dim.unwrap_or(0), data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scored {
    pub index: usize,
    pub id: String,
    pub score: f64,
}

fn ranking_order(a: &(usize, f64), b: &(usize, f64), ids: &[String]) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(&ids[b.0]))
}

fn rank_pool(
    query: &[f64],
    corpus: &EmbeddingMatrix,
    k: usize,
    skip: &dyn Fn(usize) -> bool,
) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = (0..corpus.len())
        .filter(|&i| !skip(i))
        .map(|i| (i, dot(query, corpus.row(i))))
        .collect();
    let k = k.min(scored.len());
    if k == 0 {
        return Vec::new();
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, |a, b| ranking_order(a, b, &corpus.ids));
        scored.truncate(k);
    }
    scored.sort_unstable_by(|a, b| ranking_order(a, b, &corpus.ids));
    scored
}

/// Exact top-k by cosine, descending, ties by ascending id.
pub fn top_k(query: &[f64], corpus: &EmbeddingMatrix, k: usize) -> Result<Vec<Scored>> {
    if query.len() != corpus.dim {
        return Err(Error::DimensionMismatch {
            expected: corpus.dim,
            actual: query.len(),
        });
    }
    if k > corpus.len() {
        return Err(Error::validation(
            "k",
            format!("{k} exceeds corpus size {}", corpus.len()),
        ));
    }
    Ok(rank_pool(query, corpus, k, &|_| false)
        .into_iter()
        .map(|(index, score)| Scored {
            index,
            id: corpus.ids[index].clone(),
            score,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DiscardReason {
    /// Fewer than `keep` candidates passed the filters.
    TooFewSurvivors { survivors: usize, required: usize },
    /// Nothing left after excluding the top ranks.
    EmptyCandidates,
    /// The query has no related passage to use as positive.
    NoPositive,
    /// NLI premise without an entailed hypothesis.
    NoEntailedHypothesis,
    /// Multi-class record whose class has no other member.
    SingletonClass,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MineOutcome {
    Negatives(Vec<Scored>),
    Discard(DiscardReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MineResult {
    pub outcome: MineOutcome,
    /// Set when the pool held fewer than `top_k` passages.
    pub clamped: bool,
}

/// Mine negatives for one query. `excluded(i)` marks corpus rows that are
/// related to the query and may never be returned.
pub fn mine(
    query: &[f64],
    positive_score: f64,
    corpus: &EmbeddingMatrix,
    excluded: &dyn Fn(usize) -> bool,
    config: &MinerConfig,
) -> Result<MineResult> {
    config.validate()?;
    if query.len() != corpus.dim {
        return Err(Error::DimensionMismatch {
            expected: corpus.dim,
            actual: query.len(),
        });
    }
    if !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&positive_score) {
        return Err(Error::validation(
            "positive_score",
            format!("{positive_score} is outside [-1, 1]"),
        ));
    }
    let ranked = rank_pool(query, corpus, config.top_k, excluded);
    let clamped = ranked.len() < config.top_k;
    if ranked.len() <= config.exclude_top {
        return Ok(MineResult {
            outcome: MineOutcome::Discard(DiscardReason::EmptyCandidates),
            clamped,
        });
    }
    let margin = config.rel_factor * positive_score;
    let survivors: Vec<(usize, f64)> = ranked[config.exclude_top..]
        .iter()
        .copied()
        .filter(|&(_, s)| s < config.abs_ceiling && s < margin)
        .collect();
    let outcome = if survivors.len() < config.keep {
        MineOutcome::Discard(DiscardReason::TooFewSurvivors {
            survivors: survivors.len(),
            required: config.keep,
        })
    } else {
        MineOutcome::Negatives(
            survivors[..config.keep]
                .iter()
                .map(|&(index, score)| Scored {
                    index,
                    id: corpus.ids[index].clone(),
                    score,
                })
                .collect(),
        )
    };
    Ok(MineResult { outcome, clamped })
}

/// A query ready for mining: its teacher vector and related passage ids.
#[derive(Debug, Clone)]
pub struct MiningQuery {
    pub id: String,
    pub text: String,
    pub vector: Embedding,
    pub related: Vec<String>,
}

/// Where mined samples come from and what they are labeled as.
#[derive(Debug, Clone)]
pub struct MiningJob<'a> {
    pub source: &'a str,
    pub instruction: &'a str,
    pub seed: u64,
    pub config: MinerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardEntry {
    pub query_id: String,
    #[serde(flatten)]
    pub reason: DiscardReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscardReport {
    pub kept: usize,
    pub discarded: usize,
    /// Some query saw a pool smaller than `top_k`.
    pub clamped: bool,
    pub entries: Vec<DiscardEntry>,
}

impl DiscardReport {
    pub fn merge(&mut self, other: DiscardReport) {
        self.kept += other.kept;
        self.discarded += other.discarded;
        self.clamped |= other.clamped;
        self.entries.extend(other.entries);
    }
}

#[derive(Debug, Clone, Default)]
pub struct MinedDataset {
    pub samples: Vec<TrainingSample>,
    pub report: DiscardReport,
}

/// Mine `config.keep` negatives for a query whose positive is corpus row
/// `positive`. Rows flagged by `excluded`, and rows sharing the positive's
/// text, are never candidates.
pub(crate) fn mine_for_positive<'t>(
    query: &[f64],
    positive: usize,
    corpus: &EmbeddingMatrix,
    texts: &dyn Fn(usize) -> &'t str,
    excluded: &dyn Fn(usize) -> bool,
    config: &MinerConfig,
) -> Result<MineResult> {
    let positive_score = dot(query, corpus.row(positive)).clamp(-1.0, 1.0);
    let positive_text = texts(positive);
    let skip = |i: usize| i == positive || excluded(i) || texts(i) == positive_text;
    mine(query, positive_score, corpus, &skip, config)
}

/// Uniform pick among `len` items from the per-key stream of `seed`.
pub(crate) fn keyed_choice(seed: u64, key: &str, len: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(key.as_bytes()));
    rng.gen_range(0..len)
}

/// Sample a positive per query, then mine its negatives. Output order
/// follows input order whatever the degree of parallelism.
pub fn mine_dataset(
    queries: &[MiningQuery],
    corpus: &EmbeddingMatrix,
    passage_text: &HashMap<String, String>,
    job: &MiningJob<'_>,
) -> Result<MinedDataset> {
    job.config.validate()?;
    let mut seen = HashSet::with_capacity(queries.len());
    for q in queries {
        if !seen.insert(q.id.as_str()) {
            return Err(Error::validation(
                "queries",
                format!("duplicate query id {:?}", q.id),
            ));
        }
    }
    let index = corpus.index_of();
    for q in queries {
        for r in &q.related {
            if !index.contains_key(r.as_str()) {
                return Err(Error::validation(
                    "relations",
                    format!("query {:?} references unknown passage {r:?}", q.id),
                ));
            }
        }
    }
    if let Some(id) = corpus.ids.iter().find(|id| !passage_text.contains_key(*id)) {
        return Err(Error::validation(
            "passages",
            format!("no text for passage {id:?}"),
        ));
    }
    let text_of = |i: usize| -> Result<&str> {
        let id = &corpus.ids[i];
        passage_text
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::validation("passages", format!("no text for passage {id:?}")))
    };

    let results: Vec<Result<(Option<TrainingSample>, Option<DiscardEntry>, bool)>> = queries
        .par_iter()
        .map(|q| {
            if q.related.is_empty() {
                let entry = DiscardEntry {
                    query_id: q.id.clone(),
                    reason: DiscardReason::NoPositive,
                };
                return Ok((None, Some(entry), false));
            }
            let pick = keyed_choice(job.seed, &q.id, q.related.len());
            let pos_idx = index[q.related[pick].as_str()];
            let positive = text_of(pos_idx)?;
            let related: HashSet<usize> = q.related.iter().map(|r| index[r.as_str()]).collect();
            let texts = |i: usize| passage_text.get(&corpus.ids[i]).map_or("", String::as_str);
            let mined = mine_for_positive(
                &q.vector,
                pos_idx,
                corpus,
                &texts,
                &|i| related.contains(&i),
                &job.config,
            )?;
            match mined.outcome {
                MineOutcome::Negatives(negs) => {
                    let negatives = negs
                        .iter()
                        .map(|s| text_of(s.index).map(str::to_string))
                        .collect::<Result<Vec<_>>>()?;
                    let sample = TrainingSample {
                        source: job.source.to_string(),
                        task: TaskType::Retrieval,
                        instruction: job.instruction.to_string(),
                        query: q.text.clone(),
                        positive: positive.to_string(),
                        negatives,
                    };
                    Ok((Some(sample), None, mined.clamped))
                }
                MineOutcome::Discard(reason) => Ok((
                    None,
                    Some(DiscardEntry {
                        query_id: q.id.clone(),
                        reason,
                    }),
                    mined.clamped,
                )),
            }
        })
        .collect();

    let mut out = MinedDataset::default();
    for r in results {
        let (sample, discard, clamped) = r?;
        out.report.clamped |= clamped;
        if let Some(s) = sample {
            out.samples.push(s);
            out.report.kept += 1;
        }
        if let Some(d) = discard {
            out.report.entries.push(d);
            out.report.discarded += 1;
        }
    }
    Ok(out)
}
