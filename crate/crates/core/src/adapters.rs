//! Raw dataset families → unified [`TrainingSample`]s.
//!
//! Retrieval-style families (QA, summarization, NLI, STS, duplicate
//! questions) are mined against a teacher embedder and emitted as
//! [`TaskType::Retrieval`]. Binary classification pairs each text with its
//! label text and the other label text. Multi-class and clustering data draw
//! a same-class positive and 24 out-of-class negatives and are emitted as
//! [`TaskType::Clustering`].

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::fnv1a64;
use crate::error::{Error, Result};
use crate::miner::{
    keyed_choice, mine_dataset, mine_for_positive, DiscardEntry, DiscardReason, DiscardReport,
    EmbeddingMatrix, MineOutcome, MinedDataset, MinerConfig, MiningJob, MiningQuery,
};
use crate::sample::{format_query, TaskType, TextEmbedder, TrainingSample};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub query_id: String,
    pub passage_id: String,
}

/// A query and one passage relevant to it. Summaries map to the query side
/// and articles to the passage side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    #[serde(alias = "summary")]
    pub query: String,
    #[serde(alias = "article")]
    pub passage: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Neutral,
    Contradiction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliRecord {
    pub premise: String,
    pub hypothesis: String,
    pub label: NliLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsRecord {
    pub sentence_a: String,
    pub sentence_b: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub question_a: String,
    pub question_b: String,
    pub is_duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub text: String,
    pub label_id: i64,
    pub label_text: String,
}

/// Inclusive lower bound on STS scores that form a query-positive pair.
pub const STS_PAIR_THRESHOLD: f64 = 4.0;

/// Shared settings for the mined families.
#[derive(Debug, Clone)]
pub struct AdaptJob<'a> {
    pub source: &'a str,
    pub instruction: &'a str,
    pub seed: u64,
    pub miner: MinerConfig,
}

impl<'a> AdaptJob<'a> {
    fn mining(&self) -> MiningJob<'a> {
        MiningJob {
            source: self.source,
            instruction: self.instruction,
            seed: self.seed,
            config: self.miner,
        }
    }
}

fn embed_all(
    teacher: &dyn TextEmbedder,
    texts: &[String],
) -> Result<Vec<crate::sample::Embedding>> {
    texts.par_iter().map(|t| teacher.embed(t)).collect()
}

/// Deduplicate pairs into query and passage tables keyed by text.
pub fn pairs_to_relations(
    pairs: &[PairRecord],
) -> (Vec<TextRecord>, Vec<TextRecord>, Vec<Relation>) {
    let mut queries: Vec<TextRecord> = Vec::new();
    let mut passages: Vec<TextRecord> = Vec::new();
    let mut qid: HashMap<&str, String> = HashMap::new();
    let mut pid: HashMap<&str, String> = HashMap::new();
    let mut relations = Vec::new();
    let mut seen = HashSet::new();
    for p in pairs {
        let q = qid
            .entry(p.query.as_str())
            .or_insert_with(|| {
                let id = format!("q{}", queries.len());
                queries.push(TextRecord {
                    id: id.clone(),
                    text: p.query.clone(),
                });
                id
            })
            .clone();
        let d = pid
            .entry(p.passage.as_str())
            .or_insert_with(|| {
                let id = format!("p{}", passages.len());
                passages.push(TextRecord {
                    id: id.clone(),
                    text: p.passage.clone(),
                });
                id
            })
            .clone();
        if seen.insert((q.clone(), d.clone())) {
            relations.push(Relation {
                query_id: q,
                passage_id: d,
            });
        }
    }
    (queries, passages, relations)
}

/// Queries, passages and a relation list: positive sampled per query,
/// negatives mined from the passage corpus.
pub fn adapt_retrieval(
    queries: &[TextRecord],
    passages: &[TextRecord],
    relations: &[Relation],
    teacher: &dyn TextEmbedder,
    job: &AdaptJob<'_>,
) -> Result<MinedDataset> {
    let query_ids: HashSet<&str> = queries.iter().map(|q| q.id.as_str()).collect();
    let passage_ids: HashSet<&str> = passages.iter().map(|p| p.id.as_str()).collect();
    let mut related: HashMap<&str, Vec<String>> = HashMap::new();
    for r in relations {
        if !query_ids.contains(r.query_id.as_str()) {
            return Err(Error::validation(
                "relations",
                format!("unknown query id {:?}", r.query_id),
            ));
        }
        if !passage_ids.contains(r.passage_id.as_str()) {
            return Err(Error::validation(
                "relations",
                format!("unknown passage id {:?}", r.passage_id),
            ));
        }
        let list = related.entry(r.query_id.as_str()).or_default();
        if !list.contains(&r.passage_id) {
            list.push(r.passage_id.clone());
        }
    }

    let passage_texts: Vec<String> = passages.iter().map(|p| p.text.clone()).collect();
    let passage_vecs = embed_all(teacher, &passage_texts)?;
    let corpus = EmbeddingMatrix::from_embeddings(
        passages
            .iter()
            .map(|p| p.id.clone())
            .zip(passage_vecs)
            .collect(),
    )?;
    let instructed = queries
        .iter()
        .map(|q| format_query(job.instruction, &q.text))
        .collect::<Result<Vec<_>>>()?;
    let query_vecs = embed_all(teacher, &instructed)?;
    let mining: Vec<MiningQuery> = queries
        .iter()
        .zip(query_vecs)
        .map(|(q, vector)| MiningQuery {
            id: q.id.clone(),
            text: q.text.clone(),
            vector,
            related: related.get(q.id.as_str()).cloned().unwrap_or_default(),
        })
        .collect();
    let texts: HashMap<String, String> = passages
        .iter()
        .map(|p| (p.id.clone(), p.text.clone()))
        .collect();
    mine_dataset(&mining, &corpus, &texts, &job.mining())
}

/// A corpus of unique sentences; row ids are the sentences themselves.
struct SentenceCorpus {
    matrix: EmbeddingMatrix,
    index: HashMap<String, usize>,
}

impl SentenceCorpus {
    fn build(sentences: Vec<String>, teacher: &dyn TextEmbedder) -> Result<Self> {
        let vecs = embed_all(teacher, &sentences)?;
        let matrix = EmbeddingMatrix::from_embeddings(sentences.into_iter().zip(vecs).collect())?;
        let index = matrix
            .ids()
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(SentenceCorpus { matrix, index })
    }

    fn text(&self, i: usize) -> &str {
        &self.matrix.ids()[i]
    }
}

fn unique_in_order<'a>(items: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    items
        .into_iter()
        .filter(|s| seen.insert(*s))
        .map(str::to_string)
        .collect()
}

/// One retrieval sample to build from a sentence corpus.
struct PairJob {
    key: String,
    query: String,
    positive: String,
    /// Negatives placed ahead of mined ones.
    fixed: Vec<String>,
    /// Sentences that must not be mined for this query.
    excluded: HashSet<String>,
}

fn mine_pairs(
    jobs: Vec<PairJob>,
    corpus: &SentenceCorpus,
    teacher: &dyn TextEmbedder,
    job: &AdaptJob<'_>,
) -> Result<MinedDataset> {
    job.miner.validate()?;
    let results: Vec<Result<std::result::Result<TrainingSample, DiscardEntry>>> = jobs
        .into_par_iter()
        .map(|pj| {
            let mut negatives = pj.fixed;
            negatives.truncate(job.miner.keep);
            let remaining = job.miner.keep - negatives.len();
            if remaining > 0 {
                let qvec = teacher.embed(&format_query(job.instruction, &pj.query)?)?;
                let pos = corpus.index[&pj.positive];
                let mut cfg = job.miner;
                cfg.keep = remaining;
                let excluded: HashSet<usize> = pj
                    .excluded
                    .iter()
                    .filter_map(|s| corpus.index.get(s).copied())
                    .chain(
                        negatives
                            .iter()
                            .filter_map(|s| corpus.index.get(s).copied()),
                    )
                    .collect();
                let mined = mine_for_positive(
                    &qvec,
                    pos,
                    &corpus.matrix,
                    &|i| corpus.text(i),
                    &|i| excluded.contains(&i),
                    &cfg,
                )?;
                match mined.outcome {
                    MineOutcome::Negatives(found) => {
                        negatives.extend(found.iter().map(|s| corpus.text(s.index).to_string()))
                    }
                    MineOutcome::Discard(reason) => {
                        return Ok(Err(DiscardEntry {
                            query_id: pj.key,
                            reason,
                        }))
                    }
                }
            }
            Ok(Ok(TrainingSample {
                source: job.source.to_string(),
                task: TaskType::Retrieval,
                instruction: job.instruction.to_string(),
                query: pj.query,
                positive: pj.positive,
                negatives,
            }))
        })
        .collect();
    let mut out = MinedDataset::default();
    for r in results {
        match r? {
            Ok(s) => {
                out.samples.push(s);
                out.report.kept += 1;
            }
            Err(d) => {
                out.report.entries.push(d);
                out.report.discarded += 1;
            }
        }
    }
    Ok(out)
}

/// Premises become queries; one entailed hypothesis is the positive,
/// same-premise neutral/contradiction hypotheses lead the negatives, and the
/// rest are mined from all hypotheses.
pub fn adapt_nli(
    records: &[NliRecord],
    teacher: &dyn TextEmbedder,
    job: &AdaptJob<'_>,
) -> Result<MinedDataset> {
    let mut groups: Vec<(&str, Vec<&NliRecord>)> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for r in records {
        let i = *slot.entry(r.premise.as_str()).or_insert_with(|| {
            groups.push((r.premise.as_str(), Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(r);
    }

    let corpus = SentenceCorpus::build(
        unique_in_order(records.iter().map(|r| r.hypothesis.as_str())),
        teacher,
    )?;
    let mut report = DiscardReport::default();
    let mut jobs = Vec::new();
    for (premise, group) in groups {
        let entailed = unique_in_order(
            group
                .iter()
                .filter(|r| r.label == NliLabel::Entailment)
                .map(|r| r.hypothesis.as_str()),
        );
        if entailed.is_empty() {
            report.discarded += 1;
            report.entries.push(DiscardEntry {
                query_id: premise.to_string(),
                reason: DiscardReason::NoEntailedHypothesis,
            });
            continue;
        }
        let positive = entailed[keyed_choice(job.seed, premise, entailed.len())].clone();
        let fixed: Vec<String> = unique_in_order(
            group
                .iter()
                .filter(|r| r.label != NliLabel::Entailment)
                .map(|r| r.hypothesis.as_str()),
        )
        .into_iter()
        .filter(|h| !entailed.contains(h))
        .collect();
        jobs.push(PairJob {
            key: premise.to_string(),
            query: premise.to_string(),
            positive,
            fixed,
            excluded: group.iter().map(|r| r.hypothesis.clone()).collect(),
        });
    }
    let mut out = mine_pairs(jobs, &corpus, teacher, job)?;
    report.merge(out.report);
    out.report = report;
    Ok(out)
}

/// Each pair scoring at least 4 yields `a → b` and `b → a`; all sentences
/// form the mining corpus.
pub fn adapt_sts(
    records: &[StsRecord],
    teacher: &dyn TextEmbedder,
    job: &AdaptJob<'_>,
) -> Result<MinedDataset> {
    for (i, r) in records.iter().enumerate() {
        if !(0.0..=5.0).contains(&r.score) {
            return Err(Error::InvalidSample {
                index: i,
                reason: format!("STS score {} outside [0, 5]", r.score),
            });
        }
    }
    let corpus = SentenceCorpus::build(
        unique_in_order(
            records
                .iter()
                .flat_map(|r| [r.sentence_a.as_str(), r.sentence_b.as_str()]),
        ),
        teacher,
    )?;
    let pairs: Vec<(&str, &str)> = records
        .iter()
        .filter(|r| r.score >= STS_PAIR_THRESHOLD)
        .map(|r| (r.sentence_a.as_str(), r.sentence_b.as_str()))
        .collect();
    mine_pairs(symmetric_jobs(&pairs), &corpus, teacher, job)
}

/// `(a, b)` and `(b, a)` jobs for every pair; each query excludes itself
/// and every sentence it is paired with.
fn symmetric_jobs(pairs: &[(&str, &str)]) -> Vec<PairJob> {
    let partners = partner_map(pairs);
    pairs
        .iter()
        .flat_map(|&(a, b)| [(a, b), (b, a)])
        .map(|(q, p)| pair_job(q, p, &partners))
        .collect()
}

fn partner_map<'a>(pairs: &[(&'a str, &'a str)]) -> HashMap<&'a str, HashSet<&'a str>> {
    let mut partners: HashMap<&str, HashSet<&str>> = HashMap::new();
    for &(a, b) in pairs {
        partners.entry(a).or_default().insert(b);
        partners.entry(b).or_default().insert(a);
    }
    partners
}

fn pair_job(query: &str, positive: &str, partners: &HashMap<&str, HashSet<&str>>) -> PairJob {
    let mut excluded: HashSet<String> = partners[query].iter().map(|s| s.to_string()).collect();
    excluded.insert(query.to_string());
    PairJob {
        key: format!("{query} -> {positive}"),
        query: query.to_string(),
        positive: positive.to_string(),
        fixed: Vec::new(),
        excluded,
    }
}

/// Duplicate pairs yield one sample (first question as query); all
/// questions form the mining corpus.
pub fn adapt_duplicates(
    pairs: &[DuplicatePair],
    teacher: &dyn TextEmbedder,
    job: &AdaptJob<'_>,
) -> Result<MinedDataset> {
    let corpus = SentenceCorpus::build(
        unique_in_order(
            pairs
                .iter()
                .flat_map(|p| [p.question_a.as_str(), p.question_b.as_str()]),
        ),
        teacher,
    )?;
    let dups: Vec<(&str, &str)> = pairs
        .iter()
        .filter(|p| p.is_duplicate)
        .map(|p| (p.question_a.as_str(), p.question_b.as_str()))
        .collect();
    let partners = partner_map(&dups);
    let jobs = dups
        .iter()
        .map(|&(a, b)| pair_job(a, b, &partners))
        .collect();
    mine_pairs(jobs, &corpus, teacher, job)
}

/// label_id → label_text, rejecting inconsistent mappings.
fn label_table(records: &[LabeledRecord]) -> Result<BTreeMap<i64, &str>> {
    let mut labels: BTreeMap<i64, &str> = BTreeMap::new();
    let mut texts: HashMap<&str, i64> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.label_text.is_empty() {
            return Err(Error::InvalidSample {
                index: i,
                reason: "empty label_text".into(),
            });
        }
        match labels.get(&r.label_id) {
            Some(t) if *t != r.label_text => {
                return Err(Error::InvalidSample {
                    index: i,
                    reason: format!(
                        "label {} maps to both {t:?} and {:?}",
                        r.label_id, r.label_text
                    ),
                })
            }
            _ => {
                labels.insert(r.label_id, &r.label_text);
            }
        }
        match texts.get(r.label_text.as_str()) {
            Some(id) if *id != r.label_id => {
                return Err(Error::InvalidSample {
                    index: i,
                    reason: format!(
                        "label text {:?} used by ids {id} and {}",
                        r.label_text, r.label_id
                    ),
                })
            }
            _ => {
                texts.insert(&r.label_text, r.label_id);
            }
        }
    }
    Ok(labels)
}

/// Query = text, positive = own label text, single negative = the other
/// label text.
pub fn adapt_binary_classification(
    records: &[LabeledRecord],
    source: &str,
    instruction: &str,
) -> Result<Vec<TrainingSample>> {
    let labels = label_table(records)?;
    if labels.len() != 2 {
        return Err(Error::validation(
            "labels",
            format!(
                "binary classification needs exactly 2 classes, found {}",
                labels.len()
            ),
        ));
    }
    let texts: Vec<&str> = labels.values().copied().collect();
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let other = if r.label_text == texts[0] {
                texts[1]
            } else {
                texts[0]
            };
            let sample = TrainingSample {
                source: source.to_string(),
                task: TaskType::Classification,
                instruction: instruction.to_string(),
                query: r.text.clone(),
                positive: r.label_text.clone(),
                negatives: vec![other.to_string()],
            };
            sample
                .validate()
                .map_err(|reason| Error::InvalidSample { index: i, reason })?;
            Ok(sample)
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct AdaptOutput {
    pub samples: Vec<TrainingSample>,
    pub report: DiscardReport,
}

/// Same-class positive and `num_negatives` distinct out-of-class negatives
/// per record, drawn from one ChaCha8 stream in record order: a
/// `gen_range` over the other members of the class, then an index sample
/// over the out-of-class records whose text differs from the positive.
pub fn adapt_multiclass(
    records: &[LabeledRecord],
    num_negatives: usize,
    seed: u64,
    source: &str,
    instruction: &str,
) -> Result<AdaptOutput> {
    let labels = label_table(records)?;
    if labels.len() < 2 {
        return Err(Error::validation("labels", "need at least 2 classes"));
    }
    let mut members: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        members.entry(r.label_id).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = AdaptOutput::default();
    for (i, r) in records.iter().enumerate() {
        let same: Vec<usize> = members[&r.label_id]
            .iter()
            .copied()
            .filter(|&j| j != i)
            .collect();
        if same.is_empty() {
            out.report.discarded += 1;
            out.report.entries.push(DiscardEntry {
                query_id: i.to_string(),
                reason: DiscardReason::SingletonClass,
            });
            continue;
        }
        let positive = &records[same[rng.gen_range(0..same.len())]].text;
        let others: Vec<usize> = (0..records.len())
            .filter(|&j| records[j].label_id != r.label_id && &records[j].text != positive)
            .collect();
        if others.len() < num_negatives {
            return Err(Error::validation(
                "records",
                format!(
                    "record {i} has {} out-of-class candidates, {num_negatives} required",
                    others.len()
                ),
            ));
        }
        let negatives = sample_indices(&mut rng, others.len(), num_negatives)
            .into_iter()
            .map(|k| records[others[k]].text.clone())
            .collect();
        out.samples.push(TrainingSample {
            source: source.to_string(),
            task: TaskType::Clustering,
            instruction: instruction.to_string(),
            query: r.text.clone(),
            positive: positive.clone(),
            negatives,
        });
        out.report.kept += 1;
    }
    Ok(out)
}

/// Overlap between training samples and evaluation texts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecontaminationReport {
    pub ngram: usize,
    /// Sample indices whose query or positive equals a test text after
    /// lowercasing and whitespace folding.
    pub exact: Vec<usize>,
    /// Sample indices sharing at least one word n-gram with a test text.
    pub ngram_overlap: Vec<usize>,
}

fn normalized_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn ngram_hashes(words: &[String], n: usize) -> impl Iterator<Item = u64> + '_ {
    words.windows(n).map(|w| fnv1a64(w.join(" ").as_bytes()))
}

/// Hash-based overlap check of sample queries and positives against test
/// texts. Reports, never filters.
pub fn decontamination_report(
    samples: &[TrainingSample],
    test_texts: &[String],
    ngram: usize,
) -> DecontaminationReport {
    let ngram = ngram.max(1);
    let mut exact_set = HashSet::new();
    let mut gram_set = HashSet::new();
    for t in test_texts {
        let words = normalized_words(t);
        exact_set.insert(fnv1a64(words.join(" ").as_bytes()));
        gram_set.extend(ngram_hashes(&words, ngram));
    }
    let mut report = DecontaminationReport {
        ngram,
        ..Default::default()
    };
    for (i, s) in samples.iter().enumerate() {
        let fields = [&s.query, &s.positive];
        let words: Vec<Vec<String>> = fields.iter().map(|f| normalized_words(f)).collect();
        if words
            .iter()
            .any(|w| exact_set.contains(&fnv1a64(w.join(" ").as_bytes())))
        {
            report.exact.push(i);
        }
        if words
            .iter()
            .any(|w| ngram_hashes(w, ngram).any(|h| gram_set.contains(&h)))
        {
            report.ngram_overlap.push(i);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(text: &str, id: i64, label: &str) -> LabeledRecord {
        LabeledRecord {
            text: text.into(),
            label_id: id,
            label_text: label.into(),
        }
    }

    #[test]
    fn binary_direct_construction() {
        let records = vec![
            labeled("great movie", 1, "positive"),
            labeled("awful plot", 0, "negative"),
        ];
        let out = adapt_binary_classification(&records, "imdb", "Classify sentiment.").unwrap();
        assert_eq!(out[0].negatives, vec!["negative".to_string()]);
        assert_eq!(out[0].positive, "positive");
        assert_eq!(out[1].negatives, vec!["positive".to_string()]);
        assert!(out.iter().all(|s| s.task == TaskType::Classification));
    }

    #[test]
    fn binary_rejects_wrong_class_count() {
        let one = vec![labeled("a", 0, "x"), labeled("b", 0, "x")];
        assert!(adapt_binary_classification(&one, "s", "i").is_err());
        let three = vec![
            labeled("a", 0, "x"),
            labeled("b", 1, "y"),
            labeled("c", 2, "z"),
        ];
        assert!(adapt_binary_classification(&three, "s", "i").is_err());
        let inconsistent = vec![labeled("a", 0, "x"), labeled("b", 0, "y")];
        assert!(adapt_binary_classification(&inconsistent, "s", "i").is_err());
    }

    #[test]
    fn multiclass_two_balanced_classes() {
        let records: Vec<_> = (0..26)
            .map(|i| {
                labeled(
                    &format!("text {i}"),
                    i % 2,
                    if i % 2 == 0 { "even" } else { "odd" },
                )
            })
            .collect();
        // 13 per class: only 13 out-of-class records, below 24.
        assert!(adapt_multiclass(&records, 24, 1, "s", "i").is_err());
        let out = adapt_multiclass(&records, 12, 1, "s", "i").unwrap();
        assert_eq!(out.samples.len(), 26);
        for (r, s) in records.iter().zip(&out.samples) {
            let class_of = |t: &str| records.iter().find(|x| x.text == t).unwrap().label_id;
            assert_eq!(class_of(&s.positive), r.label_id);
            assert_ne!(s.positive, s.query);
            assert!(s.negatives.iter().all(|n| class_of(n) != r.label_id));
        }
    }

    #[test]
    fn multiclass_drops_singletons() {
        let mut records: Vec<_> = (0..30)
            .map(|i| labeled(&format!("t{i}"), i % 2, if i % 2 == 0 { "a" } else { "b" }))
            .collect();
        records.push(labeled("lonely", 9, "c"));
        let out = adapt_multiclass(&records, 10, 3, "s", "i").unwrap();
        assert_eq!(out.samples.len(), 30);
        assert_eq!(out.report.entries.len(), 1);
        assert_eq!(out.report.entries[0].query_id, "30");
        assert_eq!(out.report.entries[0].reason, DiscardReason::SingletonClass);
    }

    #[test]
    fn pairs_dedup() {
        let pairs = vec![
            PairRecord {
                query: "q".into(),
                passage: "a".into(),
            },
            PairRecord {
                query: "q".into(),
                passage: "b".into(),
            },
            PairRecord {
                query: "q".into(),
                passage: "a".into(),
            },
        ];
        let (q, p, r) = pairs_to_relations(&pairs);
        assert_eq!(q.len(), 1);
        assert_eq!(p.len(), 2);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn summary_alias_maps_to_query() {
        let rec: PairRecord =
            serde_json::from_str(r#"{"summary": "short", "article": "long text"}"#).unwrap();
        assert_eq!(rec.query, "short");
        assert_eq!(rec.passage, "long text");
    }

    #[test]
    fn decontamination_flags_overlap() {
        let sample = TrainingSample {
            source: "s".into(),
            task: TaskType::Classification,
            instruction: "i".into(),
            query: "The  quick brown fox jumps".into(),
            positive: "yes".into(),
            negatives: vec!["no".into()],
        };
        let other = TrainingSample {
            query: "nothing shared at all".into(),
            ..sample.clone()
        };
        let r = decontamination_report(
            &[sample, other],
            &[
                "the quick brown fox jumps".into(),
                "a quick brown fox".into(),
            ],
            3,
        );
        assert_eq!(r.exact, vec![0]);
        assert_eq!(r.ngram_overlap, vec![0]);
    }
}
