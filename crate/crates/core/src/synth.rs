//! Synthetic corpora for demos and smoke tests.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adapters::{
    adapt_multiclass, adapt_retrieval, AdaptJob, LabeledRecord, Relation, TextRecord,
};
use crate::error::Result;
use crate::evalkit::Qrel;
use crate::miner::{DiscardReport, MinerConfig};
use crate::sample::{TextEmbedder, TrainingSample};

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pu", "do", "fe", "gi", "ho", "ja", "wu",
];

const TEMPLATES: [&str; 6] = [
    "{a} {b} with {c} {d}",
    "{a} and {b} for {c} {d}",
    "about {a} {b} {c} {d}",
    "{a} {b} {c} {d} today",
    "the {a} {b} of {c} {d}",
    "{a} near {b} {c} {d}",
];

/// Keywords per cluster in [`paraphrase_clusters`].
pub const CLUSTER_VOCAB: usize = 6;

/// Made-up word number `n`; distinct for every `n < 4096`.
pub fn pseudo_word(n: usize) -> String {
    let mut w = String::new();
    let mut k = n;
    for _ in 0..3 {
        w.push_str(SYLLABLES[k % 16]);
        k /= 16;
    }
    w
}

fn paraphrase(rng: &mut ChaCha8Rng, cluster: usize) -> String {
    let words: Vec<String> = (0..CLUSTER_VOCAB)
        .map(|j| pseudo_word(cluster * CLUSTER_VOCAB + j))
        .collect();
    let picked: Vec<&String> = words.choose_multiple(rng, 4).collect();
    TEMPLATES[rng.gen_range(0..TEMPLATES.len())]
        .replace("{a}", picked[0])
        .replace("{b}", picked[1])
        .replace("{c}", picked[2])
        .replace("{d}", picked[3])
}

/// `clusters` groups of `per_cluster` distinct templated paraphrases. Texts
/// in `avoid` are never produced, so a second call can make held-out
/// paraphrases.
pub fn paraphrase_clusters(
    clusters: usize,
    per_cluster: usize,
    seed: u64,
    avoid: &HashSet<String>,
) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..clusters)
        .map(|c| {
            let mut seen = HashSet::new();
            let mut out = Vec::with_capacity(per_cluster);
            while out.len() < per_cluster {
                let text = paraphrase(&mut rng, c);
                if !avoid.contains(&text) && seen.insert(text.clone()) {
                    out.push(text);
                }
            }
            out
        })
        .collect()
}

pub const PARAPHRASE_INSTRUCTION: &str = "Find paraphrases.";
pub const TOPIC_INSTRUCTION: &str = "Identify the topic.";

/// Training samples from paraphrase clusters: a `paraphrase` retrieval
/// source whose negatives are mined with `teacher` (each text queries once
/// per cluster mate, all mates excluded from the negatives) and a
/// `clusters` clustering source over the same texts.
pub fn paraphrase_training_set(
    clusters: &[Vec<String>],
    teacher: &dyn TextEmbedder,
    miner: MinerConfig,
    seed: u64,
) -> Result<(Vec<TrainingSample>, DiscardReport)> {
    let mut passages = Vec::new();
    let mut queries = Vec::new();
    let mut relations = Vec::new();
    for (c, texts) in clusters.iter().enumerate() {
        for (i, t) in texts.iter().enumerate() {
            passages.push(TextRecord {
                id: format!("c{c}-{i}"),
                text: t.clone(),
            });
            for k in 0..texts.len() - 1 {
                let id = format!("c{c}-{i}#{k}");
                queries.push(TextRecord {
                    id: id.clone(),
                    text: t.clone(),
                });
                for j in (0..texts.len()).filter(|&j| j != i) {
                    relations.push(Relation {
                        query_id: id.clone(),
                        passage_id: format!("c{c}-{j}"),
                    });
                }
            }
        }
    }
    let job = AdaptJob {
        source: "paraphrase",
        instruction: PARAPHRASE_INSTRUCTION,
        seed,
        miner,
    };
    let mined = adapt_retrieval(&queries, &passages, &relations, teacher, &job)?;
    let mut samples = mined.samples;

    let records: Vec<LabeledRecord> = clusters
        .iter()
        .enumerate()
        .flat_map(|(c, texts)| {
            texts.iter().map(move |t| LabeledRecord {
                text: t.clone(),
                label_id: c as i64,
                label_text: format!("cluster {c}"),
            })
        })
        .collect();
    samples.extend(
        adapt_multiclass(&records, miner.keep, seed, "clusters", TOPIC_INSTRUCTION)?.samples,
    );
    Ok((samples, mined.report))
}

/// Retrieval fixture from held-out clusters: the first text of each cluster
/// is the document, the rest are its queries.
pub fn paraphrase_eval_set(
    clusters: &[Vec<String>],
) -> (Vec<TextRecord>, Vec<TextRecord>, Vec<Qrel>) {
    let mut queries = Vec::new();
    let mut corpus = Vec::new();
    let mut qrels = Vec::new();
    for (c, texts) in clusters.iter().enumerate() {
        corpus.push(TextRecord {
            id: format!("d{c}"),
            text: texts[0].clone(),
        });
        for (k, t) in texts[1..].iter().enumerate() {
            queries.push(TextRecord {
                id: format!("q{c}-{k}"),
                text: t.clone(),
            });
            qrels.push(Qrel {
                query_id: format!("q{c}-{k}"),
                doc_id: format!("d{c}"),
                grade: 1.0,
            });
        }
    }
    (queries, corpus, qrels)
}

const POSITIVE_WORDS: [&str; 8] = [
    "great",
    "wonderful",
    "loved",
    "excellent",
    "delightful",
    "superb",
    "charming",
    "brilliant",
];
const NEGATIVE_WORDS: [&str; 8] = [
    "awful", "boring", "hated", "terrible", "dull", "dreadful", "clumsy", "tedious",
];
const TOPICS: [&str; 8] = [
    "movie", "meal", "hotel", "album", "book", "concert", "phone", "game",
];

/// Sentiment records that are linearly separable by their opinion words.
/// Labels are 0 = "negative", 1 = "positive".
pub fn sentiment_records(n: usize, seed: u64) -> Vec<LabeledRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let label = rng.gen_range(0..2i64);
            let pool = if label == 1 {
                &POSITIVE_WORDS
            } else {
                &NEGATIVE_WORDS
            };
            let topic = TOPICS[rng.gen_range(0..TOPICS.len())];
            let a = pool[rng.gen_range(0..pool.len())];
            let b = pool[rng.gen_range(0..pool.len())];
            LabeledRecord {
                text: format!("the {topic} was {a} and really {b}"),
                label_id: label,
                label_text: if label == 1 { "positive" } else { "negative" }.to_string(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_are_distinct() {
        let words: HashSet<String> = (0..4096).map(pseudo_word).collect();
        assert_eq!(words.len(), 4096);
    }

    #[test]
    fn held_out_paraphrases_are_new() {
        let train = paraphrase_clusters(4, 8, 1, &HashSet::new());
        let seen: HashSet<String> = train.iter().flatten().cloned().collect();
        let held = paraphrase_clusters(4, 3, 2, &seen);
        assert!(held.iter().flatten().all(|t| !seen.contains(t)));
        assert_eq!(seen.len(), 32);
    }

    #[test]
    fn sentiment_is_balanced_enough() {
        let r = sentiment_records(1000, 3);
        let pos = r.iter().filter(|x| x.label_id == 1).count();
        assert!((400..600).contains(&pos));
    }
}
