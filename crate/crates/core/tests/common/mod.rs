//! Shared oracles for the integration tests.

#![allow(dead_code)]

pub mod fixed;
pub mod gradcheck;

use std::collections::HashSet;

use embedkit::miner::{EmbeddingMatrix, MinerConfig};
use embedkit::sample::TrainingSample;
use embedkit::TaskType;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniformly random unit vector (normalized Gaussian).
pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                // Box-Muller
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit vector whose cosine with unit `base` is exactly-ish `cos`.
pub fn at_angle(rng: &mut ChaCha8Rng, base: &[f64], cos: f64) -> Vec<f64> {
    let r = random_unit(rng, base.len());
    let proj: f64 = r.iter().zip(base).map(|(a, b)| a * b).sum();
    let mut perp: Vec<f64> = r.iter().zip(base).map(|(a, b)| a - proj * b).collect();
    let n = perp.iter().map(|x| x * x).sum::<f64>().sqrt();
    perp.iter_mut().for_each(|x| *x /= n);
    let sin = (1.0 - cos * cos).sqrt();
    let v: Vec<f64> = base
        .iter()
        .zip(&perp)
        .map(|(b, p)| cos * b + sin * p)
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Brute-force miner: score every row in index order, sort the whole pool,
/// then apply the rank window and filters literally.
pub fn brute_force_mine(
    query: &[f64],
    positive_score: f64,
    corpus: &EmbeddingMatrix,
    excluded: &HashSet<usize>,
    config: &MinerConfig,
) -> Option<Vec<usize>> {
    let mut pool: Vec<(usize, f64)> = Vec::new();
    for i in 0..corpus.len() {
        if excluded.contains(&i) {
            continue;
        }
        let mut s = 0.0;
        for (a, b) in query.iter().zip(corpus.row(i)) {
            s += a * b;
        }
        pool.push((i, s));
    }
    pool.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| corpus.ids()[a.0].cmp(&corpus.ids()[b.0]))
    });
    let window: Vec<(usize, f64)> = pool
        .into_iter()
        .take(config.top_k)
        .skip(config.exclude_top)
        .collect();
    let mut kept = Vec::new();
    for (i, s) in window {
        if s < config.abs_ceiling && s < config.rel_factor * positive_score {
            kept.push(i);
        }
    }
    if kept.len() < config.keep {
        None
    } else {
        kept.truncate(config.keep);
        Some(kept)
    }
}

pub fn retrieval_sample(source: &str, tag: &str, negatives: usize) -> TrainingSample {
    TrainingSample {
        source: source.into(),
        task: TaskType::Retrieval,
        instruction: "Retrieve relevant passages.".into(),
        query: format!("query {tag} alpha"),
        positive: format!("passage {tag} beta"),
        negatives: (0..negatives)
            .map(|k| format!("negative {tag} {k} gamma"))
            .collect(),
    }
}

pub fn classification_sample(source: &str, tag: &str) -> TrainingSample {
    TrainingSample {
        source: source.into(),
        task: TaskType::Classification,
        instruction: "Classify the text.".into(),
        query: format!("text {tag} delta"),
        positive: "label one".into(),
        negatives: vec!["label two".into()],
    }
}

pub fn clustering_sample(source: &str, tag: &str, negatives: usize) -> TrainingSample {
    TrainingSample {
        task: TaskType::Clustering,
        ..retrieval_sample(source, tag, negatives)
    }
}

pub struct MinerFixture {
    pub corpus: EmbeddingMatrix,
    pub query: Vec<f64>,
    pub positive: usize,
    pub excluded: HashSet<usize>,
}

impl MinerFixture {
    pub fn positive_score(&self) -> f64 {
        self.query
            .iter()
            .zip(self.corpus.row(self.positive))
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Random mining fixture at `dim`: planted rows above the ceiling and inside
/// the relative margin, exact duplicate rows (score ties), and ids whose
/// order differs from row order.
pub fn miner_fixture(seed: u64, dim: usize, max_corpus: usize) -> MinerFixture {
    let mut rng = rng(seed);
    let n = rng.gen_range(150..=max_corpus);
    let query = random_unit(&mut rng, dim);
    let pos_cos = rng.gen_range(0.3..0.97);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    rows.push(at_angle(&mut rng, &query, pos_cos));
    for _ in 0..rng.gen_range(0..8) {
        let c = rng.gen_range(0.8..0.99);
        rows.push(at_angle(&mut rng, &query, c));
    }
    let margin = 0.95 * pos_cos;
    if margin < 0.8 {
        for _ in 0..rng.gen_range(0..10) {
            let c = rng.gen_range(margin..0.8);
            rows.push(at_angle(&mut rng, &query, c));
        }
    }
    for _ in 0..rng.gen_range(20..60) {
        let c = rng.gen_range(-0.2..margin.min(0.8));
        rows.push(at_angle(&mut rng, &query, c));
    }
    while rows.len() < n {
        if rng.gen_bool(0.05) && rows.len() > 1 {
            let dup = rows[rng.gen_range(1..rows.len())].clone();
            rows.push(dup);
        } else {
            rows.push(random_unit(&mut rng, dim));
        }
    }
    // Shuffle rows; remember where the positive went.
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let positive = order.iter().position(|&o| o == 0).unwrap();
    let data: Vec<f64> = order.iter().flat_map(|&o| rows[o].clone()).collect();
    let mut labels: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut rng);
    let ids = labels.iter().map(|l| format!("doc-{l:05}")).collect();
    let corpus = EmbeddingMatrix::new(ids, dim, data).unwrap();
    let mut excluded: HashSet<usize> = HashSet::from([positive]);
    for _ in 0..rng.gen_range(0..5) {
        excluded.insert(rng.gen_range(0..n));
    }
    MinerFixture {
        corpus,
        query,
        positive,
        excluded,
    }
}
