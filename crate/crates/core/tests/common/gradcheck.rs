//! Central finite differences of the full training objective through the
//! encoder.

use embedkit::encoder::{EncoderConfig, EncoderParams};
use embedkit::sample::TrainingSample;
use embedkit::sampler::{MicroBatch, MiniBatch, SourceDataset};
use embedkit::trainer::batch_objective;
use embedkit::TaskType;
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-4;
pub const TEMPERATURE: f64 = 0.05;

fn phrase(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..rng.gen_range(1..=words))
        .map(|_| format!("w{}", rng.gen_range(0..40)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn sample(rng: &mut ChaCha8Rng, task: TaskType) -> TrainingSample {
    let n = task.negative_pool();
    TrainingSample {
        source: task.as_str().into(),
        task,
        instruction: "Do the task.".into(),
        query: phrase(rng, 6),
        positive: phrase(rng, 6),
        negatives: (0..n).map(|k| format!("{} n{k}", phrase(rng, 4))).collect(),
    }
}

/// A random mini batch mixing retrieval with classification or clustering.
pub fn random_batch(rng: &mut ChaCha8Rng) -> (Vec<SourceDataset>, MiniBatch) {
    let mut datasets = Vec::new();
    let mut micro = Vec::new();
    let other = if rng.gen_bool(0.5) {
        TaskType::Classification
    } else {
        TaskType::Clustering
    };
    for (d, task) in [TaskType::Retrieval, other].into_iter().enumerate() {
        let n = rng.gen_range(1..=4);
        let samples: Vec<TrainingSample> = (0..n).map(|_| sample(rng, task)).collect();
        let take = if task == TaskType::Classification {
            1
        } else {
            7
        };
        let subsets = (0..n)
            .map(|_| {
                let mut s = index_sample(rng, task.negative_pool(), take).into_vec();
                s.sort_unstable();
                s
            })
            .collect();
        micro.push(MicroBatch {
            worker: d,
            epoch: 0,
            dataset: d,
            source: task.as_str().into(),
            task,
            sample_ids: (0..n).collect(),
            negative_subsets: subsets,
        });
        datasets.push(SourceDataset::new(task.as_str(), samples).unwrap());
    }
    (datasets, MiniBatch { step: 1, micro })
}

/// Relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` over
/// sampled table and projection coordinates of one random case.
pub fn objective_case(rng: &mut ChaCha8Rng, dim: usize) -> f64 {
    let config = EncoderConfig {
        buckets: 61,
        dim,
        max_tokens: 1024,
        seed: rng.gen(),
    };
    let params = EncoderParams::init(config).unwrap();
    let (datasets, batch) = random_batch(rng);
    let loss = |p: &EncoderParams| {
        batch_objective(&batch, &datasets, p, TEMPERATURE)
            .unwrap()
            .loss
    };
    let grads = batch_objective(&batch, &datasets, &params, TEMPERATURE)
        .unwrap()
        .backward(&params)
        .unwrap();

    // (is_table, flat index, analytic)
    let mut coords: Vec<(bool, usize, f64)> = Vec::new();
    let rows: Vec<(&u32, &Vec<f64>)> = grads.rows.iter().collect();
    for _ in 0..12 {
        let (&r, g) = rows[rng.gen_range(0..rows.len())];
        let k = rng.gen_range(0..dim);
        coords.push((true, r as usize * dim + k, g[k]));
    }
    for _ in 0..8 {
        let i = rng.gen_range(0..dim * dim);
        coords.push((false, i, grads.proj[i]));
    }
    let mut diff = 0.0;
    let mut an = 0.0;
    let mut nn = 0.0;
    for (table, i, analytic) in coords {
        let shifted = |delta: f64| {
            let mut p = params.clone();
            let (t, w) = p.tensors_mut();
            if table {
                t[i] += delta;
            } else {
                w[i] += delta;
            }
            loss(&p)
        };
        let numeric = (shifted(EPS) - shifted(-EPS)) / (2.0 * EPS);
        diff += (analytic - numeric).powi(2);
        an += analytic * analytic;
        nn += numeric * numeric;
    }
    diff.sqrt() / an.sqrt().max(nn.sqrt()).max(1e-12)
}
