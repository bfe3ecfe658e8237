mod common;

use std::collections::HashMap;

use embedkit::sample::TrainingSample;
use embedkit::sampler::{
    read_trace, write_trace, MultitaskSampler, SamplerConfig, SourceDataset, TraceRecord,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn retrieval(name: &str, n: usize) -> SourceDataset {
    let samples = (0..n)
        .map(|i| common::retrieval_sample(name, &i.to_string(), 24))
        .collect();
    SourceDataset::new(name, samples).unwrap()
}

fn classification(name: &str, n: usize) -> SourceDataset {
    let samples = (0..n)
        .map(|i| common::classification_sample(name, &i.to_string()))
        .collect();
    SourceDataset::new(name, samples).unwrap()
}

fn dumped(datasets: &[SourceDataset], config: SamplerConfig, epochs: usize) -> Vec<TraceRecord> {
    let trace = MultitaskSampler::new(datasets, config, epochs)
        .unwrap()
        .trace();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.jsonl");
    write_trace(&trace, &path).unwrap();
    read_trace(&path).unwrap()
}

#[test]
fn two_epochs_over_three_sources() {
    let datasets = vec![
        retrieval("big", 1000),
        classification("mid", 300),
        retrieval("small", 50),
    ];
    let config = SamplerConfig {
        seed: 9,
        ..Default::default()
    };
    let trace = dumped(&datasets, config, 2);

    let mut seen: HashMap<(&str, usize), usize> = HashMap::new();
    for r in &trace {
        let ds = datasets.iter().find(|d| d.name == r.source).unwrap();
        for &i in &r.sample_ids {
            assert_eq!(ds.samples[i].source, r.source);
            *seen.entry((r.source.as_str(), i)).or_default() += 1;
        }
    }
    assert_eq!(seen.len(), 1350);
    assert!(seen.values().all(|&c| c == 2));

    let last_first_epoch = trace.iter().rposition(|r| r.epoch == 0).unwrap();
    let first_second_epoch = trace.iter().position(|r| r.epoch == 1).unwrap();
    assert!(last_first_epoch < first_second_epoch);
    for ds in &datasets {
        let n: usize = trace
            .iter()
            .filter(|r| r.epoch == 0 && r.source == ds.name)
            .map(|r| r.sample_ids.len())
            .sum();
        assert_eq!(n, ds.samples.len());
    }
    let steps = trace.iter().map(|r| r.step).max().unwrap();
    assert_eq!(
        steps,
        MultitaskSampler::total_steps(&[1000, 300, 50], &config, 2)
    );
}

#[test]
fn negative_subsets_and_pools() {
    let datasets = vec![retrieval("r", 40), classification("c", 40)];
    let trace = dumped(&datasets, SamplerConfig::default(), 1);
    for r in &trace {
        for s in &r.negative_subset_indices {
            if r.source == "r" {
                assert_eq!(s.len(), 7);
                assert!(s.windows(2).all(|w| w[0] < w[1]) && s[6] < 24);
            } else {
                assert_eq!(s, &vec![0]);
            }
        }
    }
}

#[test]
fn inclusion_frequency_is_seven_in_twenty_four() {
    let datasets = vec![retrieval("one", 1)];
    let config = SamplerConfig {
        micro_batch_size: 1,
        num_workers: 1,
        negatives_per_step: 7,
        seed: 4,
    };
    let trace = MultitaskSampler::new(&datasets, config, 1000)
        .unwrap()
        .trace();
    assert_eq!(trace.len(), 1000);
    let mut counts = [0usize; 24];
    for r in &trace {
        for &j in &r.negative_subset_indices[0] {
            counts[j] += 1;
        }
    }
    for c in counts {
        assert!((c as f64 / 1000.0 - 7.0 / 24.0).abs() <= 0.05, "{counts:?}");
    }
}

/// Independent replay of the draw procedure: reshuffle every source from
/// the shuffle stream at each epoch, pick a source per micro batch with a
/// ticket drawn from the worker's stream, then draw the worker's sorted
/// negative subsets.
type Draw = (usize, usize, usize, Vec<usize>, Vec<Vec<usize>>);

fn replay(sizes: &[usize], pools: &[usize], config: SamplerConfig, epochs: usize) -> Vec<Draw> {
    let stream = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(config.seed);
        r.set_stream(s);
        r
    };
    let mut shuffle = stream(u64::MAX);
    let mut workers: Vec<ChaCha8Rng> = (0..config.num_workers as u64).map(stream).collect();
    let mut out = Vec::new();
    let mut step = 0;
    let mut epoch = 0;
    let refill = |shuffle: &mut ChaCha8Rng| -> Vec<Vec<usize>> {
        sizes
            .iter()
            .map(|&n| {
                let mut q: Vec<usize> = (0..n).collect();
                q.shuffle(shuffle);
                q.reverse();
                q
            })
            .collect()
    };
    let mut queues = refill(&mut shuffle);
    'outer: loop {
        step += 1;
        for (w, rng) in workers.iter_mut().enumerate() {
            let total: usize = queues.iter().map(Vec::len).sum();
            if total == 0 {
                if epoch + 1 == epochs {
                    break 'outer;
                }
                epoch += 1;
                queues = refill(&mut shuffle);
            }
            let total: usize = queues.iter().map(Vec::len).sum();
            let mut ticket = rng.gen_range(0..total);
            let d = (0..sizes.len())
                .find(|&d| {
                    if ticket < queues[d].len() {
                        true
                    } else {
                        ticket -= queues[d].len();
                        false
                    }
                })
                .unwrap();
            let take = config.micro_batch_size.min(queues[d].len());
            let ids: Vec<usize> = (0..take).map(|_| queues[d].pop().unwrap()).collect();
            let subsets = ids
                .iter()
                .map(|_| {
                    let mut s = rand::seq::index::sample(rng, pools[d], config.negatives_per_step)
                        .into_vec();
                    s.sort_unstable();
                    s
                })
                .collect();
            out.push((step, w, d, ids, subsets));
        }
    }
    out
}

#[test]
fn trace_matches_independent_replay() {
    let datasets = vec![retrieval("a", 37), retrieval("b", 11), retrieval("c", 64)];
    let config = SamplerConfig {
        micro_batch_size: 5,
        num_workers: 3,
        negatives_per_step: 7,
        seed: 123,
    };
    let trace = MultitaskSampler::new(&datasets, config, 3).unwrap().trace();
    let expected = replay(&[37, 11, 64], &[24, 24, 24], config, 3);
    assert_eq!(trace.len(), expected.len());
    let names = ["a", "b", "c"];
    for (r, (step, w, d, ids, subsets)) in trace.iter().zip(expected) {
        assert_eq!((r.step, r.worker, r.source.as_str()), (step, w, names[d]));
        assert_eq!(r.sample_ids, ids);
        assert_eq!(r.negative_subset_indices, subsets);
    }
}

#[test]
fn skip_resumes_the_same_stream() {
    let datasets = vec![retrieval("a", 200), classification("b", 90)];
    let config = SamplerConfig::default();
    let full = MultitaskSampler::new(&datasets, config, 2).unwrap().trace();
    let mut resumed = MultitaskSampler::new(&datasets, config, 2).unwrap();
    resumed.skip(4);
    let tail = resumed.trace();
    let expected: Vec<TraceRecord> = full.into_iter().filter(|r| r.step > 4).collect();
    assert_eq!(tail, expected);
}

#[test]
fn seeds_change_the_trace() {
    let datasets = vec![retrieval("a", 100)];
    let t = |seed| {
        MultitaskSampler::new(
            &datasets,
            SamplerConfig {
                seed,
                ..Default::default()
            },
            1,
        )
        .unwrap()
        .trace()
    };
    assert_eq!(t(1), t(1));
    assert_ne!(t(1), t(2));
}

#[test]
fn sources_are_grouped_from_mixed_files() {
    let samples: Vec<TrainingSample> = (0..10)
        .map(|i| common::retrieval_sample(if i % 2 == 0 { "x" } else { "y" }, &i.to_string(), 24))
        .collect();
    let groups = SourceDataset::group_by_source(samples).unwrap();
    assert_eq!(groups.len(), 2);
    assert!(groups.iter().all(|g| g.samples.len() == 5));
}
