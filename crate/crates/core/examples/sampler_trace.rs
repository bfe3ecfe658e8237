//! Multi-task batching: source-homogeneous micro batches, dataset choice
//! proportional to what is left, and 7 of 24 negatives per step.

use embedkit::sample::TrainingSample;
use embedkit::sampler::{MultitaskSampler, SamplerConfig, SourceDataset};
use embedkit::TaskType;

fn dataset(name: &str, task: TaskType, n: usize) -> embedkit::Result<SourceDataset> {
    let samples = (0..n)
        .map(|i| TrainingSample {
            source: name.into(),
            task,
            instruction: "Do the task.".into(),
            query: format!("{name} query {i}"),
            positive: format!("{name} positive {i}"),
            negatives: (0..task.negative_pool())
                .map(|k| format!("{name} negative {i} {k}"))
                .collect(),
        })
        .collect();
    SourceDataset::new(name, samples)
}

fn main() -> embedkit::Result<()> {
    let datasets = vec![
        dataset("web", TaskType::Retrieval, 200)?,
        dataset("reviews", TaskType::Classification, 60)?,
        dataset("topics", TaskType::Clustering, 20)?,
    ];
    let config = SamplerConfig {
        micro_batch_size: 8,
        num_workers: 4,
        ..Default::default()
    };
    let sizes: Vec<usize> = datasets.iter().map(|d| d.samples.len()).collect();
    println!(
        "{} steps for 2 epochs",
        MultitaskSampler::total_steps(&sizes, &config, 2)
    );

    let mut sampler = MultitaskSampler::new(&datasets, config, 2)?;
    while let Some(batch) = sampler.next_mini_batch() {
        if batch.step > 3 {
            break;
        }
        for m in &batch.micro {
            println!(
                "step {} worker {} epoch {} {:<8} samples {:?} negatives {:?}",
                batch.step, m.worker, m.epoch, m.source, m.sample_ids, m.negative_subsets[0]
            );
        }
    }

    let trace = MultitaskSampler::new(&datasets, config, 2)?.trace();
    let path = std::env::temp_dir().join("embedkit-trace.jsonl");
    embedkit::sampler::write_trace(&trace, &path)?;
    println!(
        "{} micro batches written to {}",
        trace.len(),
        path.display()
    );
    Ok(())
}
