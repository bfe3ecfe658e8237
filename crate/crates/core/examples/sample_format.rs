//! The training sample record: build one, validate it, and round-trip a
//! file of them through JSONL.

use embedkit::sample::{format_query, read_samples, write_samples, TrainingSample};
use embedkit::TaskType;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sample = TrainingSample {
        source: "faq".into(),
        task: TaskType::Retrieval,
        instruction: "Given a question, retrieve passages that answer it.".into(),
        query: "how do tides work".into(),
        positive: "Tides are caused by the gravitational pull of the moon.".into(),
        negatives: (0..24)
            .map(|k| format!("unrelated passage number {k}"))
            .collect(),
    };
    sample.validate()?;
    let mut short = sample.clone();
    short.negatives.truncate(5);
    println!("rejected: {}", short.validate().unwrap_err());
    println!("{}", format_query(&sample.instruction, &sample.query)?);

    let label = TrainingSample {
        source: "sentiment".into(),
        task: TaskType::Classification,
        instruction: "Classify the sentiment of the review.".into(),
        query: "great soundtrack, dull plot".into(),
        positive: "mixed".into(),
        negatives: vec!["positive".into()],
    };

    let path = std::env::temp_dir().join("embedkit-samples.jsonl");
    write_samples(&[sample, label], &path)?;
    let back = read_samples(&path)?;
    for s in &back {
        println!(
            "{:<10} {:<14} {} negatives",
            s.source,
            s.task.as_str(),
            s.negatives.len()
        );
    }
    println!(
        "{}",
        std::fs::read_to_string(&path)?
            .lines()
            .last()
            .unwrap_or_default()
    );
    Ok(())
}
