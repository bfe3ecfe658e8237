//! Binary classification: each text is pulled toward its label text and
//! away from the other label, then labels are predicted by nearest label
//! embedding.

use embedkit::adapters::adapt_binary_classification;
use embedkit::checkpoint::Checkpoint;
use embedkit::encoder::EncoderParams;
use embedkit::evalkit::eval_classification;
use embedkit::sampler::SourceDataset;
use embedkit::synth::sentiment_records;
use embedkit::trainer::{train, RunConfig};

const INSTRUCTION: &str = "Classify the sentiment of the review.";

fn main() -> embedkit::Result<()> {
    let train_records = sentiment_records(2000, 1);
    let test_records = sentiment_records(500, 2);
    let samples = adapt_binary_classification(&train_records, "sentiment", INSTRUCTION)?;
    println!("{} samples, first: {:?}", samples.len(), samples[0]);

    let run: RunConfig = serde_json::from_str("{}")?;
    let datasets = vec![SourceDataset::new("sentiment", samples)?];
    let out = std::env::temp_dir().join("embedkit-sentiment");
    let outcome = train(&run, &datasets, &out, None, |_| {})?;

    let labels = vec!["negative".to_string(), "positive".to_string()];
    let untrained = EncoderParams::init(run.encoder)?;
    let trained = Checkpoint::load(&outcome.final_checkpoint)?.params;
    let before = eval_classification(&test_records, &labels, &untrained, INSTRUCTION)?;
    let after = eval_classification(&test_records, &labels, &trained, INSTRUCTION)?;
    println!(
        "{} steps; test accuracy {before:.3} -> {after:.3}",
        outcome.total_steps
    );
    Ok(())
}
