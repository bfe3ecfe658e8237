//! Mine, train and evaluate on a synthetic paraphrase corpus.
//!
//! Run with `cargo run --release --example toy_training`.

use std::collections::HashSet;

use embedkit::checkpoint::Checkpoint;
use embedkit::encoder::EncoderParams;
use embedkit::evalkit::eval_retrieval;
use embedkit::miner::MinerConfig;
use embedkit::sampler::SourceDataset;
use embedkit::synth::{
    paraphrase_clusters, paraphrase_eval_set, paraphrase_training_set, PARAPHRASE_INSTRUCTION,
};
use embedkit::trainer::{train, RunConfig};

fn main() -> embedkit::Result<()> {
    let run: RunConfig = serde_json::from_str("{}")?;
    let teacher = EncoderParams::init(run.encoder)?;

    let clusters = paraphrase_clusters(32, 8, 7, &HashSet::new());
    let (samples, report) =
        paraphrase_training_set(&clusters, &teacher, MinerConfig::default(), 0)?;
    println!(
        "{} samples, {} queries discarded by the miner",
        samples.len(),
        report.discarded
    );

    let datasets = SourceDataset::group_by_source(samples)?;
    let out = std::env::temp_dir().join("embedkit-toy");
    let t0 = std::time::Instant::now();
    let outcome = train(&run, &datasets, &out, None, |r| {
        if r.step % 4 == 1 {
            println!("step {:>3} lr {:.2e} loss {:.4}", r.step, r.lr, r.combined);
        }
    })?;
    let first = outcome.reports.first().map_or(f64::NAN, |r| r.combined);
    let last = outcome.reports.last().map_or(f64::NAN, |r| r.combined);
    println!(
        "{} steps in {:.1?}; loss {first:.4} -> {last:.4}",
        outcome.total_steps,
        t0.elapsed()
    );

    let seen: HashSet<String> = clusters.iter().flatten().cloned().collect();
    let (queries, corpus, qrels) = paraphrase_eval_set(&paraphrase_clusters(32, 3, 8, &seen));
    let trained = Checkpoint::load(&outcome.final_checkpoint)?.params;
    let before = eval_retrieval(&queries, &corpus, &qrels, &teacher, PARAPHRASE_INSTRUCTION)?;
    let after = eval_retrieval(&queries, &corpus, &qrels, &trained, PARAPHRASE_INSTRUCTION)?;
    println!(
        "held-out recall@1 {:.3} -> {:.3}",
        before.recall_at_1, after.recall_at_1
    );
    Ok(())
}
