//! Convert NLI, STS, duplicate-question and multi-class records into
//! training samples, mining negatives with an untrained encoder.

use embedkit::adapters::{
    adapt_duplicates, adapt_multiclass, adapt_nli, adapt_sts, decontamination_report, AdaptJob,
    DuplicatePair, LabeledRecord, NliLabel, NliRecord, StsRecord,
};
use embedkit::encoder::{EncoderConfig, EncoderParams};
use embedkit::miner::MinerConfig;
use embedkit::synth::pseudo_word;

fn sentence(i: usize) -> String {
    format!(
        "the {} near the {} {}",
        pseudo_word(i),
        pseudo_word(i * 7 + 1),
        pseudo_word(i * 13 + 2)
    )
}

fn main() -> embedkit::Result<()> {
    let teacher = EncoderParams::init(EncoderConfig::default())?;
    let job = |source| AdaptJob {
        source,
        instruction: "Retrieve semantically similar text.",
        seed: 0,
        miner: MinerConfig::default(),
    };

    let labels = [
        NliLabel::Entailment,
        NliLabel::Neutral,
        NliLabel::Contradiction,
    ];
    let nli: Vec<NliRecord> = (0..300)
        .map(|i| NliRecord {
            premise: sentence(i / 3),
            hypothesis: sentence(1000 + i),
            label: labels[i % 3],
        })
        .collect();
    let out = adapt_nli(&nli, &teacher, &job("nli"))?;
    println!(
        "nli: {} samples, {} discarded",
        out.samples.len(),
        out.report.discarded
    );

    let sts: Vec<StsRecord> = (0..300)
        .map(|i| StsRecord {
            sentence_a: sentence(i),
            sentence_b: sentence(2000 + i),
            score: (i % 6) as f64,
        })
        .collect();
    let out = adapt_sts(&sts, &teacher, &job("sts"))?;
    println!(
        "sts: {} samples from {} pairs scoring at least 4",
        out.samples.len(),
        sts.iter().filter(|r| r.score >= 4.0).count()
    );

    let dups: Vec<DuplicatePair> = (0..300)
        .map(|i| DuplicatePair {
            question_a: sentence(i),
            question_b: sentence(3000 + i),
            is_duplicate: i % 4 == 0,
        })
        .collect();
    let out = adapt_duplicates(&dups, &teacher, &job("duplicates"))?;
    println!("duplicates: {} samples", out.samples.len());

    let topics: Vec<LabeledRecord> = (0..120)
        .map(|i| LabeledRecord {
            text: format!("report {i} about {}", pseudo_word(i)),
            label_id: (i % 5) as i64,
            label_text: format!("topic {}", i % 5),
        })
        .collect();
    let out = adapt_multiclass(&topics, 24, 0, "topics", "Identify the topic.")?;
    println!(
        "multiclass: {} samples, first positive {:?}",
        out.samples.len(),
        out.samples[0].positive
    );

    // Two leaked texts among otherwise unseen ones.
    let test = vec![
        topics[3].text.clone(),
        topics[7].text.clone(),
        "a brand new sentence".to_string(),
    ];
    let report = decontamination_report(&out.samples, &test, 3);
    println!(
        "overlap with test texts: {} exact, {} by 3-gram",
        report.exact.len(),
        report.ngram_overlap.len()
    );
    Ok(())
}
