//! Score an encoder on retrieval, STS, classification and clustering.

use std::collections::HashSet;

use embedkit::adapters::StsRecord;
use embedkit::encoder::{EncoderConfig, EncoderParams};
use embedkit::evalkit::{
    eval_classification, eval_clustering, eval_retrieval, eval_sts, render_table, ClusterRecord,
    MetricReport,
};
use embedkit::synth::{paraphrase_clusters, paraphrase_eval_set, sentiment_records};

fn main() -> embedkit::Result<()> {
    let model = EncoderParams::init(EncoderConfig::default())?;
    let clusters = paraphrase_clusters(16, 4, 1, &HashSet::new());
    let mut reports = Vec::new();
    let mut push = |task: &str, metric: &str, value: f64| {
        reports.push(MetricReport {
            task: task.into(),
            metric: metric.into(),
            value,
        });
    };

    let (queries, corpus, qrels) = paraphrase_eval_set(&clusters);
    let r = eval_retrieval(&queries, &corpus, &qrels, &model, "Find paraphrases.")?;
    push("paraphrase", "ndcg@10", r.ndcg_at_10);
    push("paraphrase", "recall@1", r.recall_at_1);

    let pairs: Vec<StsRecord> = clusters
        .iter()
        .enumerate()
        .map(|(c, texts)| {
            let other = &clusters[(c + 1) % clusters.len()];
            [(&texts[0], &texts[1], 5.0), (&texts[0], &other[0], 0.0)]
        })
        .flatten()
        .map(|(a, b, score)| StsRecord {
            sentence_a: a.clone(),
            sentence_b: b.clone(),
            score,
        })
        .collect();
    push(
        "paraphrase-sts",
        "spearman",
        eval_sts(&pairs, &model, "Retrieve similar text.")?,
    );

    let labels = vec!["negative".to_string(), "positive".to_string()];
    push(
        "sentiment",
        "accuracy",
        eval_classification(
            &sentiment_records(200, 5),
            &labels,
            &model,
            "Classify the review.",
        )?,
    );

    let records: Vec<ClusterRecord> = clusters
        .iter()
        .enumerate()
        .flat_map(|(c, texts)| {
            texts.iter().map(move |t| ClusterRecord {
                text: t.clone(),
                label: format!("c{c}"),
            })
        })
        .collect();
    push(
        "paraphrase-clusters",
        "v_measure",
        eval_clustering(&records, &model, "Identify the topic.", 0)?.v_measure,
    );

    print!("{}", render_table(&reports));
    Ok(())
}
