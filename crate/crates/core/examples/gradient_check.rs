//! Compare analytic gradients of the training objective with central
//! finite differences on a few parameters.

use embedkit::encoder::{EncoderConfig, EncoderParams};
use embedkit::objective::DEFAULT_TEMPERATURE;
use embedkit::sampler::{MultitaskSampler, SamplerConfig, SourceDataset};
use embedkit::synth::sentiment_records;
use embedkit::trainer::batch_objective;

fn main() -> embedkit::Result<()> {
    let records = sentiment_records(40, 3);
    let samples = embedkit::adapters::adapt_binary_classification(
        &records,
        "reviews",
        "Classify the review.",
    )?;
    let datasets = vec![SourceDataset::new("reviews", samples)?];
    let config = SamplerConfig {
        micro_batch_size: 4,
        num_workers: 2,
        ..Default::default()
    };
    let batch = MultitaskSampler::new(&datasets, config, 1)?
        .next_mini_batch()
        .expect("one batch");

    let params = EncoderParams::init(EncoderConfig {
        buckets: 257,
        dim: 16,
        ..Default::default()
    })?;
    let loss = |p: &EncoderParams| {
        batch_objective(&batch, &datasets, p, DEFAULT_TEMPERATURE).map(|o| o.loss)
    };
    let grads =
        batch_objective(&batch, &datasets, &params, DEFAULT_TEMPERATURE)?.backward(&params)?;
    println!(
        "loss {:.6}, {} table rows touched",
        loss(&params)?,
        grads.rows.len()
    );

    let eps = 1e-4;
    let (&bucket, row) = grads.rows.iter().next().expect("some row");
    let checks = [
        (true, bucket as usize * 16 + 3, row[3]),
        (false, 5 * 16 + 2, grads.proj[5 * 16 + 2]),
    ];
    for (in_table, idx, analytic) in checks {
        let shifted = |delta: f64| {
            let mut p = params.clone();
            let (table, proj) = p.tensors_mut();
            if in_table {
                table[idx] += delta
            } else {
                proj[idx] += delta
            }
            loss(&p)
        };
        let numeric = (shifted(eps)? - shifted(-eps)?) / (2.0 * eps);
        let name = if in_table { "table" } else { "proj" };
        println!("{name}[{idx}] analytic {analytic:+.8} numeric {numeric:+.8}");
    }
    Ok(())
}
