//! Optimization loop.
//!
//! Each step encodes every instructed query, positive and active negative
//! of the mini batch, computes the hard-negative loss for every sample and
//! the in-batch loss for retrieval samples (against the positives of all
//! retrieval samples in the mini batch), averages over samples, and applies
//! one AdamW update at the scheduled learning rate.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::encoder::{EncoderConfig, EncoderParams, ParamGrads, Tape};
use crate::error::{Error, Result};
use crate::objective::{hard_negative_loss, in_batch_loss, BatchScores, SimilarityRow};
use crate::optim::{lr_schedule, AdamWConfig, AdamWState};
use crate::sample::{dot, TaskType};
use crate::sampler::{MiniBatch, MultitaskSampler, SamplerConfig, SourceDataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub epochs: usize,
    #[serde(flatten)]
    pub adamw: AdamWConfig,
    pub temperature: f64,
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            peak_lr: 5e-3,
            warmup_steps: 50,
            epochs: 2,
            adamw: AdamWConfig::default(),
            temperature: 0.05,
            grad_clip: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::validation("peak_lr", "must be positive"));
        }
        if self.epochs < 1 {
            return Err(Error::validation("epochs", "must be at least 1"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::validation("temperature", "must be positive"));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::validation("grad_clip", "must be positive when set"));
        }
        Ok(())
    }
}

/// Full-scale hyperparameter rows, by backbone size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FullScale {
    B0_6,
    B1_7,
    B4,
}

impl FullScale {
    pub fn configs(self) -> (TrainConfig, SamplerConfig) {
        let (lr, workers, micro) = match self {
            FullScale::B0_6 => (1e-5, 16, 32),
            FullScale::B1_7 => (9e-6, 16, 32),
            FullScale::B4 => (8e-6, 32, 16),
        };
        (
            TrainConfig {
                peak_lr: lr,
                warmup_steps: 500,
                epochs: 2,
                ..TrainConfig::default()
            },
            SamplerConfig {
                micro_batch_size: micro,
                num_workers: workers,
                ..SamplerConfig::default()
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub mean_hard: f64,
    /// Absent when the mini batch holds no retrieval samples.
    pub mean_in_batch: Option<f64>,
    pub combined: f64,
    pub grad_norm: f64,
    pub samples: usize,
    /// Excluded from the metrics log so that logs are reproducible.
    #[serde(skip)]
    pub wall_ms: f64,
}

/// Which text of which sample a forward pass belongs to.
struct SampleSlots {
    id: String,
    task: TaskType,
    query: usize,
    positive: usize,
    negatives: Vec<usize>,
}

/// Loss, per-text embedding gradients and report numbers for a mini batch.
pub struct BatchObjective {
    pub loss: f64,
    pub mean_hard: f64,
    pub mean_in_batch: Option<f64>,
    pub samples: usize,
    tapes: Vec<Tape>,
    grads: Vec<Vec<f64>>,
}

/// Forward pass and loss gradients for one mini batch; no parameter update.
pub fn batch_objective(
    batch: &MiniBatch,
    datasets: &[SourceDataset],
    params: &EncoderParams,
    temperature: f64,
) -> Result<BatchObjective> {
    let mut texts: Vec<String> = Vec::new();
    let mut slots: Vec<SampleSlots> = Vec::new();
    for m in &batch.micro {
        let ds = &datasets[m.dataset];
        for (&i, active) in m.sample_ids.iter().zip(&m.negative_subsets) {
            let s = &ds.samples[i];
            let mut push = |t: String| {
                texts.push(t);
                texts.len() - 1
            };
            let query = push(s.instructed_query());
            let positive = push(s.positive.clone());
            let negatives = active
                .iter()
                .map(|&j| push(s.negatives[j].clone()))
                .collect();
            slots.push(SampleSlots {
                id: format!("{}#{i}", ds.name),
                task: s.task,
                query,
                positive,
                negatives,
            });
        }
    }
    let n = slots.len();
    if n == 0 {
        return Err(Error::validation("mini batch", "is empty"));
    }
    let tapes: Vec<Tape> = texts
        .par_iter()
        .map(|t| params.forward(t))
        .collect::<Result<_>>()?;
    let emb = |i: usize| tapes[i].embedding().as_slice();
    let dim = params.config().dim;
    let mut grads = vec![vec![0.0; dim]; texts.len()];
    let scale = 1.0 / n as f64;
    let mut bad = Vec::new();

    let mut hard_sum = 0.0;
    for s in &slots {
        let q = emb(s.query);
        let row = SimilarityRow {
            pos_score: dot(q, emb(s.positive)),
            neg_scores: s.negatives.iter().map(|&j| dot(q, emb(j))).collect(),
            temperature,
        };
        let out = hard_negative_loss(&row)?;
        if !out.loss.is_finite() {
            bad.push(s.id.clone());
        }
        hard_sum += out.loss;
        let docs = std::iter::once(s.positive).chain(s.negatives.iter().copied());
        for (d, g) in docs.zip(&out.grads) {
            let g = g * scale;
            for k in 0..dim {
                grads[s.query][k] += g * emb(d)[k];
                grads[d][k] += g * q[k];
            }
        }
    }

    let retrieval: Vec<&SampleSlots> = slots
        .iter()
        .filter(|s| s.task == TaskType::Retrieval)
        .collect();
    let mut in_batch_sum = 0.0;
    if !retrieval.is_empty() {
        let b = retrieval.len();
        let mut scores = Vec::with_capacity(b * b);
        for qi in &retrieval {
            for pj in &retrieval {
                scores.push(dot(emb(qi.query), emb(pj.positive)));
            }
        }
        let scores = BatchScores::new(b, scores, temperature)?;
        for (i, qi) in retrieval.iter().enumerate() {
            let out = in_batch_loss(&scores, i)?;
            if !out.loss.is_finite() {
                bad.push(qi.id.clone());
            }
            in_batch_sum += out.loss;
            for (pj, g) in retrieval.iter().zip(&out.grads) {
                let g = g * scale;
                for k in 0..dim {
                    grads[qi.query][k] += g * emb(pj.positive)[k];
                    grads[pj.positive][k] += g * emb(qi.query)[k];
                }
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::NonFiniteLoss {
            step: batch.step,
            sample_ids: bad,
        });
    }
    Ok(BatchObjective {
        loss: (hard_sum + in_batch_sum) * scale,
        mean_hard: hard_sum * scale,
        mean_in_batch: (!retrieval.is_empty()).then(|| in_batch_sum / retrieval.len() as f64),
        samples: n,
        tapes,
        grads,
    })
}

impl BatchObjective {
    /// Parameter gradients, accumulated in a fixed text order.
    pub fn backward(&self, params: &EncoderParams) -> Result<ParamGrads> {
        let mut out = ParamGrads::zeros(params.config().dim);
        for (tape, g) in self.tapes.iter().zip(&self.grads) {
            params.backward_into(tape, g, &mut out)?;
        }
        Ok(out)
    }
}

/// One optimization step at learning rate `lr`.
pub fn train_step(
    batch: &MiniBatch,
    datasets: &[SourceDataset],
    params: &mut EncoderParams,
    optimizer: &mut AdamWState,
    config: &TrainConfig,
    lr: f64,
) -> Result<StepReport> {
    let start = Instant::now();
    let objective = batch_objective(batch, datasets, params, config.temperature)?;
    let mut grads = objective.backward(params)?;
    let grad_norm = grads.norm();
    if !grad_norm.is_finite() {
        return Err(Error::NonFinite(format!("gradient at step {}", batch.step)));
    }
    if let Some(clip) = config.grad_clip {
        if grad_norm > clip {
            grads.scale(clip / grad_norm);
        }
    }
    optimizer.update(params, &grads, lr, &config.adamw)?;
    Ok(StepReport {
        step: batch.step,
        epoch: batch.micro.iter().map(|m| m.epoch).max().unwrap_or(0),
        lr,
        mean_hard: objective.mean_hard,
        mean_in_batch: objective.mean_in_batch,
        combined: objective.loss,
        grad_norm,
        samples: objective.samples,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Everything that determines a training run apart from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Sample JSONL files; samples are grouped into sources by `source`.
    #[serde(default)]
    pub datasets: Vec<PathBuf>,
    /// Write `step-NNNNNN.ckpt` every this many steps.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// SHA-256 over the hyperparameters (not paths).
    pub fn hash(&self) -> String {
        let value = serde_json::json!({
            "encoder": self.encoder,
            "sampler": self.sampler,
            "train": self.train,
        });
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub reports: Vec<StepReport>,
    pub total_steps: usize,
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub fn checkpoint_name(step: usize) -> String {
    format!("step-{step:06}.ckpt")
}

/// Keep the first `steps` lines of an existing metrics log.
fn truncate_metrics(path: &Path, steps: usize) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let kept: Vec<String> = BufReader::new(file)
        .lines()
        .take(steps)
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let mut text = kept.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Run (or resume) training. `on_step` sees every report as it is made.
pub fn train(
    run: &RunConfig,
    datasets: &[SourceDataset],
    out_dir: &Path,
    resume: Option<Checkpoint>,
    mut on_step: impl FnMut(&StepReport),
) -> Result<TrainOutcome> {
    run.train.validate()?;
    run.encoder.validate()?;
    let sizes: Vec<usize> = datasets.iter().map(|d| d.samples.len()).collect();
    let total_steps = MultitaskSampler::total_steps(&sizes, &run.sampler, run.train.epochs);
    if total_steps <= run.train.warmup_steps {
        return Err(Error::Config(format!(
            "{total_steps} total steps do not exceed {} warmup steps; add data or shrink the batch",
            run.train.warmup_steps
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let hash = run.hash();

    let mut sampler = MultitaskSampler::new(datasets, run.sampler, run.train.epochs)?;
    let (mut params, mut optimizer, start) = match resume {
        Some(ckpt) => {
            if ckpt.config_hash.as_deref() != Some(hash.as_str()) {
                return Err(Error::Config(
                    "checkpoint was produced by a different run configuration".into(),
                ));
            }
            if ckpt.params.config() != &run.encoder {
                return Err(Error::Config(
                    "checkpoint encoder shape differs from config".into(),
                ));
            }
            let opt = ckpt
                .optimizer
                .ok_or_else(|| Error::Config("checkpoint has no optimizer state".into()))?;
            sampler.skip(ckpt.step);
            (ckpt.params, opt, ckpt.step)
        }
        None => {
            let params = EncoderParams::init(run.encoder)?;
            let opt = AdamWState::new(&params);
            (params, opt, 0)
        }
    };

    let metrics_path = out_dir.join(METRICS_FILE);
    truncate_metrics(&metrics_path, start)?;
    let mut metrics = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;

    let mut reports = Vec::new();
    let save = |params: &EncoderParams, opt: &AdamWState, step: usize, path: &Path| {
        Checkpoint {
            params: params.clone(),
            optimizer: Some(opt.clone()),
            step,
            config_hash: Some(hash.clone()),
        }
        .save(path)
    };
    for step in start + 1..=total_steps {
        let batch = sampler
            .next_mini_batch()
            .ok_or_else(|| Error::Config(format!("sampler exhausted before step {step}")))?;
        let lr = lr_schedule(step, run.train.peak_lr, run.train.warmup_steps, total_steps)?;
        let report = train_step(
            &batch,
            datasets,
            &mut params,
            &mut optimizer,
            &run.train,
            lr,
        )?;
        serde_json::to_writer(&mut metrics, &report)?;
        metrics
            .write_all(b"\n")
            .map_err(|e| Error::io(&metrics_path, e))?;
        on_step(&report);
        reports.push(report);
        if let Some(every) = run.checkpoint_every {
            if every > 0 && step % every == 0 && step < total_steps {
                save(
                    &params,
                    &optimizer,
                    step,
                    &out_dir.join(checkpoint_name(step)),
                )?;
            }
        }
    }
    let final_checkpoint = out_dir.join(FINAL_CHECKPOINT);
    save(&params, &optimizer, total_steps, &final_checkpoint)?;
    Ok(TrainOutcome {
        final_checkpoint,
        reports,
        total_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_rows() {
        let (t, s) = FullScale::B0_6.configs();
        assert_eq!(t.peak_lr, 1e-5);
        assert_eq!(t.warmup_steps, 500);
        assert_eq!(t.epochs, 2);
        assert_eq!(s.global_batch_size(), 512);
        assert_eq!(s.micro_batch_size, 32);
        let (t, s) = FullScale::B4.configs();
        assert_eq!(t.peak_lr, 8e-6);
        assert_eq!((s.num_workers, s.micro_batch_size), (32, 16));
        assert_eq!(FullScale::B1_7.configs().0.peak_lr, 9e-6);
    }

    #[test]
    fn desk_defaults() {
        let t = TrainConfig::default();
        assert_eq!(t.warmup_steps, 50);
        assert_eq!(t.epochs, 2);
        assert_eq!(t.temperature, 0.05);
        assert_eq!(t.grad_clip, None);
        assert_eq!(SamplerConfig::default().global_batch_size(), 64);
    }

    #[test]
    fn config_hash_ignores_paths() {
        let a = RunConfig {
            encoder: EncoderConfig::default(),
            sampler: SamplerConfig::default(),
            train: TrainConfig::default(),
            datasets: vec!["a.jsonl".into()],
            checkpoint_every: None,
            output_dir: None,
        };
        let mut b = a.clone();
        b.datasets = vec!["b.jsonl".into()];
        assert_eq!(a.hash(), b.hash());
        b.train.peak_lr = 1.0;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn run_config_parses_with_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"train": {"peak_lr": 0.01, "weight_decay": 0.0}, "datasets": ["x.jsonl"]}"#,
        )
        .unwrap();
        assert_eq!(cfg.train.peak_lr, 0.01);
        assert_eq!(cfg.train.adamw.weight_decay, 0.0);
        assert_eq!(cfg.train.warmup_steps, 50);
        assert_eq!(cfg.encoder.dim, 64);
    }
}
