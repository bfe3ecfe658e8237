//! Multitask loader.
//!
//! Each worker draws a source with probability proportional to the number
//! of its samples not yet consumed this epoch, then takes up to one micro
//! batch from that source only. Queues are refilled (and reshuffled) only
//! once every source is empty, so no source starts epoch `k + 1` before all
//! sources finish epoch `k`. Retrieval and clustering samples get a fresh
//! random subset of their negative pool on every draw.

use std::io::Write;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::{TaskType, TrainingSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub micro_batch_size: usize,
    pub num_workers: usize,
    pub negatives_per_step: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            micro_batch_size: 16,
            num_workers: 4,
            negatives_per_step: 7,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.micro_batch_size < 1 {
            return Err(Error::validation("micro_batch_size", "must be at least 1"));
        }
        if self.num_workers < 1 {
            return Err(Error::validation("num_workers", "must be at least 1"));
        }
        if self.negatives_per_step < 1 || self.negatives_per_step > 24 {
            return Err(Error::validation(
                "negatives_per_step",
                "must lie in 1..=24",
            ));
        }
        Ok(())
    }

    pub fn global_batch_size(&self) -> usize {
        self.micro_batch_size * self.num_workers
    }
}

/// All samples of one source; they must share a task type.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDataset {
    pub name: String,
    pub task: TaskType,
    pub samples: Vec<TrainingSample>,
}

impl SourceDataset {
    pub fn new(name: impl Into<String>, samples: Vec<TrainingSample>) -> Result<Self> {
        let name = name.into();
        let task = samples.first().map_or(TaskType::Retrieval, |s| s.task);
        if let Some(i) = samples.iter().position(|s| s.task != task) {
            return Err(Error::InvalidSample {
                index: i,
                reason: format!(
                    "source {name:?} mixes {task} and {} samples",
                    samples[i].task
                ),
            });
        }
        Ok(SourceDataset {
            name,
            task,
            samples,
        })
    }

    /// Split a mixed sample list by `source`, in order of first appearance.
    pub fn group_by_source(samples: Vec<TrainingSample>) -> Result<Vec<SourceDataset>> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: std::collections::HashMap<String, Vec<TrainingSample>> =
            std::collections::HashMap::new();
        for s in samples {
            if !groups.contains_key(&s.source) {
                order.push(s.source.clone());
            }
            groups.entry(s.source.clone()).or_default().push(s);
        }
        order
            .into_iter()
            .map(|name| {
                let samples = groups.remove(&name).unwrap_or_default();
                SourceDataset::new(name, samples)
            })
            .collect()
    }
}

/// Samples drawn by one worker in one step, all from one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroBatch {
    pub worker: usize,
    pub epoch: usize,
    pub dataset: usize,
    pub source: String,
    pub task: TaskType,
    /// Indices into the source dataset.
    pub sample_ids: Vec<usize>,
    /// Per sample, the indices of the negatives active in this step.
    pub negative_subsets: Vec<Vec<usize>>,
}

/// Micro batches of all workers for one optimization step.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    pub step: usize,
    pub micro: Vec<MicroBatch>,
}

impl MiniBatch {
    pub fn len(&self) -> usize {
        self.micro.iter().map(|m| m.sample_ids.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Micro batches that take part in the in-batch loss.
    pub fn retrieval(&self) -> impl Iterator<Item = &MicroBatch> {
        self.micro.iter().filter(|m| m.task == TaskType::Retrieval)
    }

    pub fn has_retrieval(&self) -> bool {
        self.retrieval().next().is_some()
    }
}

/// Unconsumed sample indices per dataset plus the epoch counter.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochState {
    pub epoch: usize,
    /// Remaining indices; consumed from the front.
    queues: Vec<Vec<usize>>,
    heads: Vec<usize>,
}

impl EpochState {
    pub fn remaining(&self, dataset: usize) -> usize {
        self.queues[dataset].len() - self.heads[dataset]
    }

    pub fn total_remaining(&self) -> usize {
        (0..self.queues.len()).map(|d| self.remaining(d)).sum()
    }
}

/// One line of the trace dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub worker: usize,
    pub epoch: usize,
    pub source: String,
    pub sample_ids: Vec<usize>,
    pub negative_subset_indices: Vec<Vec<usize>>,
}

impl From<(usize, &MicroBatch)> for TraceRecord {
    fn from((step, m): (usize, &MicroBatch)) -> Self {
        TraceRecord {
            step,
            worker: m.worker,
            epoch: m.epoch,
            source: m.source.clone(),
            sample_ids: m.sample_ids.clone(),
            negative_subset_indices: m.negative_subsets.clone(),
        }
    }
}

/// Stream used to reshuffle queues; worker streams are `0..num_workers`.
const SHUFFLE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone)]
pub struct MultitaskSampler {
    config: SamplerConfig,
    sizes: Vec<usize>,
    pools: Vec<Vec<usize>>,
    names: Vec<String>,
    tasks: Vec<TaskType>,
    state: EpochState,
    worker_rngs: Vec<ChaCha8Rng>,
    shuffle_rng: ChaCha8Rng,
    max_epochs: usize,
    step: usize,
}

impl MultitaskSampler {
    pub fn new(datasets: &[SourceDataset], config: SamplerConfig, epochs: usize) -> Result<Self> {
        config.validate()?;
        if epochs < 1 {
            return Err(Error::validation("epochs", "must be at least 1"));
        }
        if datasets.iter().all(|d| d.samples.is_empty()) {
            return Err(Error::validation("datasets", "no samples to draw"));
        }
        let stream = |s: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(s);
            rng
        };
        let mut sampler = MultitaskSampler {
            config,
            sizes: datasets.iter().map(|d| d.samples.len()).collect(),
            pools: datasets
                .iter()
                .map(|d| d.samples.iter().map(|s| s.negatives.len()).collect())
                .collect(),
            names: datasets.iter().map(|d| d.name.clone()).collect(),
            tasks: datasets.iter().map(|d| d.task).collect(),
            state: EpochState {
                epoch: 0,
                queues: vec![Vec::new(); datasets.len()],
                heads: vec![0; datasets.len()],
            },
            worker_rngs: (0..config.num_workers as u64).map(stream).collect(),
            shuffle_rng: stream(SHUFFLE_STREAM),
            max_epochs: epochs,
            step: 0,
        };
        sampler.refill();
        Ok(sampler)
    }

    fn refill(&mut self) {
        for (d, &n) in self.sizes.iter().enumerate() {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut self.shuffle_rng);
            self.state.queues[d] = order;
            self.state.heads[d] = 0;
        }
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn state(&self) -> &EpochState {
        &self.state
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Optimization steps needed to run `epochs` full epochs.
    pub fn total_steps(sizes: &[usize], config: &SamplerConfig, epochs: usize) -> usize {
        let micro_per_epoch: usize = sizes
            .iter()
            .map(|n| n.div_ceil(config.micro_batch_size))
            .sum();
        (micro_per_epoch * epochs).div_ceil(config.num_workers)
    }

    /// Draw one micro batch for `worker`, crossing the epoch boundary if all
    /// queues are empty. `None` once the last epoch is exhausted.
    pub fn next_micro_batch(&mut self, worker: usize) -> Option<MicroBatch> {
        if self.state.total_remaining() == 0 {
            if self.state.epoch + 1 >= self.max_epochs {
                return None;
            }
            self.state.epoch += 1;
            self.refill();
        }
        let rng = &mut self.worker_rngs[worker];
        let mut ticket = rng.gen_range(0..self.state.total_remaining());
        let mut dataset = 0;
        for d in 0..self.sizes.len() {
            let r = self.state.remaining(d);
            if ticket < r {
                dataset = d;
                break;
            }
            ticket -= r;
        }
        let head = self.state.heads[dataset];
        let take = self
            .config
            .micro_batch_size
            .min(self.state.remaining(dataset));
        let sample_ids = self.state.queues[dataset][head..head + take].to_vec();
        self.state.heads[dataset] += take;

        let k = self.config.negatives_per_step;
        let subset_pool = matches!(
            self.tasks[dataset],
            TaskType::Retrieval | TaskType::Clustering
        );
        let negative_subsets = sample_ids
            .iter()
            .map(|&i| {
                let pool = self.pools[dataset][i];
                if subset_pool && pool > k {
                    let mut picked = sample_indices(rng, pool, k).into_vec();
                    picked.sort_unstable();
                    picked
                } else {
                    (0..pool).collect()
                }
            })
            .collect();
        Some(MicroBatch {
            worker,
            epoch: self.state.epoch,
            dataset,
            source: self.names[dataset].clone(),
            task: self.tasks[dataset],
            sample_ids,
            negative_subsets,
        })
    }

    /// Workers draw in order `0..num_workers`. The final mini batch may hold
    /// fewer micro batches.
    pub fn next_mini_batch(&mut self) -> Option<MiniBatch> {
        let mut micro = Vec::with_capacity(self.config.num_workers);
        for w in 0..self.config.num_workers {
            match self.next_micro_batch(w) {
                Some(m) => micro.push(m),
                None => break,
            }
        }
        if micro.is_empty() {
            return None;
        }
        self.step += 1;
        Some(MiniBatch {
            step: self.step,
            micro,
        })
    }

    /// Replay `steps` mini batches without returning them.
    pub fn skip(&mut self, steps: usize) {
        for _ in 0..steps {
            if self.next_mini_batch().is_none() {
                break;
            }
        }
    }

    /// Run to exhaustion and return the full trace.
    pub fn trace(mut self) -> Vec<TraceRecord> {
        let mut out = Vec::new();
        while let Some(mb) = self.next_mini_batch() {
            out.extend(mb.micro.iter().map(|m| TraceRecord::from((mb.step, m))));
        }
        out
    }
}

pub fn write_trace(records: &[TraceRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
