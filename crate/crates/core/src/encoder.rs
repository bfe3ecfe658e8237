//! Hashing bag-of-words encoder: token ids index an embedding table, rows
//! are mean-pooled, multiplied by a square projection and L2-normalized.
//! Forward passes can record a [`Tape`] so gradients flow back into the
//! touched table rows and the projection.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::{Embedding, TextEmbedder};

const INIT_RANGE: f64 = 0.05;
/// Bucket whose row stands in for the pooled vector of token-less text.
pub const EMPTY_TEXT_BUCKET: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub buckets: usize,
    pub dim: usize,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            buckets: 65536,
            dim: 64,
            max_tokens: 1024,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.buckets < 1 {
            return Err(Error::validation("buckets", "must be at least 1"));
        }
        if self.buckets > u32::MAX as usize {
            return Err(Error::validation("buckets", "must fit in 32 bits"));
        }
        if self.dim < 2 {
            return Err(Error::validation("dim", "must be at least 2"));
        }
        if self.max_tokens < 1 {
            return Err(Error::validation("max_tokens", "must be at least 1"));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a. Stable across runs, platforms and toolchains, unlike
/// `std`'s `DefaultHasher`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Lowercase, split on Unicode whitespace, hash into buckets, truncate.
pub fn tokenize(text: &str, config: &EncoderConfig) -> Vec<u32> {
    text.to_lowercase()
        .split_whitespace()
        .take(config.max_tokens)
        .map(|tok| (fnv1a64(tok.as_bytes()) % config.buckets as u64) as u32)
        .collect()
}

/// Everything a forward pass needs to remember for its backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    ids: Vec<u32>,
    pooled: Vec<f64>,
    norm: f64,
    output: Embedding,
    generation: u64,
}

impl Tape {
    pub fn embedding(&self) -> &Embedding {
        &self.output
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.ids
    }
}

/// Sparse table gradient plus dense projection gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub dim: usize,
    /// Touched table rows only, ordered by bucket.
    pub rows: BTreeMap<u32, Vec<f64>>,
    /// Row-major `dim × dim`.
    pub proj: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros(dim: usize) -> Self {
        ParamGrads {
            dim,
            rows: BTreeMap::new(),
            proj: vec![0.0; dim * dim],
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for row in self.rows.values_mut() {
            row.iter_mut().for_each(|g| *g *= factor);
        }
        self.proj.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn add(&mut self, other: &ParamGrads) {
        for (id, row) in &other.rows {
            let acc = self.rows.entry(*id).or_insert_with(|| vec![0.0; self.dim]);
            acc.iter_mut().zip(row).for_each(|(a, g)| *a += g);
        }
        self.proj
            .iter_mut()
            .zip(&other.proj)
            .for_each(|(a, g)| *a += g);
    }

    pub fn norm(&self) -> f64 {
        let rows: f64 = self.rows.values().flatten().map(|g| g * g).sum();
        let proj: f64 = self.proj.iter().map(|g| g * g).sum();
        (rows + proj).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.rows
            .values()
            .flatten()
            .chain(&self.proj)
            .all(|g| g.is_finite())
    }
}

/// Vector-Jacobian product of `v ↦ v / ‖v‖`: `(I − êêᵀ) g / ‖v‖`.
pub fn normalization_vjp(v: &[f64], grad: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let along: f64 = v.iter().zip(grad).map(|(x, g)| x * g).sum::<f64>() / norm;
    v.iter()
        .zip(grad)
        .map(|(x, g)| (g - x / norm * along) / norm)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    config: EncoderConfig,
    /// Row-major `buckets × dim`.
    table: Vec<f64>,
    /// Row-major `dim × dim`.
    proj: Vec<f64>,
    generation: u64,
}

impl EncoderParams {
    /// Uniform init in [-0.05, 0.05] from the config seed, table then proj.
    pub fn init(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
                .collect()
        };
        let table = draw(config.buckets * config.dim);
        let proj = draw(config.dim * config.dim);
        Ok(EncoderParams {
            config,
            table,
            proj,
            generation: 0,
        })
    }

    pub fn from_parts(config: EncoderConfig, table: Vec<f64>, proj: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if table.len() != config.buckets * config.dim {
            return Err(Error::DimensionMismatch {
                expected: config.buckets * config.dim,
                actual: table.len(),
            });
        }
        if proj.len() != config.dim * config.dim {
            return Err(Error::DimensionMismatch {
                expected: config.dim * config.dim,
                actual: proj.len(),
            });
        }
        if table.iter().chain(&proj).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder parameters".into()));
        }
        Ok(EncoderParams {
            config,
            table,
            proj,
            generation: 0,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn proj(&self) -> &[f64] {
        &self.proj
    }

    pub fn row(&self, bucket: u32) -> &[f64] {
        let d = self.config.dim;
        &self.table[bucket as usize * d..(bucket as usize + 1) * d]
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Mutable access to `(table, proj)`. Invalidates outstanding tapes.
    pub fn tensors_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        self.generation += 1;
        (&mut self.table, &mut self.proj)
    }

    pub fn encode(&self, text: &str) -> Result<Embedding> {
        Ok(self.forward(text)?.output)
    }

    pub fn forward(&self, text: &str) -> Result<Tape> {
        let ids = tokenize(text, &self.config);
        self.forward_ids(ids)
    }

    pub fn forward_ids(&self, ids: Vec<u32>) -> Result<Tape> {
        let d = self.config.dim;
        let mut pooled = vec![0.0; d];
        if ids.is_empty() {
            pooled.copy_from_slice(self.row(EMPTY_TEXT_BUCKET));
        } else {
            for &id in &ids {
                pooled
                    .iter_mut()
                    .zip(self.row(id))
                    .for_each(|(p, r)| *p += r);
            }
            let n = ids.len() as f64;
            pooled.iter_mut().for_each(|p| *p /= n);
        }
        let projected: Vec<f64> = self
            .proj
            .chunks_exact(d)
            .map(|row| row.iter().zip(&pooled).map(|(w, p)| w * p).sum())
            .collect();
        let norm = projected.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("pre-normalization vector".into()));
        }
        let output = Embedding::normalize(projected)?;
        Ok(Tape {
            ids,
            pooled,
            norm,
            output,
            generation: self.generation,
        })
    }

    pub fn backward(&self, tape: &Tape, grad: &[f64]) -> Result<ParamGrads> {
        let mut grads = ParamGrads::zeros(self.config.dim);
        self.backward_into(tape, grad, &mut grads)?;
        Ok(grads)
    }

    /// Accumulate the gradient of a scalar loss w.r.t. the parameters, given
    /// its gradient `grad` w.r.t. the tape's output embedding.
    pub fn backward_into(&self, tape: &Tape, grad: &[f64], grads: &mut ParamGrads) -> Result<()> {
        if tape.generation != self.generation {
            return Err(Error::StaleTape {
                recorded: tape.generation,
                current: self.generation,
            });
        }
        let d = self.config.dim;
        if grad.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: grad.len(),
            });
        }
        // Through the normalization, using ê and ‖v‖ directly.
        let e = tape.output.as_slice();
        let along: f64 = e.iter().zip(grad).map(|(x, g)| x * g).sum();
        let grad_v: Vec<f64> = e
            .iter()
            .zip(grad)
            .map(|(x, g)| (g - x * along) / tape.norm)
            .collect();

        let mut grad_pooled = vec![0.0; d];
        for (i, gv) in grad_v.iter().enumerate() {
            let proj_row = &self.proj[i * d..(i + 1) * d];
            let grad_row = &mut grads.proj[i * d..(i + 1) * d];
            for j in 0..d {
                grad_row[j] += gv * tape.pooled[j];
                grad_pooled[j] += gv * proj_row[j];
            }
        }

        if tape.ids.is_empty() {
            let acc = grads
                .rows
                .entry(EMPTY_TEXT_BUCKET)
                .or_insert_with(|| vec![0.0; d]);
            acc.iter_mut().zip(&grad_pooled).for_each(|(a, g)| *a += g);
        } else {
            let n = tape.ids.len() as f64;
            for &id in &tape.ids {
                let acc = grads.rows.entry(id).or_insert_with(|| vec![0.0; d]);
                acc.iter_mut()
                    .zip(&grad_pooled)
                    .for_each(|(a, g)| *a += g / n);
            }
        }
        Ok(())
    }
}

impl TextEmbedder for EncoderParams {
    fn embed(&self, text: &str) -> Result<Embedding> {
        self.encode(text)
    }
}
