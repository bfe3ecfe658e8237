//! # embedkit
//!
//! Train and evaluate instruction-tuned text embedding models at desk scale.
//!
//! The pipeline has four stages, each usable on its own:
//!
//! 1. **Data** ([`adapters`], [`miner`]): turn retrieval, NLI, STS,
//!    duplicate-question, classification and clustering datasets into one
//!    JSONL format of `(query, positive, hard negatives)` samples, mining
//!    negatives with a margin filter over an exact cosine ranking.
//! 2. **Sampling** ([`sampler`]): a multitask loader that keeps every micro
//!    batch within one source and aligns epochs across sources.
//! 3. **Training** ([`trainer`], [`objective`], [`encoder`]): a hashing
//!    bag-of-words encoder trained with a hard-negative contrastive loss plus
//!    an in-batch loss for retrieval sources, AdamW and warmup + cosine decay.
//! 4. **Evaluation** ([`evalkit`]): retrieval, STS, classification and
//!    clustering metrics.
//!
//! See `examples/` for one runnable program per stage; the `embedkit` binary
//! wraps the same functions as subcommands.

pub mod adapters;
pub mod checkpoint;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod miner;
pub mod objective;
pub mod optim;
pub mod sample;
pub mod sampler;
pub mod synth;
pub mod trainer;

pub use encoder::{EncoderConfig, EncoderParams};
pub use error::{Error, Result};
pub use sample::{
    cosine, format_query, read_samples, write_samples, Embedding, TaskType, TextEmbedder,
    TrainingSample,
};
