//! Checkpoint file: magic, a JSON header, then little-endian row-major
//! matrices (table, projection, and optionally the AdamW moments).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::optim::AdamWState;

const MAGIC: &[u8; 8] = b"EMBCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub buckets: usize,
    pub dim: usize,
    pub max_tokens: usize,
    pub seed: u64,
    /// Optimizer steps completed when the checkpoint was written.
    pub step: usize,
    pub dtype: String,
    pub has_optimizer: bool,
    pub optimizer_step: u64,
    /// Hash of the run configuration that produced the checkpoint.
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub optimizer: Option<AdamWState>,
    pub step: usize,
    pub config_hash: Option<String>,
}

fn write_f64s(out: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

impl Checkpoint {
    pub fn header(&self) -> CheckpointHeader {
        let c = self.params.config();
        CheckpointHeader {
            buckets: c.buckets,
            dim: c.dim,
            max_tokens: c.max_tokens,
            seed: c.seed,
            step: self.step,
            dtype: "f64".into(),
            has_optimizer: self.optimizer.is_some(),
            optimizer_step: self.optimizer.as_ref().map_or(0, |o| o.step),
            config_hash: self.config_hash.clone(),
        }
    }

    /// Write to a temporary sibling, then rename into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let io = |e| Error::io(&tmp, e);
        {
            let file = File::create(&tmp).map_err(io)?;
            let mut out = BufWriter::new(file);
            let header = serde_json::to_vec(&self.header())?;
            out.write_all(MAGIC).map_err(io)?;
            out.write_all(&(header.len() as u64).to_le_bytes())
                .map_err(io)?;
            out.write_all(&header).map_err(io)?;
            write_f64s(&mut out, self.params.table()).map_err(io)?;
            write_f64s(&mut out, self.params.proj()).map_err(io)?;
            if let Some(opt) = &self.optimizer {
                for part in [&opt.m_table, &opt.v_table, &opt.m_proj, &opt.v_proj] {
                    write_f64s(&mut out, part).map_err(io)?;
                }
            }
            out.flush().map_err(io)?;
        }
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let corrupt =
            |what: &str| Error::validation("checkpoint", format!("{}: {what}", path.display()));
        if !bytes.starts_with(MAGIC) {
            return Err(corrupt("bad magic"));
        }
        let mut cursor = MAGIC.len();
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(cursor..cursor + n)
                .ok_or_else(|| corrupt("truncated"))?;
            cursor += n;
            Ok(s)
        };
        let header_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let header: CheckpointHeader = serde_json::from_slice(take(header_len)?)?;
        if header.dtype != "f64" {
            return Err(corrupt("unsupported dtype"));
        }
        let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
            Ok(take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let config = EncoderConfig {
            buckets: header.buckets,
            dim: header.dim,
            max_tokens: header.max_tokens,
            seed: header.seed,
        };
        config.validate()?;
        let table_len = header.buckets * header.dim;
        let proj_len = header.dim * header.dim;
        let table = read_f64s(table_len)?;
        let proj = read_f64s(proj_len)?;
        let optimizer = if header.has_optimizer {
            Some(AdamWState {
                step: header.optimizer_step,
                m_table: read_f64s(table_len)?,
                v_table: read_f64s(table_len)?,
                m_proj: read_f64s(proj_len)?,
                v_proj: read_f64s(proj_len)?,
            })
        } else {
            None
        };
        Ok(Checkpoint {
            params: EncoderParams::from_parts(config, table, proj)?,
            optimizer,
            step: header.step,
            config_hash: header.config_hash,
        })
    }
}
