//! AdamW with decoupled weight decay and the warmup + cosine learning-rate
//! schedule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderParams, ParamGrads};
use crate::error::{Error, Result};

/// Linear warmup from 0 to `peak` over `warmup` steps, then cosine decay to
/// 0 at `total`.
pub fn lr_schedule(step: usize, peak: f64, warmup: usize, total: usize) -> Result<f64> {
    if total <= warmup {
        return Err(Error::validation(
            "total_steps",
            format!("{total} must exceed warmup_steps {warmup}"),
        ));
    }
    if step > total {
        return Err(Error::OutOfRange {
            index: step,
            len: total + 1,
        });
    }
    if step < warmup {
        return Ok(peak * step as f64 / warmup as f64);
    }
    let progress = (step - warmup) as f64 / (total - warmup) as f64;
    Ok(0.5 * peak * (1.0 + (PI * progress).cos()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moments for every encoder parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    pub m_table: Vec<f64>,
    pub v_table: Vec<f64>,
    pub m_proj: Vec<f64>,
    pub v_proj: Vec<f64>,
}

impl AdamWState {
    pub fn new(params: &EncoderParams) -> Self {
        AdamWState {
            step: 0,
            m_table: vec![0.0; params.table().len()],
            v_table: vec![0.0; params.table().len()],
            m_proj: vec![0.0; params.proj().len()],
            v_proj: vec![0.0; params.proj().len()],
        }
    }

    /// One AdamW step. Rows absent from `grads` have zero gradient but still
    /// decay their moments and weights.
    pub fn update(
        &mut self,
        params: &mut EncoderParams,
        grads: &ParamGrads,
        lr: f64,
        config: &AdamWConfig,
    ) -> Result<()> {
        if self.m_table.len() != params.table().len() || self.m_proj.len() != params.proj().len() {
            return Err(Error::Config(
                "optimizer state does not match parameter shapes".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - config.beta1.powi(t);
        let bias2 = 1.0 - config.beta2.powi(t);
        let dim = params.config().dim;
        let step_one = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *p *= 1.0 - lr * config.weight_decay;
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + config.eps);
        };

        let (table, proj) = params.tensors_mut();
        let mut sparse = grads.rows.iter().peekable();
        for (row, ((p, m), v)) in table
            .chunks_exact_mut(dim)
            .zip(self.m_table.chunks_exact_mut(dim))
            .zip(self.v_table.chunks_exact_mut(dim))
            .enumerate()
        {
            let g_row = sparse
                .next_if(|(&id, _)| id as usize == row)
                .map(|(_, g)| g.as_slice());
            for k in 0..dim {
                let g = g_row.map_or(0.0, |g| g[k]);
                step_one(&mut p[k], &mut m[k], &mut v[k], g);
            }
        }
        for (((p, m), v), g) in proj
            .iter_mut()
            .zip(&mut self.m_proj)
            .zip(&mut self.v_proj)
            .zip(&grads.proj)
        {
            step_one(p, m, v, *g);
        }
        Ok(())
    }
}
