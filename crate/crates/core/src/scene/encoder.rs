//! Reduced polyline encoder: per-polyline subgraph rounds with max-pooling,
//! then one global scaled dot-product attention round over polyline
//! embeddings. Each agent slot's embedding is its own history polyline's
//! embedding after attention.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Ctx, ParamStore, Tensor, Var};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::scene::types::{LatentScene, VectorSet, VEC_FEAT};

pub struct SceneEncoder {
    sub1: Linear,
    sub2: Linear,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    pub d_model: usize,
    pub n_max: usize,
}

impl SceneEncoder {
    pub fn init(store: &mut ParamStore, prefix: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let h = cfg.subgraph_hidden;
        let d = cfg.d_model;
        SceneEncoder {
            sub1: Linear::init(store, &format!("{prefix}.sub1"), VEC_FEAT, h, rng),
            sub2: Linear::init(store, &format!("{prefix}.sub2"), 2 * h, d, rng),
            wq: Linear::init(store, &format!("{prefix}.attn.q"), d, d, rng),
            wk: Linear::init(store, &format!("{prefix}.attn.k"), d, d, rng),
            wv: Linear::init(store, &format!("{prefix}.attn.v"), d, d, rng),
            d_model: d,
            n_max: cfg.n_max,
        }
    }

    /// One subgraph round: shared MLP, max-pool, concatenate the pooled
    /// vector back onto every node.
    fn subgraph_round(&self, ctx: &mut Ctx, store: &ParamStore, layer: &Linear, x: Var) -> Result<(Var, Var)> {
        let (n, _) = ctx.tape.value(x).dims2()?;
        let h = layer.forward_rows(ctx, store, x)?;
        let h = ctx.tape.relu(h)?;
        let pooled = ctx.tape.max_pool_rows(h)?;
        let ones = ctx.tape.constant(Tensor { shape: vec![n, 1], data: vec![1.0; n] })?;
        let prow = ctx.tape.reshape(pooled, vec![1, layer.out_dim])?;
        let ptile = ctx.tape.matmul(ones, prow)?;
        let cat = ctx.tape.hcat(h, ptile)?;
        Ok((cat, pooled))
    }

    pub fn encode(&self, ctx: &mut Ctx, store: &ParamStore, x: &VectorSet) -> Result<LatentScene> {
        if x.polylines.is_empty() {
            return Err(Error::Shape { op: "encode", detail: "empty vector set".into() });
        }
        if x.num_agents > self.n_max {
            return Err(Error::TooManyAgents(x.num_agents, self.n_max));
        }

        // per-polyline embeddings
        let mut embeds = Vec::with_capacity(x.polylines.len());
        for poly in &x.polylines {
            let n = poly.vectors.len();
            let mut data = Vec::with_capacity(n * VEC_FEAT);
            for v in &poly.vectors {
                data.extend_from_slice(&v.features());
            }
            let nodes = ctx.tape.constant(Tensor { shape: vec![n, VEC_FEAT], data })?;
            let (cat, _) = self.subgraph_round(ctx, store, &self.sub1, nodes)?;
            let (_, pooled) = self.subgraph_round(ctx, store, &self.sub2, cat)?;
            embeds.push(pooled);
        }
        let e = ctx.tape.stack_rows(&embeds)?;

        // global interaction: scaled dot-product attention
        let q = self.wq.forward_rows(ctx, store, e)?;
        let k = self.wk.forward_rows(ctx, store, e)?;
        let v = self.wv.forward_rows(ctx, store, e)?;
        let kt = ctx.tape.transpose(k)?;
        let logits = ctx.tape.matmul(q, kt)?;
        let logits = ctx.tape.scale(logits, 1.0 / (self.d_model as f64).sqrt())?;
        let attn = ctx.tape.softmax_rows(logits)?;
        let out = ctx.tape.matmul(attn, v)?;

        // agent slots: ego first, zeros for masked slots
        let mut rows = Vec::with_capacity(self.n_max);
        let mut mask = Vec::with_capacity(self.n_max);
        let mut order = Vec::with_capacity(self.n_max);
        let agent_ids = x.agent_ids();
        for slot in 0..self.n_max {
            if slot < x.num_agents {
                rows.push(ctx.tape.row(out, slot)?);
                mask.push(true);
                order.push(Some(agent_ids[slot].clone()));
            } else {
                rows.push(ctx.tape.constant(Tensor::zeros(vec![self.d_model]))?);
                mask.push(false);
                order.push(None);
            }
        }
        let embed = ctx.tape.stack_rows(&rows)?;
        Ok(LatentScene { embed, mask, order })
    }
}
