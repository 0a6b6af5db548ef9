//! Deterministic recurrent state-space model: a single-cell GRU over the
//! flattened latent and ego action, a skip-connected transition predictor,
//! and the modified cosine transition loss.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Ctx, ParamStore, Tensor, Var};
use crate::config::{DetachSide, ModelConfig};
use crate::error::{Error, Result};
use crate::kinematics::{MAX_ACCEL, MAX_TURN_RATE};
use crate::nn::Linear;
use crate::scene::LatentScene;

/// Planned ego state for the next step: position, acceleration, turn rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoAction {
    pub x: f64,
    pub y: f64,
    pub accel: f64,
    pub turn_rate: f64,
}

impl EgoAction {
    pub fn clamped(x: f64, y: f64, accel: f64, turn_rate: f64) -> Self {
        EgoAction {
            x,
            y,
            accel: accel.clamp(-MAX_ACCEL, MAX_ACCEL),
            turn_rate: turn_rate.clamp(-MAX_TURN_RATE, MAX_TURN_RATE),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::vector(vec![self.x, self.y, self.accel, self.turn_rate])
    }
}

pub const ACTION_DIM: usize = 4;

/// Single-cell GRU. Gates act on the concatenation of input and hidden.
pub struct Gru {
    reset: Linear,
    update: Linear,
    cand: Linear,
    pub h_dim: usize,
    pub in_dim: usize,
}

impl Gru {
    pub fn init(store: &mut ParamStore, prefix: &str, in_dim: usize, h_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Gru {
            reset: Linear::init(store, &format!("{prefix}.reset"), in_dim + h_dim, h_dim, rng),
            update: Linear::init(store, &format!("{prefix}.update"), in_dim + h_dim, h_dim, rng),
            cand: Linear::init(store, &format!("{prefix}.cand"), in_dim + h_dim, h_dim, rng),
            h_dim,
            in_dim,
        }
    }

    pub fn zero_state(&self, ctx: &mut Ctx) -> Result<Var> {
        ctx.tape.constant(Tensor::zeros(vec![self.h_dim]))
    }

    /// h' = (1 - u) * h + u * tanh(W_c [x; r*h])
    pub fn step(&self, ctx: &mut Ctx, store: &ParamStore, h: Var, x: Var) -> Result<Var> {
        if ctx.tape.value(x).numel() != self.in_dim {
            return Err(Error::Shape {
                op: "gru_step",
                detail: format!("input {} vs {}", ctx.tape.value(x).numel(), self.in_dim),
            });
        }
        let xh = ctx.tape.concat(&[x, h])?;
        let r = self.reset.forward(ctx, store, xh)?;
        let r = ctx.tape.sigmoid(r)?;
        let u = self.update.forward(ctx, store, xh)?;
        let u = ctx.tape.sigmoid(u)?;
        let rh = ctx.tape.mul(r, h)?;
        let xrh = ctx.tape.concat(&[x, rh])?;
        let n = self.cand.forward(ctx, store, xrh)?;
        let n = ctx.tape.tanh(n)?;
        let un = ctx.tape.mul(u, n)?;
        let uneg = ctx.tape.neg(u)?;
        let one_minus_u = ctx.tape.add_scalar(uneg, 1.0)?;
        let keep = ctx.tape.mul(one_minus_u, h)?;
        ctx.tape.add(keep, un)
    }
}

/// Feed-forward transition predictor with a skip connection between the
/// first and final layers. Output is reshaped to the latent matrix with the
/// input mask carried forward and masked rows zeroed.
pub struct TransitionPredictor {
    l1: Linear,
    l2: Linear,
    l3: Linear,
    d_model: usize,
    n_max: usize,
}

impl TransitionPredictor {
    pub fn init(store: &mut ParamStore, prefix: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let hidden = cfg.pred_hidden;
        TransitionPredictor {
            l1: Linear::init(store, &format!("{prefix}.l1"), cfg.h_dim, hidden, rng),
            l2: Linear::init(store, &format!("{prefix}.l2"), hidden, hidden, rng),
            l3: Linear::init(store, &format!("{prefix}.l3"), hidden, cfg.latent_len(), rng),
            d_model: cfg.d_model,
            n_max: cfg.n_max,
        }
    }

    pub fn predict(&self, ctx: &mut Ctx, store: &ParamStore, h: Var, mask: &[bool], order: &[Option<String>]) -> Result<LatentScene> {
        let a1 = self.l1.forward(ctx, store, h)?;
        let a1 = ctx.tape.relu(a1)?;
        let a2 = self.l2.forward(ctx, store, a1)?;
        let a2 = ctx.tape.relu(a2)?;
        let pre = ctx.tape.add(a2, a1)?;
        let out = self.l3.forward(ctx, store, pre)?;
        let mat = ctx.tape.reshape(out, vec![self.n_max, self.d_model])?;
        // zero the masked rows so the invariant matches encoded latents
        let mut mdata = vec![0.0; self.n_max * self.d_model];
        for (slot, &m) in mask.iter().enumerate() {
            if m {
                mdata[slot * self.d_model..(slot + 1) * self.d_model].fill(1.0);
            }
        }
        let mmat = ctx.tape.constant(Tensor { shape: vec![self.n_max, self.d_model], data: mdata })?;
        let masked = ctx.tape.mul(mat, mmat)?;
        Ok(LatentScene { embed: masked, mask: mask.to_vec(), order: order.to_vec() })
    }
}

/// Modified cosine transition loss: 1 - (z . zhat) / max(|z|, |zhat|),
/// computed over the flattened masked latents. One side is detached per the
/// configured direction.
pub fn rssm_loss(ctx: &mut Ctx, z: &LatentScene, zhat: &LatentScene, detach: DetachSide) -> Result<Var> {
    let n = ctx.tape.value(z.embed).numel();
    let zf = ctx.tape.reshape(z.embed, vec![n])?;
    let pf = ctx.tape.reshape(zhat.embed, vec![n])?;
    let (zf, pf) = match detach {
        DetachSide::Representation => (ctx.tape.stop_grad(zf)?, pf),
        DetachSide::Prediction => (zf, ctx.tape.stop_grad(pf)?),
    };
    let zn = ctx.tape.l2_norm(zf)?;
    let pn = ctx.tape.l2_norm(pf)?;
    if ctx.tape.value(zn).item() == 0.0 && ctx.tape.value(pn).item() == 0.0 {
        return Err(Error::DegenerateLatent);
    }
    let d = ctx.tape.dot(zf, pf)?;
    let mx = ctx.tape.maximum(zn, pn)?;
    let frac = ctx.tape.div(d, mx)?;
    let neg = ctx.tape.neg(frac)?;
    ctx.tape.add_scalar(neg, 1.0)
}

/// Recurrent model input: flattened latent concatenated with the action.
pub fn gru_input(ctx: &mut Ctx, z: &LatentScene, action: Var) -> Result<Var> {
    let n = ctx.tape.value(z.embed).numel();
    let zf = ctx.tape.reshape(z.embed, vec![n])?;
    ctx.tape.concat(&[zf, action])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn latent_from(ctx: &mut Ctx, rows: Vec<Vec<f64>>, mask: Vec<bool>) -> LatentScene {
        let d = rows[0].len();
        let n = rows.len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        let embed = ctx.tape.leaf(Tensor { shape: vec![n, d], data }).unwrap();
        let order = mask.iter().map(|&m| if m { Some("a".to_string()) } else { None }).collect();
        LatentScene { embed, mask, order }
    }

    #[test]
    fn gru_at_origin_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let gru = Gru::init(&mut store, "gru", 5, 4, &mut rng);
        let mut ctx = Ctx::new();
        let h = gru.zero_state(&mut ctx).unwrap();
        let x = ctx.tape.constant(Tensor::zeros(vec![5])).unwrap();
        let out = gru.step(&mut ctx, &store, h, x).unwrap();
        assert_eq!(ctx.tape.value(out).data, vec![0.0; 4]);
    }

    #[test]
    fn gru_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let gru = Gru::init(&mut store, "gru", 3, 4, &mut rng);
        let mut ctx = Ctx::new();
        let h = ctx.tape.constant(Tensor::vector(vec![0.1, -0.2, 0.3, 0.4])).unwrap();
        let x = ctx.tape.constant(Tensor::vector(vec![1.0, 2.0, -1.0])).unwrap();
        let a = gru.step(&mut ctx, &store, h, x).unwrap();
        let b = gru.step(&mut ctx, &store, h, x).unwrap();
        assert_eq!(ctx.tape.value(a).data, ctx.tape.value(b).data);
    }

    #[test]
    fn loss_on_matched_unit_latents_is_zero() {
        let mut ctx = Ctx::new();
        let z = latent_from(&mut ctx, vec![vec![1.0, 0.0]], vec![true]);
        let zh = latent_from(&mut ctx, vec![vec![1.0, 0.0]], vec![true]);
        let l = rssm_loss(&mut ctx, &z, &zh, DetachSide::Representation).unwrap();
        assert!(ctx.tape.value(l).item().abs() < 1e-15);
    }

    #[test]
    fn loss_on_orthogonal_unit_latents_is_one() {
        let mut ctx = Ctx::new();
        let z = latent_from(&mut ctx, vec![vec![1.0, 0.0]], vec![true]);
        let zh = latent_from(&mut ctx, vec![vec![0.0, 1.0]], vec![true]);
        let l = rssm_loss(&mut ctx, &z, &zh, DetachSide::Representation).unwrap();
        assert!((ctx.tape.value(l).item() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn loss_scale_sensitive_case() {
        // z = (2, 0), zhat = (1, 0): dot 2, max norm 2 -> loss 0
        let mut ctx = Ctx::new();
        let z = latent_from(&mut ctx, vec![vec![2.0, 0.0]], vec![true]);
        let zh = latent_from(&mut ctx, vec![vec![1.0, 0.0]], vec![true]);
        let l = rssm_loss(&mut ctx, &z, &zh, DetachSide::Representation).unwrap();
        assert!(ctx.tape.value(l).item().abs() < 1e-15);
    }

    #[test]
    fn both_zero_norms_is_degenerate() {
        let mut ctx = Ctx::new();
        let z = latent_from(&mut ctx, vec![vec![0.0, 0.0]], vec![true]);
        let zh = latent_from(&mut ctx, vec![vec![0.0, 0.0]], vec![true]);
        assert!(matches!(
            rssm_loss(&mut ctx, &z, &zh, DetachSide::Representation),
            Err(Error::DegenerateLatent)
        ));
    }

    #[test]
    fn detached_side_gets_no_gradient() {
        let mut ctx = Ctx::new();
        let z = latent_from(&mut ctx, vec![vec![0.5, 0.5]], vec![true]);
        let zh = latent_from(&mut ctx, vec![vec![0.3, -0.4]], vec![true]);
        let l = rssm_loss(&mut ctx, &z, &zh, DetachSide::Representation).unwrap();
        ctx.tape.backward(l).unwrap();
        assert!(ctx.tape.grad(z.embed).iter().all(|&g| g == 0.0));
        assert!(ctx.tape.grad(zh.embed).iter().any(|&g| g != 0.0));
    }

    #[test]
    fn predictor_zero_hidden_zero_weights_gives_zero() {
        let cfg = ModelConfig::micro();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let pred = TransitionPredictor::init(&mut store, "p", &cfg, &mut rng);
        // overwrite all weights with zeros
        let paths: Vec<String> = store.paths().map(String::from).collect();
        for p in paths {
            let shape = store.get(&p).unwrap().value.shape.clone();
            store.set_value(&p, Tensor::zeros(shape)).unwrap();
        }
        let mut ctx = Ctx::new();
        let h = ctx.tape.constant(Tensor::zeros(vec![cfg.h_dim])).unwrap();
        let mask = vec![true, true, false];
        let order = vec![Some("ego".into()), Some("a1".into()), None];
        let zh = pred.predict(&mut ctx, &store, h, &mask, &order).unwrap();
        assert!(ctx.tape.value(zh.embed).data.iter().all(|&v| v == 0.0));
        assert_eq!(zh.mask, mask);
    }
}
