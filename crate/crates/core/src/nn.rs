//! Small building blocks over the tape: linear layers and MLPs.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Ctx, ParamStore, Var};
use crate::error::Result;

/// Fully connected layer; weight is [out, in], bias [out].
#[derive(Clone)]
pub struct Linear {
    w: String,
    b: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn init(store: &mut ParamStore, prefix: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = format!("{prefix}.w");
        let b = format!("{prefix}.b");
        store.register_xavier(&w, out_dim, in_dim, rng);
        store.register_zeros(&b, vec![out_dim]);
        Linear { w, b, in_dim, out_dim }
    }

    /// Apply to a 1-D input vector.
    pub fn forward(&self, ctx: &mut Ctx, store: &ParamStore, x: Var) -> Result<Var> {
        let w = ctx.param(store, &self.w)?;
        let b = ctx.param(store, &self.b)?;
        let xc = ctx.tape.reshape(x, vec![self.in_dim, 1])?;
        let y = ctx.tape.matmul(w, xc)?;
        let y = ctx.tape.reshape(y, vec![self.out_dim])?;
        ctx.tape.add(y, b)
    }

    /// Apply to each row of a 2-D input [n, in] -> [n, out].
    pub fn forward_rows(&self, ctx: &mut Ctx, store: &ParamStore, x: Var) -> Result<Var> {
        let (n, _) = ctx.tape.value(x).dims2()?;
        let w = ctx.param(store, &self.w)?;
        let b = ctx.param(store, &self.b)?;
        let wt = ctx.tape.transpose(w)?;
        let y = ctx.tape.matmul(x, wt)?;
        // replicate the bias across rows
        let ones = ctx.tape.constant(crate::autodiff::Tensor { shape: vec![n, 1], data: vec![1.0; n] })?;
        let brow = ctx.tape.reshape(b, vec![1, self.out_dim])?;
        let btile = ctx.tape.matmul(ones, brow)?;
        ctx.tape.add(y, btile)
    }
}

/// Feed-forward stack with ReLU between layers and a linear head.
#[derive(Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn init(store: &mut ParamStore, prefix: &str, dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2);
        let layers = (0..dims.len() - 1)
            .map(|i| Linear::init(store, &format!("{prefix}.l{i}"), dims[i], dims[i + 1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn forward(&self, ctx: &mut Ctx, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(ctx, store, h)?;
            if i + 1 < self.layers.len() {
                h = ctx.tape.relu(h)?;
            }
        }
        Ok(h)
    }

    pub fn forward_rows(&self, ctx: &mut Ctx, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward_rows(ctx, store, h)?;
            if i + 1 < self.layers.len() {
                h = ctx.tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use rand::SeedableRng;

    #[test]
    fn linear_rows_matches_vector_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let lin = Linear::init(&mut store, "l", 3, 2, &mut rng);

        let mut ctx = Ctx::new();
        let x = ctx.tape.constant(Tensor::vector(vec![0.5, -1.0, 2.0])).unwrap();
        let y = lin.forward(&mut ctx, &store, x).unwrap();
        let yv = ctx.tape.value(y).data.clone();

        let xm = ctx
            .tape
            .constant(Tensor { shape: vec![2, 3], data: vec![0.5, -1.0, 2.0, 0.5, -1.0, 2.0] })
            .unwrap();
        let ym = lin.forward_rows(&mut ctx, &store, xm).unwrap();
        let ymv = ctx.tape.value(ym).data.clone();
        for j in 0..2 {
            assert!((yv[j] - ymv[j]).abs() < 1e-12);
            assert!((yv[j] - ymv[2 + j]).abs() < 1e-12);
        }
    }
}
