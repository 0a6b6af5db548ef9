//! Named parameter store with Adam updates and global-norm gradient clipping.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::tape::{Tape, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

pub struct Param {
    pub value: Tensor,
    pub grad: Vec<f64>,
    grad_set: bool,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// All trainable parameters, keyed by dotted path. Iteration order is the
/// sorted path order, which keeps checkpoints and updates deterministic.
#[derive(Default)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
    step: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn register(&mut self, path: &str, value: Tensor) {
        let n = value.numel();
        self.params.insert(
            path.to_string(),
            Param { value, grad: vec![0.0; n], grad_set: false, m: vec![0.0; n], v: vec![0.0; n] },
        );
    }

    /// Xavier-uniform matrix [rows, cols].
    pub fn register_xavier(&mut self, path: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        self.register(path, Tensor { shape: vec![rows, cols], data });
    }

    pub fn register_zeros(&mut self, path: &str, shape: Vec<usize>) {
        self.register(path, Tensor::zeros(shape));
    }

    pub fn get(&self, path: &str) -> Result<&Param> {
        self.params.get(path).ok_or_else(|| Error::UnknownParam(path.to_string()))
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }

    pub fn set_value(&mut self, path: &str, value: Tensor) -> Result<()> {
        let p = self.params.get_mut(path).ok_or_else(|| Error::UnknownParam(path.to_string()))?;
        if p.value.shape != value.shape {
            return Err(Error::Shape {
                op: "set_value",
                detail: format!("{}: {:?} vs {:?}", path, p.value.shape, value.shape),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
            p.grad_set = false;
        }
    }

    pub fn accumulate_grad(&mut self, path: &str, grad: &[f64]) -> Result<()> {
        let p = self.params.get_mut(path).ok_or_else(|| Error::UnknownParam(path.to_string()))?;
        debug_assert_eq!(p.grad.len(), grad.len());
        for (gi, &c) in p.grad.iter_mut().zip(grad) {
            *gi += c;
        }
        p.grad_set = true;
        Ok(())
    }

    /// True when every registered parameter received a gradient since the
    /// last `zero_grad`.
    pub fn all_grads_populated(&self) -> bool {
        self.params.values().all(|p| p.grad_set)
    }

    pub fn global_grad_norm(&self) -> f64 {
        self.params
            .values()
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Scale all gradients so the global L2 norm does not exceed `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for p in self.params.values_mut() {
                p.grad.iter_mut().for_each(|g| *g *= s);
            }
        }
    }

    /// One Adam step over every parameter. Errors if any parameter never
    /// received a gradient since the last `zero_grad`.
    pub fn adam_step(&mut self, lr: f64) -> Result<()> {
        for (path, p) in &self.params {
            if !p.grad_set {
                return Err(Error::MissingGradient(path.clone()));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - ADAM_BETA1.powf(t);
        let bc2 = 1.0 - ADAM_BETA2.powf(t);
        for p in self.params.values_mut() {
            for j in 0..p.grad.len() {
                let g = p.grad[j];
                p.m[j] = ADAM_BETA1 * p.m[j] + (1.0 - ADAM_BETA1) * g;
                p.v[j] = ADAM_BETA2 * p.v[j] + (1.0 - ADAM_BETA2) * g * g;
                let mhat = p.m[j] / bc1;
                let vhat = p.v[j] / bc2;
                p.value.data[j] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Binds parameter-store entries to tape leaves for one forward/backward
/// pass. Each parameter becomes exactly one leaf per tape, so reusing a
/// parameter across recurrence steps shares the node.
pub struct Ctx {
    pub tape: Tape,
    bound: BTreeMap<String, Var>,
}

impl Ctx {
    pub fn new() -> Self {
        Ctx { tape: Tape::new(), bound: BTreeMap::new() }
    }

    pub fn param(&mut self, store: &ParamStore, path: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(path) {
            return Ok(v);
        }
        let value = store.get(path)?.value.clone();
        let v = self.tape.leaf(value)?;
        self.bound.insert(path.to_string(), v);
        Ok(v)
    }

    /// Copy tape gradients of every bound parameter back into the store.
    pub fn accumulate_grads(&self, store: &mut ParamStore) -> Result<()> {
        for (path, &var) in &self.bound {
            store.accumulate_grad(path, self.tape.grad(var))?;
        }
        Ok(())
    }

    pub fn bound_paths(&self) -> impl Iterator<Item = (&str, Var)> {
        self.bound.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl Default for Ctx {
    fn default() -> Self {
        Self::new()
    }
}
