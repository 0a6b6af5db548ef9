//! Target-based ego planning: anchor candidates on lane centerlines, a
//! target distribution over them, per-target trajectory generation, and
//! max-entropy trajectory scoring.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{softmax_slice, Ctx, ParamStore, Tensor, Var};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::kinematics::KinematicState;
use crate::nn::Mlp;
use crate::scene::types::PolylineKind;
use crate::scene::{to_ego_frame, LatentScene, Scenario};

/// Anchor position in the ego frame. Padded entries are flagged invalid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetCandidate {
    pub anchor: [f64; 2],
    pub valid: bool,
}

/// Discrete probabilities and offset means over the anchor set, on the tape.
pub struct TargetDistribution {
    pub probs: Var,
    /// [N, 2] predicted offset means.
    pub offsets: Var,
    pub candidates: Vec<TargetCandidate>,
}

impl TargetDistribution {
    /// Joint density of one candidate endpoint under the discrete softmax
    /// and unit-variance Gaussian offsets.
    pub fn density(&self, ctx: &Ctx, n: usize, dx: f64, dy: f64) -> f64 {
        use std::f64::consts::PI;
        let p = ctx.tape.value(self.probs).data[n];
        let off = &ctx.tape.value(self.offsets).data[n * 2..n * 2 + 2];
        let g = |d: f64, mu: f64| (-(d - mu) * (d - mu) / 2.0).exp() / (2.0 * PI).sqrt();
        p * g(dx, off[0]) * g(dy, off[1])
    }

    /// Indices of the top-M valid candidates by probability.
    pub fn top_targets(&self, ctx: &Ctx, m: usize) -> Vec<usize> {
        let probs = &ctx.tape.value(self.probs).data;
        let mut idx: Vec<usize> =
            (0..self.candidates.len()).filter(|&i| self.candidates[i].valid).collect();
        idx.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap());
        idx.truncate(m);
        idx
    }
}

/// Sample anchor candidates along lane centerlines within reachable range.
/// Returns the candidates and whether the radial-fan fallback was used.
pub fn generate_candidates(
    scenario: &Scenario,
    ego: &KinematicState,
    n: usize,
    cfg: &ModelConfig,
) -> Result<(Vec<TargetCandidate>, bool)> {
    if n == 0 {
        return Err(Error::Config("candidate count must be >= 1".into()));
    }
    if scenario.polylines.is_empty() {
        return Err(Error::EmptyMap);
    }
    let horizon_s = scenario.horizon_len as f64 * scenario.dt();
    let reach = ego.speed * horizon_s + cfg.anchor_margin;

    let mut anchors: Vec<[f64; 2]> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for p in &scenario.polylines {
        if p.kind != PolylineKind::LaneCenterline {
            continue;
        }
        for pt in crate::scene::resample(&p.points, cfg.resample_spacing) {
            let e = to_ego_frame(ego, pt);
            if (e[0] * e[0] + e[1] * e[1]).sqrt() > reach {
                continue;
            }
            // deduplicate on a 1 m grid
            let key = (e[0].round() as i64, e[1].round() as i64);
            if seen.insert(key) {
                anchors.push(e);
            }
        }
    }

    let fallback = anchors.is_empty();
    if fallback {
        // radial fan ahead of the ego
        let rays = 8;
        let rings = (n + rays - 1) / rays;
        for ring in 1..=rings {
            let r = reach * ring as f64 / rings as f64;
            for k in 0..rays {
                let ang = -1.0 + 2.0 * k as f64 / (rays - 1) as f64; // radians
                anchors.push([r * ang.cos(), r * ang.sin()]);
            }
        }
    }

    anchors.truncate(n);
    let mut out: Vec<TargetCandidate> =
        anchors.iter().map(|&a| TargetCandidate { anchor: a, valid: true }).collect();
    // pad with duplicates flagged invalid
    let len = out.len();
    for i in len..n {
        out.push(TargetCandidate { anchor: out[i % len].anchor, valid: false });
    }
    Ok((out, fallback))
}

pub struct Planner {
    u: Mlp,
    v: Mlp,
    traj: Mlp,
    score: Mlp,
    pub zlen: usize,
    pub t_steps: usize,
    pub m_targets: usize,
}

impl Planner {
    pub fn init(store: &mut ParamStore, prefix: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let zlen = cfg.latent_len();
        let h = cfg.planner_hidden;
        Planner {
            u: Mlp::init(store, &format!("{prefix}.u"), &[zlen + 2, h, 1], rng),
            v: Mlp::init(store, &format!("{prefix}.v"), &[zlen + 2, h, 2], rng),
            traj: Mlp::init(store, &format!("{prefix}.traj"), &[zlen + 2, cfg.traj_hidden, cfg.t_steps * 4], rng),
            score: Mlp::init(store, &format!("{prefix}.score"), &[zlen + cfg.t_steps * 4, h, 1], rng),
            zlen,
            t_steps: cfg.t_steps,
            m_targets: cfg.m_targets,
        }
    }

    fn z_flat(&self, ctx: &mut Ctx, z: &LatentScene) -> Result<Var> {
        ctx.tape.reshape(z.embed, vec![self.zlen])
    }

    fn tile_z(&self, ctx: &mut Ctx, z: &LatentScene, rows: usize) -> Result<Var> {
        let zf = self.z_flat(ctx, z)?;
        let zr = ctx.tape.reshape(zf, vec![1, self.zlen])?;
        let ones = ctx.tape.constant(Tensor { shape: vec![rows, 1], data: vec![1.0; rows] })?;
        ctx.tape.matmul(ones, zr)
    }

    /// Discrete target probabilities (softmax over u) and offset means (v).
    pub fn score_targets(
        &self,
        ctx: &mut Ctx,
        store: &ParamStore,
        z: &LatentScene,
        candidates: &[TargetCandidate],
    ) -> Result<TargetDistribution> {
        let n = candidates.len();
        let anchors = ctx.tape.constant(Tensor {
            shape: vec![n, 2],
            data: candidates.iter().flat_map(|c| c.anchor).collect(),
        })?;
        let zt = self.tile_z(ctx, z, n)?;
        let input = ctx.tape.hcat(zt, anchors)?;
        let logits = self.u.forward_rows(ctx, store, input)?;
        let logits = ctx.tape.reshape(logits, vec![n])?;
        // invalid padding gets a large negative logit
        let mask = ctx.tape.constant(Tensor::vector(
            candidates.iter().map(|c| if c.valid { 0.0 } else { -1e9 }).collect(),
        ))?;
        let logits = ctx.tape.add(logits, mask)?;
        let probs = ctx.tape.softmax(logits)?;
        let offsets = self.v.forward_rows(ctx, store, input)?;
        Ok(TargetDistribution { probs, offsets, candidates: candidates.to_vec() })
    }

    /// Target position (anchor + predicted offset) for candidate `n`.
    pub fn target_of(&self, ctx: &mut Ctx, dist: &TargetDistribution, n: usize) -> Result<Var> {
        let anchor = ctx.tape.constant(Tensor::vector(dist.candidates[n].anchor.to_vec()))?;
        let off = ctx.tape.slice(dist.offsets, n * 2, 2)?;
        ctx.tape.add(anchor, off)
    }

    /// Trajectories of [t_steps, 4] states, one per target.
    pub fn generate_trajectories(
        &self,
        ctx: &mut Ctx,
        store: &ParamStore,
        z: &LatentScene,
        targets: &[Var],
    ) -> Result<Vec<Var>> {
        if targets.is_empty() {
            return Err(Error::Shape { op: "generate_trajectories", detail: "no targets".into() });
        }
        let zf = self.z_flat(ctx, z)?;
        let mut out = Vec::with_capacity(targets.len());
        for &t in targets {
            let input = ctx.tape.concat(&[zf, t])?;
            let flat = self.traj.forward(ctx, store, input)?;
            out.push(ctx.tape.reshape(flat, vec![self.t_steps, 4])?);
        }
        Ok(out)
    }

    /// Max-entropy trajectory scores: softmax over g(s, z).
    pub fn score_trajectories(
        &self,
        ctx: &mut Ctx,
        store: &ParamStore,
        z: &LatentScene,
        trajectories: &[Var],
    ) -> Result<Var> {
        if trajectories.is_empty() {
            return Err(Error::Shape { op: "score_trajectories", detail: "no trajectories".into() });
        }
        let zf = self.z_flat(ctx, z)?;
        let mut energies = Vec::with_capacity(trajectories.len());
        for &t in trajectories {
            let tf = ctx.tape.reshape(t, vec![self.t_steps * 4])?;
            let input = ctx.tape.concat(&[zf, tf])?;
            let e = self.score.forward(ctx, store, input)?;
            energies.push(e);
        }
        let logits = ctx.tape.concat(&energies)?;
        ctx.tape.softmax(logits)
    }
}

/// Index of the valid candidate nearest a ground-truth endpoint.
pub fn nearest_candidate(candidates: &[TargetCandidate], endpoint: [f64; 2]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        if !c.valid {
            continue;
        }
        let d = (c.anchor[0] - endpoint[0]).powi(2) + (c.anchor[1] - endpoint[1]).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Ground-truth trajectory scores: softmax over the negative maximum
/// displacement between each predicted trajectory and the ground truth.
pub fn gt_trajectory_scores(ctx: &Ctx, trajectories: &[Var], gt_xy: &[[f64; 2]], alpha: f64) -> Vec<f64> {
    let logits: Vec<f64> = trajectories
        .iter()
        .map(|&t| {
            let v = &ctx.tape.value(t).data;
            let steps = ctx.tape.value(t).shape[0].min(gt_xy.len());
            let mut maxd: f64 = 0.0;
            for s in 0..steps {
                let dx = v[s * 4] - gt_xy[s][0];
                let dy = v[s * 4 + 1] - gt_xy[s][1];
                maxd = maxd.max((dx * dx + dy * dy).sqrt());
            }
            -alpha * maxd
        })
        .collect();
    softmax_slice(&logits)
}

/// Cross-entropy of predicted probabilities against a target distribution.
pub fn cross_entropy(ctx: &mut Ctx, probs: Var, target: &[f64]) -> Result<Var> {
    let t = ctx.tape.constant(Tensor::vector(target.to_vec()))?;
    let safe = ctx.tape.add_scalar(probs, 1e-12)?;
    let lp = ctx.tape.ln(safe)?;
    let prod = ctx.tape.mul(t, lp)?;
    let s = ctx.tape.sum(prod)?;
    ctx.tape.neg(s)
}
