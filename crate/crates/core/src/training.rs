//! Combined open-loop and dreamed closed-loop training, plus the
//! horizon/step-size ablation harness.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Ctx, Tensor, Var};
use crate::error::{Error, Result};
use crate::kinematics::{commands_from_states, state_tensor};
use crate::model::{observation_frames, VrdModel};
use crate::planner::{cross_entropy, generate_candidates, gt_trajectory_scores, nearest_candidate};
use crate::rssm::{gru_input, rssm_loss};
use crate::scene::{state_to_ego_frame, to_ego_frame, Scenario};

pub const ALLOWED_DT: [f64; 3] = [0.1, 0.2, 0.5];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Dreamed rollout length in model steps.
    pub horizon: usize,
    /// Model step size in seconds.
    pub dt: f64,
    /// Stride between teacher-forced observation frames.
    pub obs_stride: usize,
    pub lambda_rssm: f64,
    pub lambda_target: f64,
    pub lambda_score: f64,
    pub lambda_recon: f64,
    pub lambda_dream: f64,
    /// Open-loop-only epochs before dreaming starts.
    pub warmup_epochs: usize,
    pub grad_clip: f64,
    /// Fraction of aborted rollouts per epoch that fails the run.
    pub abort_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr: 1e-3,
            seed: 0,
            horizon: 30,
            dt: 0.1,
            obs_stride: 5,
            lambda_rssm: 1.0,
            lambda_target: 1.0,
            lambda_score: 1.0,
            lambda_recon: 1.0,
            lambda_dream: 1.0,
            warmup_epochs: 10,
            grad_clip: 10.0,
            abort_tolerance: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if !ALLOWED_DT.iter().any(|&d| (d - self.dt).abs() < 1e-9) {
            return Err(Error::Config(format!("dt must be one of {:?}, got {}", ALLOWED_DT, self.dt)));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: TrainConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-scenario open-loop loss components (values, after weighting).
#[derive(Debug, Clone, Copy, Default)]
pub struct OpenLoopLoss {
    pub rssm: f64,
    pub target: f64,
    pub score: f64,
    pub recon: f64,
}

/// Steps of the scenario per model step.
fn substeps(scenario: &Scenario, dt: f64) -> Result<usize> {
    let ratio = dt * scenario.sample_rate;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 || n < 1.0 {
        return Err(Error::Config(format!(
            "dt {} is not a multiple of the scenario step {}",
            dt,
            1.0 / scenario.sample_rate
        )));
    }
    Ok(n as usize)
}

/// Ego ground-truth trajectory rows [x, y, accel, turn_rate] in the frame
/// of the last observed step, one row per future frame.
fn gt_ego_rows(scenario: &Scenario, rows: usize) -> Vec<f64> {
    let t0 = scenario.obs_end();
    let ego = scenario.ego_track();
    let anchor = ego.states[t0];
    let cmds = commands_from_states(&ego.states, scenario.dt());
    let mut out = Vec::with_capacity(rows * 4);
    for s in 1..=rows {
        let t = (t0 + s).min(ego.states.len() - 1);
        let p = to_ego_frame(&anchor, [ego.states[t].x, ego.states[t].y]);
        out.extend_from_slice(&[p[0], p[1], cmds[t].accel, cmds[t].turn_rate]);
    }
    out
}

/// Teacher-forced pass over one scenario. Returns the weighted scalar loss
/// on the tape plus its components.
pub fn open_loop_loss(
    model: &VrdModel,
    ctx: &mut Ctx,
    scenario: &Scenario,
    cfg: &TrainConfig,
) -> Result<(Var, OpenLoopLoss)> {
    let frames = observation_frames(scenario, cfg.obs_stride);
    let t0 = scenario.obs_end();
    let ego = scenario.ego_track().states[t0];

    // transition loss over the observation window
    let mut h = model.gru.zero_state(ctx)?;
    let mut rssm_terms = Vec::new();
    let mut z_last = None;
    for (i, &t) in frames.iter().enumerate() {
        let (z, _) = model.encode_frame(ctx, scenario, t)?;
        if i > 0 {
            let zhat = model.predictor.predict(ctx, &model.store, h, &z.mask, &z.order)?;
            rssm_terms.push(rssm_loss(ctx, &z, &zhat, model.cfg.detach_side)?);
        }
        let a = ctx.tape.constant(model.gt_ego_action(scenario, t).to_tensor())?;
        let x = gru_input(ctx, &z, a)?;
        h = model.gru.step(ctx, &model.store, h, x)?;
        z_last = Some(z);
    }
    let z = z_last.expect("observation window is non-empty");
    let rssm_term = {
        let s = ctx.tape.concat(&rssm_terms)?;
        ctx.tape.mean(s)?
    };

    // target distribution supervision
    let (cands, _) = generate_candidates(scenario, &ego, model.cfg.n_anchors, &model.cfg)?;
    let dist = model.planner.score_targets(ctx, &model.store, &z, &cands)?;
    let end_state = scenario.ego_track().states[t0 + scenario.horizon_len];
    let gt_end = to_ego_frame(&ego, [end_state.x, end_state.y]);
    let n_star = nearest_candidate(&cands, gt_end);
    let mut onehot = vec![0.0; cands.len()];
    onehot[n_star] = 1.0;
    let target_ce = cross_entropy(ctx, dist.probs, &onehot)?;
    let off = ctx.tape.slice(dist.offsets, n_star * 2, 2)?;
    let gt_off = ctx.tape.constant(Tensor::vector(vec![
        gt_end[0] - cands[n_star].anchor[0],
        gt_end[1] - cands[n_star].anchor[1],
    ]))?;
    let off_loss = ctx.tape.smooth_l1_sum(off, gt_off)?;

    // trajectory generator, teacher-forced on the true endpoint
    let rows = model.planner.t_steps.min(scenario.horizon_len);
    let target_const = ctx.tape.constant(Tensor::vector(gt_end.to_vec()))?;
    let trajs = model.planner.generate_trajectories(ctx, &model.store, &z, &[target_const])?;
    let flat = ctx.tape.reshape(trajs[0], vec![model.planner.t_steps * 4])?;
    let head = ctx.tape.slice(flat, 0, rows * 4)?;
    let gt_rows = ctx.tape.constant(Tensor::vector(gt_ego_rows(scenario, rows)))?;
    let traj_l1 = ctx.tape.smooth_l1_sum(head, gt_rows)?;
    let traj_loss = ctx.tape.scale(traj_l1, 1.0 / rows as f64)?;

    // trajectory scoring against displacement-based soft labels
    let top = dist.top_targets(ctx, model.planner.m_targets);
    let mut targets = Vec::with_capacity(top.len());
    for &i in &top {
        targets.push(model.planner.target_of(ctx, &dist, i)?);
    }
    let scored_trajs = model.planner.generate_trajectories(ctx, &model.store, &z, &targets)?;
    let scores = model.planner.score_trajectories(ctx, &model.store, &z, &scored_trajs)?;
    let gt_xy: Vec<[f64; 2]> = (1..=rows)
        .map(|s| {
            let st = scenario.ego_track().states[t0 + s];
            to_ego_frame(&ego, [st.x, st.y])
        })
        .collect();
    let gt_sc = gt_trajectory_scores(ctx, &scored_trajs, &gt_xy, model.cfg.score_alpha);
    let score_loss = cross_entropy(ctx, scores, &gt_sc)?;

    // one-step kinematic reconstruction from the encoded latent
    let mut init = Vec::with_capacity(z.mask.len());
    for id in &z.order {
        match id {
            Some(id) => {
                let local = state_to_ego_frame(&ego, &scenario.track(id).unwrap().states[t0]);
                init.push(Some(ctx.tape.constant(state_tensor(local))?));
            }
            None => init.push(None),
        }
    }
    let (next, _) = model.kin.reconstruct_scene(ctx, &model.store, &init, &z, scenario.dt())?;
    let mut recon_terms = Vec::new();
    for (slot, id) in z.order.iter().enumerate() {
        let Some(id) = id else { continue };
        let tr = scenario.track(id).unwrap();
        if t0 + 1 >= tr.valid.len() || !tr.valid[t0 + 1] {
            continue;
        }
        let gt = state_to_ego_frame(&ego, &tr.states[t0 + 1]);
        let gt_v = ctx.tape.constant(state_tensor(gt))?;
        recon_terms.push(ctx.tape.smooth_l1_sum(next[slot].unwrap(), gt_v)?);
    }
    let recon_loss = if recon_terms.is_empty() {
        ctx.tape.scalar_const(0.0)?
    } else {
        let s = ctx.tape.concat(&recon_terms)?;
        ctx.tape.mean(s)?
    };

    let target_term = {
        let a = ctx.tape.add(target_ce, off_loss)?;
        ctx.tape.add(a, traj_loss)?
    };
    let components = OpenLoopLoss {
        rssm: cfg.lambda_rssm * ctx.tape.value(rssm_term).item(),
        target: cfg.lambda_target * ctx.tape.value(target_term).item(),
        score: cfg.lambda_score * ctx.tape.value(score_loss).item(),
        recon: cfg.lambda_recon * ctx.tape.value(recon_loss).item(),
    };
    let mut total = ctx.tape.scale(rssm_term, cfg.lambda_rssm)?;
    for (term, w) in [
        (target_term, cfg.lambda_target),
        (score_loss, cfg.lambda_score),
        (recon_loss, cfg.lambda_recon),
    ] {
        let wt = ctx.tape.scale(term, w)?;
        total = ctx.tape.add(total, wt)?;
    }
    Ok((total, components))
}

/// Dreamed closed-loop loss for one scenario: smooth L1 between the dreamed
/// [x, y, accel, turn_rate] and ground truth, per agent per step, in the
/// frame of the last observed step. Returns the weighted loss on the tape.
pub fn dream_loss(
    model: &VrdModel,
    ctx: &mut Ctx,
    scenario: &Scenario,
    cfg: &TrainConfig,
) -> Result<(Var, f64)> {
    let sub = substeps(scenario, cfg.dt)?;
    let max_steps = scenario.horizon_len / sub;
    let horizon = cfg.horizon.min(max_steps);
    if horizon == 0 {
        return Err(Error::Config("horizon shorter than one model step".into()));
    }
    let rollout = model.dream(ctx, scenario, horizon, cfg.dt, 0, cfg.obs_stride)?;
    let t0 = scenario.obs_end();
    let anchor = rollout.anchor;

    let mut terms = Vec::new();
    for (i, step) in rollout.steps.iter().enumerate() {
        let t = t0 + (i + 1) * sub;
        for (slot, id) in rollout.order.iter().enumerate() {
            let Some(id) = id else { continue };
            let tr = scenario.track(id).unwrap();
            if t >= tr.valid.len() || !tr.valid[t] {
                continue;
            }
            let cmds = commands_from_states(&tr.states, scenario.dt());
            let local = state_to_ego_frame(&anchor, &tr.states[t]);
            let gt = ctx.tape.constant(Tensor::vector(vec![
                local.x,
                local.y,
                cmds[t].accel,
                cmds[t].turn_rate,
            ]))?;
            let xy = ctx.tape.slice(step.states[slot].unwrap(), 0, 2)?;
            let pred = ctx.tape.concat(&[xy, step.commands[slot].unwrap()])?;
            terms.push(ctx.tape.smooth_l1_sum(pred, gt)?);
        }
    }
    if terms.is_empty() {
        return Err(Error::Config("no supervised agents in dream window".into()));
    }
    let s = ctx.tape.concat(&terms)?;
    let mean = ctx.tape.mean(s)?;
    let weighted = ctx.tape.scale(mean, cfg.lambda_dream)?;
    let value = ctx.tape.value(weighted).item();
    Ok((weighted, value))
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub rssm: f64,
    pub target: f64,
    pub score: f64,
    pub recon: f64,
    pub dream: f64,
    pub grad_norm: f64,
    pub aborted: usize,
    pub wall_s: f64,
}

pub struct TrainReport {
    pub logs: Vec<EpochLog>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,rssm,target,score,recon,dream,grad_norm,aborted,wall_s\n");
        for l in &self.logs {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.3}\n",
                l.epoch, l.rssm, l.target, l.score, l.recon, l.dream, l.grad_norm, l.aborted, l.wall_s
            ));
        }
        s
    }

    pub fn final_dream_loss(&self) -> Option<f64> {
        self.logs.iter().rev().find(|l| l.dream > 0.0).map(|l| l.dream)
    }
}

/// Full training run: open-loop every epoch, dreamed closed-loop after the
/// warmup. Gradients accumulate across the whole dataset, then one clipped
/// Adam step per epoch. Errors if too many rollouts abort in one epoch.
pub fn train(model: &mut VrdModel, dataset: &[Scenario], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scale = 1.0 / dataset.len() as f64;
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        model.store.zero_grad();
        let mut sums = OpenLoopLoss::default();
        let mut dream_sum = 0.0;
        let mut dreamed = 0usize;
        let mut aborted = 0usize;
        for sc in dataset {
            let mut ctx = Ctx::new();
            let (loss, parts) = open_loop_loss(model, &mut ctx, sc, cfg)?;
            let scaled = ctx.tape.scale(loss, scale)?;
            ctx.tape.backward(scaled)?;
            ctx.accumulate_grads(&mut model.store)?;
            sums.rssm += parts.rssm * scale;
            sums.target += parts.target * scale;
            sums.score += parts.score * scale;
            sums.recon += parts.recon * scale;

            if epoch >= cfg.warmup_epochs {
                let mut dctx = Ctx::new();
                match dream_loss(model, &mut dctx, sc, cfg) {
                    Ok((loss, value)) => {
                        let scaled = dctx.tape.scale(loss, scale)?;
                        dctx.tape.backward(scaled)?;
                        dctx.accumulate_grads(&mut model.store)?;
                        dream_sum += value;
                        dreamed += 1;
                    }
                    Err(Error::RolloutAbort(_)) => aborted += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        if epoch >= cfg.warmup_epochs && aborted as f64 > cfg.abort_tolerance * dataset.len() as f64 {
            return Err(Error::Config(format!(
                "epoch {}: {} of {} dreamed rollouts aborted",
                epoch,
                aborted,
                dataset.len()
            )));
        }
        model.store.clip_global_norm(cfg.grad_clip);
        let grad_norm = model.store.global_grad_norm();
        model.store.adam_step(cfg.lr)?;
        logs.push(EpochLog {
            epoch,
            rssm: sums.rssm,
            target: sums.target,
            score: sums.score,
            recon: sums.recon,
            dream: if dreamed > 0 { dream_sum / dreamed as f64 } else { 0.0 },
            grad_norm,
            aborted,
            wall_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainReport { logs })
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub horizon_s: f64,
    pub dt: f64,
    pub min_ade: f64,
    pub min_fde: f64,
    pub actor_mr: f64,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("horizon_s,dt,min_ade_1,min_fde_1,actor_mr_1\n");
    for r in rows {
        s.push_str(&format!(
            "{:.1},{:.1},{:.6},{:.6},{:.6}\n",
            r.horizon_s, r.dt, r.min_ade, r.min_fde, r.actor_mr
        ));
    }
    s
}

/// Train and evaluate one model per step size, holding the dreamed horizon
/// fixed in seconds. Evaluation uses single-target rollouts (K = 1).
pub fn run_ablation(
    model_cfg: &crate::config::ModelConfig,
    base: &TrainConfig,
    dataset: &[Scenario],
    dts: &[f64],
) -> Result<Vec<AblationRow>> {
    let horizon_s = base.horizon as f64 * base.dt;
    let mut rows = Vec::with_capacity(dts.len());
    for &dt in dts {
        let cfg = TrainConfig {
            dt,
            horizon: ((horizon_s / dt).round() as usize).max(1),
            ..base.clone()
        };
        cfg.validate()?;
        let mut model = VrdModel::init(cfg.seed, model_cfg.clone());
        train(&mut model, dataset, &cfg)?;
        let eval_cfg = crate::eval::EvalConfig { k: 1, dt, obs_stride: cfg.obs_stride };
        let report = crate::eval::evaluate_model(&model, dataset, &eval_cfg)?;
        rows.push(AblationRow {
            horizon_s,
            dt,
            min_ade: report.min_ade,
            min_fde: report.min_fde,
            actor_mr: report.actor_mr,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::data::{generate_synthetic, parse_mix, GenSpec};

    fn tiny_dataset() -> Vec<Scenario> {
        let spec = GenSpec { sample_rate: 10.0, observation_len: 8, horizon_len: 12 };
        let mix = parse_mix("ped_yield").unwrap();
        generate_synthetic(31, 2, &mix, &spec).unwrap()
    }

    fn tiny_train_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            warmup_epochs: 1,
            horizon: 4,
            obs_stride: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.dt = 0.3;
        assert!(cfg.validate().is_err());
        cfg.dt = 0.2;
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = TrainConfig { epochs: 7, dt: 0.5, ..TrainConfig::default() };
        let text = toml::to_string(&cfg).unwrap();
        let back: TrainConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.epochs, 7);
        assert_eq!(back.dt, 0.5);
    }

    #[test]
    fn training_reduces_open_loop_loss() {
        let data = tiny_dataset();
        let mut model = VrdModel::init(5, ModelConfig::micro());
        let cfg = TrainConfig { epochs: 8, ..tiny_train_cfg() };
        let report = train(&mut model, &data, &cfg).unwrap();
        let first = &report.logs[0];
        let last = report.logs.last().unwrap();
        let t0 = first.rssm + first.target + first.score + first.recon;
        let t1 = last.rssm + last.target + last.score + last.recon;
        assert!(t1 < t0, "loss did not drop: {} -> {}", t0, t1);
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_dataset();
        let cfg = tiny_train_cfg();
        let mut m1 = VrdModel::init(6, ModelConfig::micro());
        let r1 = train(&mut m1, &data, &cfg).unwrap();
        let mut m2 = VrdModel::init(6, ModelConfig::micro());
        let r2 = train(&mut m2, &data, &cfg).unwrap();
        assert_eq!(r1.logs.last().unwrap().dream, r2.logs.last().unwrap().dream);
        for (a, b) in m1.store.iter().zip(m2.store.iter()) {
            assert_eq!(a.1.value.data, b.1.value.data);
        }
    }

    #[test]
    fn dream_loss_runs_on_fresh_model() {
        let data = tiny_dataset();
        let model = VrdModel::init(7, ModelConfig::micro());
        let mut ctx = Ctx::new();
        let (_, v) = dream_loss(&model, &mut ctx, &data[0], &tiny_train_cfg()).unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }
}
