//! The full forecasting model: encoder, recurrent latent dynamics,
//! kinematic reconstruction, and the ego planner, sharing one parameter
//! store. Also hosts the dreamed closed-loop rollout.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{checkpoint, Ctx, ParamStore, Var};
use crate::config::{EgoFeed, ModelConfig};
use crate::error::{Error, Result};
use crate::kinematics::{commands_from_states, state_tensor, KinematicHead, KinematicState};
use crate::planner::{generate_candidates, Planner, TargetCandidate};
use crate::rssm::{gru_input, EgoAction, Gru, TransitionPredictor, ACTION_DIM};
use crate::scene::{
    from_ego_frame, state_to_ego_frame, to_ego_frame, vectorize, LatentScene, Scenario,
    SceneEncoder, VectorSet,
};

pub struct VrdModel {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub encoder: SceneEncoder,
    pub gru: Gru,
    pub predictor: TransitionPredictor,
    pub kin: KinematicHead,
    pub planner: Planner,
}

impl VrdModel {
    pub fn init(seed: u64, cfg: ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = SceneEncoder::init(&mut store, "enc", &cfg, &mut rng);
        let gru = Gru::init(&mut store, "rssm", cfg.latent_len() + ACTION_DIM, cfg.h_dim, &mut rng);
        let predictor = TransitionPredictor::init(&mut store, "pred", &cfg, &mut rng);
        let kin = KinematicHead::init(&mut store, "kin", cfg.d_model, cfg.kin_hidden, &mut rng);
        let planner = Planner::init(&mut store, "plan", &cfg, &mut rng);
        VrdModel { cfg, store, encoder, gru, predictor, kin, planner }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.store, path)
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        checkpoint::load(&mut self.store, path)
    }

    /// Vectorize and encode one frame.
    pub fn encode_frame(&self, ctx: &mut Ctx, scenario: &Scenario, t: usize) -> Result<(LatentScene, VectorSet)> {
        let x = vectorize(scenario, t, &self.cfg)?;
        let z = self.encoder.encode(ctx, &self.store, &x)?;
        Ok((z, x))
    }

    /// Ground-truth ego action at frame `t`: the next ego pose expressed in
    /// the ego frame of `t`, with finite-difference controls.
    pub fn gt_ego_action(&self, scenario: &Scenario, t: usize) -> EgoAction {
        let ego = scenario.ego_track();
        let cmds = commands_from_states(&ego.states, scenario.dt());
        let next = ego.states[(t + 1).min(ego.states.len() - 1)];
        let p = to_ego_frame(&ego.states[t], [next.x, next.y]);
        EgoAction::clamped(p[0], p[1], cmds[t].accel, cmds[t].turn_rate)
    }

    /// Teacher-forced pass over the observation window. Frames are taken
    /// every `stride` steps, always ending at the last observed frame. The
    /// recurrence consumes every frame except the last, whose latent is
    /// returned for the rollout to start from.
    pub fn observe(&self, ctx: &mut Ctx, scenario: &Scenario, stride: usize) -> Result<(Var, LatentScene, VectorSet)> {
        let frames = observation_frames(scenario, stride);
        let mut h = self.gru.zero_state(ctx)?;
        for window in frames.windows(2) {
            let (z, _) = self.encode_frame(ctx, scenario, window[0])?;
            let a = ctx.tape.constant(self.gt_ego_action(scenario, window[0]).to_tensor())?;
            let x = gru_input(ctx, &z, a)?;
            h = self.gru.step(ctx, &self.store, h, x)?;
        }
        let last = *frames.last().unwrap();
        let (z, x) = self.encode_frame(ctx, scenario, last)?;
        Ok((h, z, x))
    }
}

/// Frame indices consumed by `VrdModel::observe`.
pub fn observation_frames(scenario: &Scenario, stride: usize) -> Vec<usize> {
    let t0 = scenario.obs_end();
    let stride = stride.max(1);
    let mut frames: Vec<usize> = (1..=t0).rev().step_by(stride).collect();
    frames.reverse();
    frames
}

/// One dreamed step: the predicted latent, the per-slot kinematic states
/// after integration, and the ego action fed to the recurrence.
pub struct DreamStep {
    pub z: LatentScene,
    pub states: Vec<Option<Var>>,
    pub commands: Vec<Option<Var>>,
    pub action: Var,
}

/// A dreamed closed-loop rollout, all coordinates in the ego frame of the
/// last observed step.
pub struct DreamRollout {
    pub order: Vec<Option<String>>,
    pub steps: Vec<DreamStep>,
    pub target_index: usize,
    pub candidates: Vec<TargetCandidate>,
    pub used_fallback: bool,
    /// World-frame ego pose at the last observed step.
    pub anchor: KinematicState,
}

impl DreamRollout {
    /// Per-agent dreamed positions, converted back to the world frame.
    pub fn agent_positions_world(&self, ctx: &Ctx) -> Vec<(String, Vec<[f64; 2]>)> {
        let mut out = Vec::new();
        for (slot, id) in self.order.iter().enumerate() {
            let Some(id) = id else { continue };
            let mut track = Vec::with_capacity(self.steps.len());
            for step in &self.steps {
                let s = step.states[slot].expect("valid slot has a state");
                let v = &ctx.tape.value(s).data;
                track.push(from_ego_frame(&self.anchor, [v[0], v[1]]));
            }
            out.push((id.clone(), track));
        }
        out
    }
}

impl VrdModel {
    /// Dream `horizon` steps forward from the last observed frame. The ego
    /// target is chosen once (rank `target_rank` by probability) and held
    /// fixed; the trajectory toward it is re-planned from each predicted
    /// latent. Non-finite latents abort with the failing step index.
    pub fn dream(
        &self,
        ctx: &mut Ctx,
        scenario: &Scenario,
        horizon: usize,
        dt: f64,
        target_rank: usize,
        obs_stride: usize,
    ) -> Result<DreamRollout> {
        if horizon == 0 {
            return Err(Error::Config("dream horizon must be >= 1".into()));
        }
        let t0 = scenario.obs_end();
        let anchor = scenario.ego_track().states[t0];
        let (mut h, mut z, _x) = self.observe(ctx, scenario, obs_stride)?;

        // initial per-slot states in the anchor frame
        let order = z.order.clone();
        let mut states: Vec<Option<Var>> = Vec::with_capacity(order.len());
        for id in &order {
            match id {
                Some(id) => {
                    let world = scenario.track(id).expect("vectorized agent exists").states[t0];
                    let local = state_to_ego_frame(&anchor, &world);
                    states.push(Some(ctx.tape.constant(state_tensor(local))?));
                }
                None => states.push(None),
            }
        }

        // pick the ego target once from the initial latent
        let (candidates, used_fallback) =
            generate_candidates(scenario, &anchor, self.cfg.n_anchors, &self.cfg)?;
        let dist = self.planner.score_targets(ctx, &self.store, &z, &candidates)?;
        let ranked = dist.top_targets(ctx, target_rank + 1);
        let target_index = *ranked.last().ok_or(Error::Config("no valid targets".into()))?;

        let mut steps = Vec::with_capacity(horizon);
        for step in 0..horizon {
            let result = self.dream_step(ctx, &mut h, &z, &states, &dist, target_index, dt);
            let (action, zhat, next_states, commands) = match result {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) | Err(Error::DegenerateLatent) => {
                    return Err(Error::RolloutAbort(step))
                }
                Err(e) => return Err(e),
            };
            if !ctx.tape.value(zhat.embed).data.iter().all(|v| v.is_finite()) {
                return Err(Error::RolloutAbort(step));
            }
            z = LatentScene { embed: zhat.embed, mask: zhat.mask.clone(), order: zhat.order.clone() };
            states = next_states.clone();
            steps.push(DreamStep { z: zhat, states: next_states, commands, action });
        }
        Ok(DreamRollout { order, steps, target_index, candidates, used_fallback, anchor })
    }

    fn dream_step(
        &self,
        ctx: &mut Ctx,
        h: &mut Var,
        z: &LatentScene,
        states: &[Option<Var>],
        dist: &crate::planner::TargetDistribution,
        target_index: usize,
        dt: f64,
    ) -> Result<(Var, LatentScene, Vec<Option<Var>>, Vec<Option<Var>>)> {
        let action = match self.cfg.ego_feed {
            EgoFeed::Planner => {
                // re-plan toward the fixed target from the current latent
                let target = self.planner.target_of(ctx, dist, target_index)?;
                let trajs = self.planner.generate_trajectories(ctx, &self.store, z, &[target])?;
                ctx.tape.row(trajs[0], 0)?
            }
            EgoFeed::Reconstruction => {
                let ego_slot = z
                    .order
                    .iter()
                    .position(|id| id.is_some())
                    .ok_or(Error::Config("no ego slot".into()))?;
                let cmds = self.kin.decode(ctx, &self.store, z)?;
                let cmd = cmds[ego_slot].expect("ego slot is valid");
                let s = states[ego_slot].expect("ego slot has a state");
                let next = crate::kinematics::integrate_var(ctx, s, cmd, dt)?;
                let xy = ctx.tape.slice(next, 0, 2)?;
                ctx.tape.concat(&[xy, cmd])?
            }
        };
        let x = gru_input(ctx, z, action)?;
        *h = self.gru.step(ctx, &self.store, *h, x)?;
        let zhat = self.predictor.predict(ctx, &self.store, *h, &z.mask, &z.order)?;
        let (next_states, commands) = self.kin.reconstruct_scene(ctx, &self.store, states, &zhat, dt)?;
        Ok((action, zhat, next_states, commands))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, parse_mix, GenSpec};

    fn tiny_scenario() -> Scenario {
        let spec = GenSpec { sample_rate: 10.0, observation_len: 10, horizon_len: 20 };
        let mix = parse_mix("ped_yield").unwrap();
        generate_synthetic(21, 1, &mix, &spec).unwrap().remove(0)
    }

    #[test]
    fn dream_runs_and_is_deterministic() {
        let model = VrdModel::init(1, ModelConfig::micro());
        let sc = tiny_scenario();
        let mut ctx = Ctx::new();
        let r1 = model.dream(&mut ctx, &sc, 5, 0.1, 0, 3).unwrap();
        let p1 = r1.agent_positions_world(&ctx);
        let mut ctx2 = Ctx::new();
        let r2 = model.dream(&mut ctx2, &sc, 5, 0.1, 0, 3).unwrap();
        let p2 = r2.agent_positions_world(&ctx2);
        assert_eq!(p1, p2);
        assert_eq!(r1.steps.len(), 5);
        for (_, track) in &p1 {
            assert_eq!(track.len(), 5);
            assert!(track.iter().all(|p| p[0].is_finite() && p[1].is_finite()));
        }
    }

    #[test]
    fn dream_zero_horizon_rejected() {
        let model = VrdModel::init(1, ModelConfig::micro());
        let sc = tiny_scenario();
        let mut ctx = Ctx::new();
        assert!(model.dream(&mut ctx, &sc, 0, 0.1, 0, 3).is_err());
    }

    #[test]
    fn checkpoint_round_trip_preserves_dream() {
        let dir = std::env::temp_dir().join(format!("vrd-model-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        let model = VrdModel::init(2, ModelConfig::micro());
        model.save(&path).unwrap();
        let mut other = VrdModel::init(3, ModelConfig::micro());
        other.load(&path).unwrap();
        let sc = tiny_scenario();
        let mut c1 = Ctx::new();
        let p1 = model.dream(&mut c1, &sc, 4, 0.1, 0, 3).unwrap().agent_positions_world(&c1);
        let mut c2 = Ctx::new();
        let p2 = other.dream(&mut c2, &sc, 4, 0.1, 0, 3).unwrap().agent_positions_world(&c2);
        assert_eq!(p1, p2);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn reconstruction_feed_also_rolls() {
        let mut cfg = ModelConfig::micro();
        cfg.ego_feed = EgoFeed::Reconstruction;
        let model = VrdModel::init(4, cfg);
        let sc = tiny_scenario();
        let mut ctx = Ctx::new();
        let r = model.dream(&mut ctx, &sc, 3, 0.1, 0, 3).unwrap();
        assert_eq!(r.steps.len(), 3);
    }
}
