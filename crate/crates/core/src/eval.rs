//! Model evaluation: dreamed rollouts turned into per-agent forecasts and
//! scored with the displacement metrics.

use crate::autodiff::Ctx;
use crate::error::{Error, Result};
use crate::kinematics::{integrate, state_from_slice, KinematicCommand};
use crate::metrics::{evaluate, AgentForecast, MetricsReport};
use crate::model::VrdModel;
use crate::scene::{from_ego_frame, state_to_ego_frame, Scenario};

#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    /// Candidate rollouts per scenario, one per target rank.
    pub k: usize,
    /// Model step size in seconds.
    pub dt: f64,
    pub obs_stride: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { k: 1, dt: 0.1, obs_stride: 5 }
    }
}

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

/// Forecast one scenario: K dreamed rollouts (one per target rank), with
/// positions reported at the scenario's native rate. For coarse model steps
/// the command is held and the kinematics sub-stepped, so intermediate
/// points exist at every native frame. Ground truth is paired in the world
/// frame.
pub fn forecast_scenario(
    model: &VrdModel,
    scenario: &Scenario,
    cfg: &EvalConfig,
) -> Result<Vec<(AgentForecast, Vec<[f64; 2]>)>> {
    let sub = substeps(scenario, cfg.dt)?;
    let n_out = scenario.horizon_len;
    let dream_steps = n_out.div_ceil(sub);
    let t0 = scenario.obs_end();

    // per agent id -> k trajectories
    let mut per_agent: Vec<(String, Vec<Vec<[f64; 2]>>)> = Vec::new();
    for rank in 0..cfg.k.max(1) {
        let mut ctx = Ctx::new();
        let rollout = model.dream(&mut ctx, scenario, dream_steps, cfg.dt, rank, cfg.obs_stride)?;
        let anchor = rollout.anchor;
        for (slot, id) in rollout.order.iter().enumerate() {
            let Some(id) = id else { continue };
            let mut track = Vec::with_capacity(n_out);
            let mut state = state_to_ego_frame(&anchor, &scenario.track(id).unwrap().states[t0]);
            for step in &rollout.steps {
                let cv = &ctx.tape.value(step.commands[slot].unwrap()).data;
                let cmd = KinematicCommand { accel: cv[0], turn_rate: cv[1] };
                for _ in 0..sub {
                    state = integrate(state, cmd, scenario.dt())?;
                    track.push(from_ego_frame(&anchor, [state.x, state.y]));
                }
                state = state_from_slice(&ctx.tape.value(step.states[slot].unwrap()).data);
            }
            track.truncate(n_out);
            match per_agent.iter_mut().find(|(aid, _)| aid == id) {
                Some((_, ts)) => ts.push(track),
                None => per_agent.push((id.clone(), vec![track])),
            }
        }
    }

    let mut out = Vec::new();
    for (id, trajectories) in per_agent {
        let tr = scenario.track(&id).unwrap();
        if (t0 + 1..=t0 + n_out).any(|t| t >= tr.valid.len() || !tr.valid[t]) {
            continue;
        }
        let gt: Vec<[f64; 2]> =
            (t0 + 1..=t0 + n_out).map(|t| [tr.states[t].x, tr.states[t].y]).collect();
        out.push((AgentForecast { agent_id: id, trajectories }, gt));
    }
    Ok(out)
}

pub fn evaluate_model(model: &VrdModel, dataset: &[Scenario], cfg: &EvalConfig) -> Result<MetricsReport> {
    evaluate(dataset, cfg.k.max(1), |sc| forecast_scenario(model, sc, cfg))
}
