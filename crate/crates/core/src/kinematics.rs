//! Per-agent kinematic commands decoded from the latent and the bicycle
//! integrator that turns them back into poses.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{wrap_angle, Ctx, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::scene::LatentScene;

/// Command bounds; decoder output is tanh-squashed into these.
pub const MAX_ACCEL: f64 = 10.0;
pub const MAX_TURN_RATE: f64 = 1.5;

/// Pose of one agent: position in meters, heading in (-pi, pi], speed >= 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl KinematicState {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        KinematicState { x, y, heading: wrap_angle(heading), speed: speed.max(0.0) }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite() && self.speed.is_finite()
    }
}

/// Controls: longitudinal acceleration and rate of turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicCommand {
    pub accel: f64,
    pub turn_rate: f64,
}

impl KinematicCommand {
    pub fn clamped(accel: f64, turn_rate: f64) -> Self {
        KinematicCommand {
            accel: accel.clamp(-MAX_ACCEL, MAX_ACCEL),
            turn_rate: turn_rate.clamp(-MAX_TURN_RATE, MAX_TURN_RATE),
        }
    }
}

/// One forward-Euler step. Speed and heading are updated first, then the
/// position uses the updated values. Speed is clamped at zero from below.
pub fn integrate(s: KinematicState, c: KinematicCommand, dt: f64) -> Result<KinematicState> {
    if !(s.is_finite() && c.accel.is_finite() && c.turn_rate.is_finite() && dt > 0.0) {
        return Err(Error::NonFinite { op: "integrate" });
    }
    let v = (s.speed + c.accel * dt).max(0.0);
    let heading = wrap_angle(s.heading + c.turn_rate * dt);
    Ok(KinematicState {
        x: s.x + v * heading.cos() * dt,
        y: s.y + v * heading.sin() * dt,
        heading,
        speed: v,
    })
}

/// Tape version of `integrate`. State and command are 1-D nodes laid out as
/// [x, y, heading, speed] and [accel, turn_rate].
pub fn integrate_var(ctx: &mut Ctx, state: Var, cmd: Var, dt: f64) -> Result<Var> {
    let t = &mut ctx.tape;
    let x = t.slice(state, 0, 1)?;
    let y = t.slice(state, 1, 1)?;
    let psi = t.slice(state, 2, 1)?;
    let v = t.slice(state, 3, 1)?;
    let a = t.slice(cmd, 0, 1)?;
    let w = t.slice(cmd, 1, 1)?;

    let adt = t.scale(a, dt)?;
    let vraw = t.add(v, adt)?;
    let vnew = t.relu(vraw)?; // no reversing

    let wdt = t.scale(w, dt)?;
    let praw = t.add(psi, wdt)?;
    let pnew = t.wrap_angle(praw)?;

    let cosp = t.cos(pnew)?;
    let sinp = t.sin(pnew)?;
    let vx = t.mul(vnew, cosp)?;
    let vy = t.mul(vnew, sinp)?;
    let dx = t.scale(vx, dt)?;
    let dy = t.scale(vy, dt)?;
    let xnew = t.add(x, dx)?;
    let ynew = t.add(y, dy)?;
    t.concat(&[xnew, ynew, pnew, vnew])
}

/// Commands recovered from a pose sequence by central finite differences
/// of speed and heading (one-sided at the endpoints). Heading deltas are
/// wrapped so a crossing of the pi boundary does not spike the turn rate.
pub fn commands_from_states(states: &[KinematicState], dt: f64) -> Vec<KinematicCommand> {
    let n = states.len();
    if n < 2 {
        return vec![KinematicCommand { accel: 0.0, turn_rate: 0.0 }; n];
    }
    (0..n)
        .map(|t| {
            let (lo, hi, span) = if t == 0 {
                (0, 1, dt)
            } else if t == n - 1 {
                (n - 2, n - 1, dt)
            } else {
                (t - 1, t + 1, 2.0 * dt)
            };
            KinematicCommand {
                accel: (states[hi].speed - states[lo].speed) / span,
                turn_rate: wrap_angle(states[hi].heading - states[lo].heading) / span,
            }
        })
        .collect()
}

pub fn state_tensor(s: KinematicState) -> Tensor {
    Tensor::vector(vec![s.x, s.y, s.heading, s.speed])
}

pub fn state_from_slice(v: &[f64]) -> KinematicState {
    KinematicState { x: v[0], y: v[1], heading: v[2], speed: v[3] }
}

/// Shared 2-layer MLP mapping each valid agent embedding to a command.
pub struct KinematicHead {
    mlp: Mlp,
}

impl KinematicHead {
    pub fn init(store: &mut ParamStore, prefix: &str, d_model: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        KinematicHead { mlp: Mlp::init(store, prefix, &[d_model, hidden, 2], rng) }
    }

    /// Commands for every valid slot, as [accel, turn_rate] tape nodes.
    /// Masked slots yield `None`.
    pub fn decode(&self, ctx: &mut Ctx, store: &ParamStore, z: &LatentScene) -> Result<Vec<Option<Var>>> {
        let mut out = Vec::with_capacity(z.mask.len());
        for slot in 0..z.mask.len() {
            if !z.mask[slot] {
                out.push(None);
                continue;
            }
            let row = ctx.tape.row(z.embed, slot)?;
            let raw = self.mlp.forward(ctx, store, row)?;
            let sq = ctx.tape.tanh(raw)?;
            let a = ctx.tape.slice(sq, 0, 1)?;
            let w = ctx.tape.slice(sq, 1, 1)?;
            let a = ctx.tape.scale(a, MAX_ACCEL)?;
            let w = ctx.tape.scale(w, MAX_TURN_RATE)?;
            out.push(Some(ctx.tape.concat(&[a, w])?));
        }
        Ok(out)
    }

    /// decode + integrate for every valid agent slot. Returns the next
    /// states and the commands that produced them.
    pub fn reconstruct_scene(
        &self,
        ctx: &mut Ctx,
        store: &ParamStore,
        states: &[Option<Var>],
        z: &LatentScene,
        dt: f64,
    ) -> Result<(Vec<Option<Var>>, Vec<Option<Var>>)> {
        if states.len() != z.mask.len() {
            return Err(Error::Shape {
                op: "reconstruct_scene",
                detail: format!("{} states for {} slots", states.len(), z.mask.len()),
            });
        }
        let cmds = self.decode(ctx, store, z)?;
        let mut out = Vec::with_capacity(states.len());
        for slot in 0..states.len() {
            match (&states[slot], &cmds[slot]) {
                (Some(s), Some(c)) => out.push(Some(integrate_var(ctx, *s, *c, dt)?)),
                (None, None) => out.push(None),
                _ => {
                    return Err(Error::Shape {
                        op: "reconstruct_scene",
                        detail: format!("slot {} state/mask misalignment", slot),
                    })
                }
            }
        }
        Ok((out, cmds))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn straight_line() {
        let s = KinematicState { x: 0.0, y: 0.0, heading: 0.0, speed: 10.0 };
        let c = KinematicCommand { accel: 0.0, turn_rate: 0.0 };
        let out = integrate(s, c, 0.1).unwrap();
        assert!((out.x - 1.0).abs() < 1e-12);
        assert_eq!(out.y, 0.0);
        assert_eq!(out.heading, 0.0);
        assert_eq!(out.speed, 10.0);
    }

    #[test]
    fn rotation_in_place() {
        let s = KinematicState { x: 2.0, y: 3.0, heading: 0.0, speed: 0.0 };
        let c = KinematicCommand { accel: 0.0, turn_rate: 0.5 };
        let out = integrate(s, c, 0.1).unwrap();
        assert_eq!(out.x, 2.0);
        assert_eq!(out.y, 3.0);
        assert!((out.heading - 0.05).abs() < 1e-12);
    }

    #[test]
    fn zero_command_zero_speed_is_identity() {
        let s = KinematicState { x: 1.0, y: -2.0, heading: 0.7, speed: 0.0 };
        let c = KinematicCommand { accel: 0.0, turn_rate: 0.0 };
        let out = integrate(s, c, 0.1).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn heading_stays_wrapped() {
        let s = KinematicState { x: 0.0, y: 0.0, heading: PI - 0.01, speed: 1.0 };
        let c = KinematicCommand { accel: 0.0, turn_rate: 1.0 };
        let out = integrate(s, c, 0.1).unwrap();
        assert!(out.heading > -PI && out.heading <= PI);
    }

    #[test]
    fn tape_integrate_matches_plain() {
        let s = KinematicState { x: 1.0, y: 2.0, heading: 0.3, speed: 4.0 };
        let c = KinematicCommand { accel: 1.5, turn_rate: -0.2 };
        let plain = integrate(s, c, 0.1).unwrap();

        let mut ctx = Ctx::new();
        let sv = ctx.tape.constant(state_tensor(s)).unwrap();
        let cv = ctx.tape.constant(Tensor::vector(vec![c.accel, c.turn_rate])).unwrap();
        let out = integrate_var(&mut ctx, sv, cv, 0.1).unwrap();
        let v = &ctx.tape.value(out).data;
        assert!((v[0] - plain.x).abs() < 1e-15);
        assert!((v[1] - plain.y).abs() < 1e-15);
        assert!((v[2] - plain.heading).abs() < 1e-15);
        assert!((v[3] - plain.speed).abs() < 1e-15);
    }

    #[test]
    fn commands_recovered_from_constant_controls() {
        let c = KinematicCommand { accel: 0.8, turn_rate: 0.3 };
        let mut s = KinematicState { x: 0.0, y: 0.0, heading: 0.0, speed: 5.0 };
        let mut states = vec![s];
        for _ in 0..20 {
            s = integrate(s, c, 0.1).unwrap();
            states.push(s);
        }
        for rec in commands_from_states(&states, 0.1) {
            assert!((rec.accel - c.accel).abs() < 1e-9);
            assert!((rec.turn_rate - c.turn_rate).abs() < 1e-9);
        }
    }

    #[test]
    fn commands_wrap_across_pi() {
        let c = KinematicCommand { accel: 0.0, turn_rate: 1.0 };
        let mut s = KinematicState { x: 0.0, y: 0.0, heading: PI - 0.05, speed: 1.0 };
        let mut states = vec![s];
        for _ in 0..5 {
            s = integrate(s, c, 0.1).unwrap();
            states.push(s);
        }
        for rec in commands_from_states(&states, 0.1) {
            assert!((rec.turn_rate - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn composition_no_hidden_state() {
        let mut s = KinematicState { x: 0.0, y: 0.0, heading: 0.1, speed: 3.0 };
        let c = KinematicCommand { accel: 0.5, turn_rate: 0.2 };
        for _ in 0..5 {
            s = integrate(s, c, 0.1).unwrap();
        }
        let mut s2 = KinematicState { x: 0.0, y: 0.0, heading: 0.1, speed: 3.0 };
        for _ in 0..5 {
            s2 = integrate(s2, c, 0.1).unwrap();
        }
        assert_eq!(s, s2);
    }
}
