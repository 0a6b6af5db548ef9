//! Synthetic scenario generator. Each archetype is a strategy behind a
//! common trait, registered by name and selected through the mix string
//! (e.g. "straight=4,ped_yield=2"). Kinematics are produced by scripted
//! bicycle-model controls, so exact ground-truth commands exist.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kinematics::{integrate, KinematicCommand, KinematicState};
use crate::scene::{AgentTrack, MapPolyline, ObjectClass, PolylineKind, Scenario};

#[derive(Debug, Clone)]
pub struct GenSpec {
    pub sample_rate: f64,
    pub observation_len: usize,
    pub horizon_len: usize,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec { sample_rate: 10.0, observation_len: 40, horizon_len: 60 }
    }
}

impl GenSpec {
    pub fn steps(&self) -> usize {
        self.observation_len + self.horizon_len
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }
}

/// One scenario family. Implementations script per-step controls and build
/// the matching map geometry.
pub trait Archetype {
    fn name(&self) -> &'static str;
    fn generate(&self, rng: &mut ChaCha8Rng, spec: &GenSpec) -> (Vec<MapPolyline>, Vec<AgentTrack>);
}

/// All known archetypes, in registry order.
pub fn registry() -> Vec<Box<dyn Archetype>> {
    vec![
        Box::new(StraightConstantSpeed),
        Box::new(ProtectedLeftTurn),
        Box::new(UnprotectedTurn),
        Box::new(PedestrianYield),
    ]
}

pub fn archetype_by_name(name: &str) -> Option<Box<dyn Archetype>> {
    registry().into_iter().find(|a| a.name() == name)
}

/// Parse a mix string like "straight=4,ped_yield=2". An empty string means
/// every registered archetype with weight 1.
pub fn parse_mix(s: &str) -> Result<Vec<(String, usize)>> {
    if s.trim().is_empty() {
        return Ok(registry().iter().map(|a| (a.name().to_string(), 1)).collect());
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let (name, w) = match part.split_once('=') {
            Some((n, w)) => {
                let w: usize =
                    w.trim().parse().map_err(|_| Error::Config(format!("bad mix weight in '{part}'")))?;
                (n.trim(), w)
            }
            None => (part.trim(), 1),
        };
        if archetype_by_name(name).is_none() {
            return Err(Error::Config(format!(
                "unknown archetype '{}'; known: {}",
                name,
                registry().iter().map(|a| a.name()).collect::<Vec<_>>().join(", ")
            )));
        }
        if w == 0 {
            return Err(Error::Config(format!("zero weight for '{name}'")));
        }
        out.push((name.to_string(), w));
    }
    Ok(out)
}

/// Generate `count` scenarios, cycling through the mix proportionally.
/// Deterministic per seed; scenario ids embed the seed so disjoint seeds
/// produce disjoint ids.
pub fn generate_synthetic(seed: u64, count: usize, mix: &[(String, usize)], spec: &GenSpec) -> Result<Vec<Scenario>> {
    if count == 0 {
        return Err(Error::Config("count must be >= 1".into()));
    }
    let mut order = Vec::new();
    for (name, w) in mix {
        for _ in 0..*w {
            order.push(name.clone());
        }
    }
    if order.is_empty() {
        return Err(Error::Config("empty archetype mix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let name = &order[i % order.len()];
        let arch = archetype_by_name(name).expect("mix validated");
        let (polylines, tracks) = arch.generate(&mut rng, spec);
        let sc = Scenario {
            id: format!("syn-{seed:08x}-{i:04}-{name}"),
            sample_rate: spec.sample_rate,
            polylines,
            tracks,
            ego_id: "ego".into(),
            observation_len: spec.observation_len,
            horizon_len: spec.horizon_len,
        };
        sc.validate()?;
        out.push(sc);
    }
    Ok(out)
}

/// Integrate a command script into a track of `cmds.len() + 1` states.
fn roll(start: KinematicState, cmds: &[KinematicCommand], dt: f64) -> Vec<KinematicState> {
    let mut states = Vec::with_capacity(cmds.len() + 1);
    states.push(start);
    let mut s = start;
    for &c in cmds {
        s = integrate(s, c, dt).expect("finite script");
        states.push(s);
    }
    states
}

fn track(id: &str, class: ObjectClass, start: KinematicState, cmds: &[KinematicCommand], dt: f64) -> AgentTrack {
    let states = roll(start, cmds, dt);
    let n = states.len();
    AgentTrack { agent_id: id.to_string(), class, states, valid: vec![true; n] }
}

/// Lane centerline sampled from a clean scripted path.
fn lane_from_path(id: &str, states: &[KinematicState], lead_in: f64, lead_out: f64) -> MapPolyline {
    let first = states[0];
    let last = states[states.len() - 1];
    let mut points = vec![[
        first.x - lead_in * first.heading.cos(),
        first.y - lead_in * first.heading.sin(),
    ]];
    for s in states.iter().step_by(5) {
        let p = [s.x, s.y];
        if *points.last().unwrap() != p {
            points.push(p);
        }
    }
    let end = [last.x + lead_out * last.heading.cos(), last.y + lead_out * last.heading.sin()];
    if *points.last().unwrap() != end {
        points.push(end);
    }
    MapPolyline { id: id.to_string(), kind: PolylineKind::LaneCenterline, points }
}

fn straight_lane(id: &str, kind: PolylineKind, from: [f64; 2], to: [f64; 2]) -> MapPolyline {
    MapPolyline { id: id.to_string(), kind, points: vec![from, to] }
}

fn noisy_cruise(rng: &mut ChaCha8Rng, steps: usize, accel_noise: f64) -> Vec<KinematicCommand> {
    (0..steps)
        .map(|_| KinematicCommand {
            accel: rng.gen_range(-accel_noise..=accel_noise),
            turn_rate: 0.0,
        })
        .collect()
}

pub struct StraightConstantSpeed;

impl Archetype for StraightConstantSpeed {
    fn name(&self) -> &'static str {
        "straight"
    }

    fn generate(&self, rng: &mut ChaCha8Rng, spec: &GenSpec) -> (Vec<MapPolyline>, Vec<AgentTrack>) {
        let dt = spec.dt();
        let steps = spec.steps();
        let v = rng.gen_range(5.0..12.0);
        let ego_cmds = vec![KinematicCommand { accel: 0.0, turn_rate: 0.0 }; steps - 1];
        let ego = track(
            "ego",
            ObjectClass::Vehicle,
            KinematicState { x: 0.0, y: 0.0, heading: 0.0, speed: v },
            &ego_cmds,
            dt,
        );
        let reach = v * steps as f64 * dt + 40.0;
        let mut polylines = vec![
            straight_lane("lane0", PolylineKind::LaneCenterline, [-30.0, 0.0], [reach, 0.0]),
            straight_lane("lane1", PolylineKind::LaneCenterline, [-30.0, 3.5], [reach, 3.5]),
            straight_lane("b0", PolylineKind::Boundary, [-30.0, -1.75], [reach, -1.75]),
            straight_lane("b1", PolylineKind::Boundary, [-30.0, 5.25], [reach, 5.25]),
        ];
        polylines.truncate(4);
        let mut tracks = vec![ego];
        let n_agents = rng.gen_range(1..=3);
        for a in 0..n_agents {
            let lane_y = if rng.gen_bool(0.5) { 3.5 } else { 0.0 };
            let off = rng.gen_range(12.0..35.0);
            let av = rng.gen_range(3.0..9.0);
            let cmds = noisy_cruise(rng, steps - 1, 0.2);
            tracks.push(track(
                &format!("a{a}"),
                ObjectClass::Vehicle,
                KinematicState { x: off, y: lane_y, heading: 0.0, speed: av },
                &cmds,
                dt,
            ));
        }
        (polylines, tracks)
    }
}

pub struct ProtectedLeftTurn;

impl Archetype for ProtectedLeftTurn {
    fn name(&self) -> &'static str {
        "left_turn"
    }

    fn generate(&self, rng: &mut ChaCha8Rng, spec: &GenSpec) -> (Vec<MapPolyline>, Vec<AgentTrack>) {
        let dt = spec.dt();
        let steps = spec.steps();
        let v = rng.gen_range(4.0..7.0);
        let radius: f64 = rng.gen_range(6.0..10.0);
        let w = (v / radius).min(1.4);
        let turn_steps = ((std::f64::consts::FRAC_PI_2 / w) / dt).round() as usize;
        let turn_start = spec.observation_len + rng.gen_range(2..10);
        let mut ego_cmds = Vec::with_capacity(steps - 1);
        for s in 0..steps - 1 {
            let turning = s >= turn_start && s < turn_start + turn_steps;
            ego_cmds.push(KinematicCommand { accel: 0.0, turn_rate: if turning { w } else { 0.0 } });
        }
        let ego_start = KinematicState { x: 0.0, y: 0.0, heading: 0.0, speed: v };
        let ego = track("ego", ObjectClass::Vehicle, ego_start, &ego_cmds, dt);
        let ego_lane = lane_from_path("turn_lane", &ego.states, 30.0, 30.0);

        // cross street the ego turns onto
        let turn_x = ego.states[turn_start].x + radius;
        let cross = straight_lane(
            "cross",
            PolylineKind::LaneCenterline,
            [turn_x, -40.0],
            [turn_x, 80.0],
        );
        let boundary = straight_lane("b0", PolylineKind::Boundary, [-30.0, -1.75], [turn_x + 20.0, -1.75]);

        // cross traffic proceeding on its green, away from the ego's path
        let cv = rng.gen_range(4.0..8.0);
        let cross_cmds = noisy_cruise(rng, steps - 1, 0.2);
        let crossing = track(
            "a0",
            ObjectClass::Vehicle,
            KinematicState { x: turn_x + 3.5, y: 35.0, heading: -std::f64::consts::FRAC_PI_2, speed: cv },
            &cross_cmds,
            dt,
        );
        (vec![ego_lane, cross, boundary], vec![ego, crossing])
    }
}

pub struct UnprotectedTurn;

impl Archetype for UnprotectedTurn {
    fn name(&self) -> &'static str {
        "unprotected_turn"
    }

    fn generate(&self, rng: &mut ChaCha8Rng, spec: &GenSpec) -> (Vec<MapPolyline>, Vec<AgentTrack>) {
        let dt = spec.dt();
        let steps = spec.steps();
        let v0 = rng.gen_range(5.0..8.0);
        let v_turn = 2.5;
        let radius: f64 = rng.gen_range(6.0..9.0);
        let w = (v_turn / radius).min(1.4);
        let turn_steps = ((std::f64::consts::FRAC_PI_2 / w) / dt).round() as usize;
        // brake during the observation window, wait out the oncoming car,
        // then turn and accelerate away
        let brake_start = spec.observation_len / 2;
        let brake = -(v0 - v_turn) / ((spec.observation_len - brake_start) as f64 * dt);
        let turn_start = spec.observation_len + rng.gen_range(8..14);
        let mut ego_cmds = Vec::with_capacity(steps - 1);
        for s in 0..steps - 1 {
            let (a, tr) = if s >= brake_start && s < spec.observation_len {
                (brake, 0.0)
            } else if s >= turn_start && s < turn_start + turn_steps {
                (0.3, w)
            } else if s >= turn_start + turn_steps {
                (0.8, 0.0)
            } else {
                (0.0, 0.0)
            };
            ego_cmds.push(KinematicCommand { accel: a, turn_rate: tr });
        }
        let ego = track(
            "ego",
            ObjectClass::Vehicle,
            KinematicState { x: 0.0, y: 0.0, heading: 0.0, speed: v0 },
            &ego_cmds,
            dt,
        );
        let ego_lane = lane_from_path("turn_lane", &ego.states, 30.0, 30.0);

        // oncoming vehicle holding its lane
        let ov = rng.gen_range(6.0..9.0);
        let oncoming_cmds = noisy_cruise(rng, steps - 1, 0.15);
        let oncoming = track(
            "a0",
            ObjectClass::Vehicle,
            KinematicState { x: 55.0, y: 3.5, heading: std::f64::consts::PI, speed: ov },
            &oncoming_cmds,
            dt,
        );
        let oncoming_lane =
            straight_lane("lane_on", PolylineKind::LaneCenterline, [80.0, 3.5], [-30.0, 3.5]);
        (vec![ego_lane, oncoming_lane], vec![ego, oncoming])
    }
}

pub struct PedestrianYield;

impl Archetype for PedestrianYield {
    fn name(&self) -> &'static str {
        "ped_yield"
    }

    fn generate(&self, rng: &mut ChaCha8Rng, spec: &GenSpec) -> (Vec<MapPolyline>, Vec<AgentTrack>) {
        let dt = spec.dt();
        let steps = spec.steps();
        let v0 = rng.gen_range(4.0..7.0);
        let obs_s = spec.observation_len as f64 * dt;
        // crosswalk placed so the stop happens inside the horizon
        let cross_x = v0 * obs_s + rng.gen_range(8.0..12.0);
        let hold_steps = (1.5 / dt) as usize;

        let mut ego_cmds = Vec::with_capacity(steps - 1);
        let mut s = KinematicState { x: 0.0, y: 0.0, heading: 0.0, speed: v0 };
        let mut held = 0usize;
        let mut releasing = false;
        let mut braking = false;
        for _ in 0..steps - 1 {
            let dist = cross_x - 2.0 - s.x;
            let a = if releasing {
                if s.speed < v0 {
                    1.2
                } else {
                    0.0
                }
            } else if s.speed < 0.35 {
                held += 1;
                if held >= hold_steps {
                    releasing = true;
                }
                0.0
            } else if braking || (dist > 0.0 && s.speed * s.speed / (2.0 * dist) > 1.0) {
                braking = true;
                // floor keeps the decel from decaying to zero as the stop
                // point is approached
                (-(s.speed * s.speed) / (2.0 * dist.max(0.3))).min(-0.6)
            } else {
                0.0
            };
            let c = KinematicCommand::clamped(a, 0.0);
            ego_cmds.push(c);
            s = integrate(s, c, dt).expect("finite script");
        }
        let ego = track(
            "ego",
            ObjectClass::Vehicle,
            KinematicState { x: 0.0, y: 0.0, heading: 0.0, speed: v0 },
            &ego_cmds,
            dt,
        );

        // pedestrian crossing on the crosswalk
        let pv = rng.gen_range(1.0..1.5);
        let ped_cmds = vec![KinematicCommand { accel: 0.0, turn_rate: 0.0 }; steps - 1];
        let ped = track(
            "p0",
            ObjectClass::Pedestrian,
            KinematicState { x: cross_x, y: -6.0, heading: std::f64::consts::FRAC_PI_2, speed: pv },
            &ped_cmds,
            dt,
        );

        let reach = v0 * steps as f64 * dt + 40.0;
        let polylines = vec![
            straight_lane("lane0", PolylineKind::LaneCenterline, [-30.0, 0.0], [reach, 0.0]),
            straight_lane("b0", PolylineKind::Boundary, [-30.0, -1.75], [reach, -1.75]),
            straight_lane("b1", PolylineKind::Boundary, [-30.0, 1.75], [reach, 1.75]),
            MapPolyline {
                id: "cw0".into(),
                kind: PolylineKind::Crosswalk,
                points: vec![[cross_x, -4.0], [cross_x, 4.0]],
            },
        ];
        (polylines, vec![ego, ped])
    }
}
