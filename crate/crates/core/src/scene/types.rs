//! Scenario domain types: map polylines, agent tracks, and the latent scene.

use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::kinematics::KinematicState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolylineKind {
    LaneCenterline,
    Boundary,
    Crosswalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Vehicle,
    Pedestrian,
    Cyclist,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPolyline {
    pub id: String,
    pub kind: PolylineKind,
    /// Ordered (x, y) in meters, map frame.
    pub points: Vec<[f64; 2]>,
}

impl MapPolyline {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.points.len() < 2 {
            return Err(format!("polyline {} has {} points, need >= 2", self.id, self.points.len()));
        }
        for w in self.points.windows(2) {
            if w[0] == w[1] {
                return Err(format!("polyline {} has consecutive duplicate points", self.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub agent_id: String,
    pub class: ObjectClass,
    /// One state per step at the scenario sample rate.
    pub states: Vec<KinematicState>,
    pub valid: Vec<bool>,
}

impl AgentTrack {
    pub fn validate(&self) -> std::result::Result<(), String> {
        use std::f64::consts::PI;
        if self.states.len() != self.valid.len() {
            return Err(format!("track {}: states/valid length mismatch", self.agent_id));
        }
        for (i, s) in self.states.iter().enumerate() {
            if !self.valid[i] {
                continue;
            }
            if !s.is_finite() {
                return Err(format!("track {}: non-finite state at step {}", self.agent_id, i));
            }
            if s.speed < 0.0 {
                return Err(format!("track {}: negative speed at step {}", self.agent_id, i));
            }
            if s.speed > 100.0 {
                return Err(format!("track {}: speed {} m/s fails unit sanity", self.agent_id, s.speed));
            }
            if !(s.heading > -PI && s.heading <= PI) {
                return Err(format!("track {}: heading {} outside (-pi, pi]", self.agent_id, s.heading));
            }
        }
        Ok(())
    }

    /// Longest run of valid steps covering [start, end).
    pub fn valid_over(&self, start: usize, end: usize) -> bool {
        end <= self.valid.len() && self.valid[start..end].iter().all(|&v| v)
    }
}

/// The unit of ingestion and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    /// Samples per second.
    pub sample_rate: f64,
    pub polylines: Vec<MapPolyline>,
    pub tracks: Vec<AgentTrack>,
    pub ego_id: String,
    pub observation_len: usize,
    pub horizon_len: usize,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let fail = |detail: String| Error::Scenario { id: self.id.clone(), detail };
        if self.sample_rate <= 0.0 {
            return Err(fail("sample_rate must be positive".into()));
        }
        for p in &self.polylines {
            p.validate().map_err(fail)?;
        }
        for t in &self.tracks {
            t.validate().map_err(fail)?;
        }
        let ego_matches = self.tracks.iter().filter(|t| t.agent_id == self.ego_id).count();
        if ego_matches != 1 {
            return Err(fail(format!("{} tracks match ego id {}", ego_matches, self.ego_id)));
        }
        let need = self.observation_len + self.horizon_len;
        let ego = self.ego_track();
        if ego.states.len() < need {
            return Err(fail(format!(
                "ego track spans {} steps, need observation {} + horizon {}",
                ego.states.len(),
                self.observation_len,
                self.horizon_len
            )));
        }
        Ok(())
    }

    pub fn ego_track(&self) -> &AgentTrack {
        self.tracks
            .iter()
            .find(|t| t.agent_id == self.ego_id)
            .expect("validated scenario has an ego track")
    }

    pub fn track(&self, agent_id: &str) -> Option<&AgentTrack> {
        self.tracks.iter().find(|t| t.agent_id == agent_id)
    }

    /// Last observed step index.
    pub fn obs_end(&self) -> usize {
        self.observation_len - 1
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }
}

/// Number of attribute one-hot slots in a scene vector
/// (3 map kinds + 4 object classes).
pub const ATTR_DIM: usize = 7;
/// Scene vector feature width: start, end, attribute one-hot.
pub const VEC_FEAT: usize = 4 + ATTR_DIM;

/// One vector of the vectorized observation, ego frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneVector {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub attr: [f64; ATTR_DIM],
    /// Index of the owning polyline inside the VectorSet.
    pub polyline: usize,
}

impl SceneVector {
    pub fn features(&self) -> [f64; VEC_FEAT] {
        let mut f = [0.0; VEC_FEAT];
        f[0] = self.start[0];
        f[1] = self.start[1];
        f[2] = self.end[0];
        f[3] = self.end[1];
        f[4..].copy_from_slice(&self.attr);
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolylineSource {
    Map,
    /// History polyline of one agent; ego is always agent slot 0.
    Agent { agent_id: String, class: ObjectClass },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorPolyline {
    pub source: PolylineSource,
    pub vectors: Vec<SceneVector>,
}

/// The vectorized observation x_t: all coordinates in the ego frame at the
/// encoding step. Agent polylines come first, ego first of all.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    pub polylines: Vec<VectorPolyline>,
    /// Number of leading agent polylines.
    pub num_agents: usize,
}

impl VectorSet {
    pub fn agent_ids(&self) -> Vec<String> {
        self.polylines[..self.num_agents]
            .iter()
            .map(|p| match &p.source {
                PolylineSource::Agent { agent_id, .. } => agent_id.clone(),
                PolylineSource::Map => unreachable!("agent polylines lead the set"),
            })
            .collect()
    }
}

/// Per-agent latent z: an N_max x D embedding matrix on the tape, with a
/// validity mask. Masked rows are exactly zero. Slot 0 is the ego.
#[derive(Clone)]
pub struct LatentScene {
    pub embed: Var,
    pub mask: Vec<bool>,
    /// Slot -> agent id for valid slots.
    pub order: Vec<Option<String>>,
}

impl LatentScene {
    pub fn num_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn slot_of(&self, agent_id: &str) -> Option<usize> {
        self.order.iter().position(|o| o.as_deref() == Some(agent_id))
    }
}
