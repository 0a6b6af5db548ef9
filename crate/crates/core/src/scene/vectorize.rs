//! Raw observations -> ego-frame vector sets.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::kinematics::KinematicState;
use crate::scene::types::{
    MapPolyline, ObjectClass, PolylineKind, PolylineSource, SceneVector, Scenario, VectorPolyline,
    VectorSet, ATTR_DIM,
};

fn kind_attr(kind: PolylineKind) -> [f64; ATTR_DIM] {
    let mut a = [0.0; ATTR_DIM];
    let idx = match kind {
        PolylineKind::LaneCenterline => 0,
        PolylineKind::Boundary => 1,
        PolylineKind::Crosswalk => 2,
    };
    a[idx] = 1.0;
    a
}

fn class_attr(class: ObjectClass) -> [f64; ATTR_DIM] {
    let mut a = [0.0; ATTR_DIM];
    let idx = match class {
        ObjectClass::Vehicle => 3,
        ObjectClass::Pedestrian => 4,
        ObjectClass::Cyclist => 5,
        ObjectClass::Other => 6,
    };
    a[idx] = 1.0;
    a
}

/// Map a point into the frame centered on `ego` with its heading along +x.
pub fn to_ego_frame(ego: &KinematicState, p: [f64; 2]) -> [f64; 2] {
    let dx = p[0] - ego.x;
    let dy = p[1] - ego.y;
    let (s, c) = ego.heading.sin_cos();
    [c * dx + s * dy, -s * dx + c * dy]
}

/// Map an ego-frame point back to the map frame.
pub fn from_ego_frame(ego: &KinematicState, p: [f64; 2]) -> [f64; 2] {
    let (s, c) = ego.heading.sin_cos();
    [ego.x + c * p[0] - s * p[1], ego.y + s * p[0] + c * p[1]]
}

/// Full kinematic state expressed in the ego frame.
pub fn state_to_ego_frame(ego: &KinematicState, s: &KinematicState) -> KinematicState {
    let p = to_ego_frame(ego, [s.x, s.y]);
    KinematicState {
        x: p[0],
        y: p[1],
        heading: crate::autodiff::wrap_angle(s.heading - ego.heading),
        speed: s.speed,
    }
}

/// Resample a polyline at uniform arc length, keeping both endpoints.
pub fn resample(points: &[[f64; 2]], spacing: f64) -> Vec<[f64; 2]> {
    debug_assert!(spacing > 0.0 && points.len() >= 2);
    let mut out = vec![points[0]];
    let mut carried = 0.0;
    for w in points.windows(2) {
        let seg = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
        let len = (seg[0] * seg[0] + seg[1] * seg[1]).sqrt();
        if len == 0.0 {
            continue;
        }
        let mut s = spacing - carried;
        while s < len {
            let f = s / len;
            out.push([w[0][0] + f * seg[0], w[0][1] + f * seg[1]]);
            s += spacing;
        }
        carried = (len + carried) % spacing;
    }
    let last = *points.last().unwrap();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

fn polyline_in_range(p: &MapPolyline, ego: &KinematicState, radius: f64) -> bool {
    p.points.iter().any(|pt| {
        let dx = pt[0] - ego.x;
        let dy = pt[1] - ego.y;
        dx * dx + dy * dy <= radius * radius
    })
}

/// Build the vectorized observation at step `t`. Agent history polylines
/// cover the trailing observation window; map polylines are cropped to the
/// configured radius and resampled.
pub fn vectorize(scenario: &Scenario, t: usize, cfg: &ModelConfig) -> Result<VectorSet> {
    if t == 0 {
        return Err(Error::Scenario {
            id: scenario.id.clone(),
            detail: "step 0 has no history to vectorize".into(),
        });
    }
    let ego_track = scenario.ego_track();
    if t >= ego_track.valid.len() || !ego_track.valid[t] {
        return Err(Error::EgoInvalid(t));
    }
    let ego = ego_track.states[t];

    // early frames use however much history is available
    let win_start = (t + 1).saturating_sub(scenario.observation_len);
    let mut polylines = Vec::new();

    // agent history polylines, ego first
    let mut track_refs: Vec<&crate::scene::types::AgentTrack> = vec![ego_track];
    track_refs.extend(scenario.tracks.iter().filter(|tr| tr.agent_id != scenario.ego_id));
    for tr in track_refs {
        if t >= tr.valid.len() || !tr.valid[t] {
            continue;
        }
        let attr = class_attr(tr.class);
        let idx = polylines.len();
        let mut vectors = Vec::new();
        for step in win_start..t {
            if tr.valid[step] && tr.valid[step + 1] {
                let a = tr.states[step];
                let b = tr.states[step + 1];
                vectors.push(SceneVector {
                    start: to_ego_frame(&ego, [a.x, a.y]),
                    end: to_ego_frame(&ego, [b.x, b.y]),
                    attr,
                    polyline: idx,
                });
            }
        }
        if !vectors.is_empty() {
            polylines.push(VectorPolyline {
                source: PolylineSource::Agent { agent_id: tr.agent_id.clone(), class: tr.class },
                vectors,
            });
        }
    }
    let num_agents = polylines.len();
    let ego_first = matches!(
        polylines.first().map(|p| &p.source),
        Some(PolylineSource::Agent { agent_id, .. }) if *agent_id == scenario.ego_id
    );
    if !ego_first {
        return Err(Error::EgoInvalid(t));
    }

    // cropped, resampled map polylines
    for p in &scenario.polylines {
        if !polyline_in_range(p, &ego, cfg.crop_radius) {
            continue;
        }
        let pts = resample(&p.points, cfg.resample_spacing);
        let attr = kind_attr(p.kind);
        let idx = polylines.len();
        let vectors: Vec<SceneVector> = pts
            .windows(2)
            .map(|w| SceneVector {
                start: to_ego_frame(&ego, w[0]),
                end: to_ego_frame(&ego, w[1]),
                attr,
                polyline: idx,
            })
            .collect();
        if !vectors.is_empty() {
            polylines.push(VectorPolyline { source: PolylineSource::Map, vectors });
        }
    }

    if polylines.len() == num_agents {
        return Err(Error::EmptyMap);
    }
    Ok(VectorSet { polylines, num_agents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::types::PolylineKind;
    use std::f64::consts::FRAC_PI_2;

    fn straight_track(id: &str, n: usize, speed: f64) -> crate::scene::types::AgentTrack {
        let states = (0..n)
            .map(|i| KinematicState { x: i as f64 * speed * 0.1, y: 0.0, heading: 0.0, speed })
            .collect();
        crate::scene::types::AgentTrack {
            agent_id: id.to_string(),
            class: ObjectClass::Vehicle,
            states,
            valid: vec![true; n],
        }
    }

    fn lane(points: Vec<[f64; 2]>) -> MapPolyline {
        MapPolyline { id: "lane".into(), kind: PolylineKind::LaneCenterline, points }
    }

    #[test]
    fn identity_frame() {
        let ego = KinematicState { x: 0.0, y: 0.0, heading: 0.0, speed: 0.0 };
        assert_eq!(to_ego_frame(&ego, [10.0, 0.0]), [10.0, 0.0]);
    }

    #[test]
    fn rotated_frame() {
        let ego = KinematicState { x: 5.0, y: 0.0, heading: FRAC_PI_2, speed: 0.0 };
        let p = to_ego_frame(&ego, [5.0, 10.0]);
        assert!((p[0] - 10.0).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12);
    }

    #[test]
    fn ego_frame_round_trip() {
        let ego = KinematicState { x: 3.0, y: -2.0, heading: 0.8, speed: 1.0 };
        let p = [7.5, 4.25];
        let back = from_ego_frame(&ego, to_ego_frame(&ego, p));
        assert!((back[0] - p[0]).abs() < 1e-12);
        assert!((back[1] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn history_polylines_cover_window() {
        let n = 50;
        let mut tracks = vec![straight_track("ego", n, 5.0)];
        let mut t2 = straight_track("a1", n, 3.0);
        t2.states.iter_mut().for_each(|s| s.y = 4.0);
        let mut t3 = straight_track("a2", n, 2.0);
        t3.states.iter_mut().for_each(|s| s.y = -4.0);
        tracks.push(t2);
        tracks.push(t3);
        let scenario = Scenario {
            id: "s".into(),
            sample_rate: 10.0,
            polylines: vec![lane(vec![[-50.0, 0.0], [200.0, 0.0]])],
            tracks,
            ego_id: "ego".into(),
            observation_len: 40,
            horizon_len: 10,
        };
        let vs = vectorize(&scenario, 39, &ModelConfig::default()).unwrap();
        assert_eq!(vs.num_agents, 3);
        for p in &vs.polylines[..3] {
            assert_eq!(p.vectors.len(), 39);
        }
    }

    #[test]
    fn empty_map_is_an_error() {
        let scenario = Scenario {
            id: "s".into(),
            sample_rate: 10.0,
            polylines: vec![lane(vec![[5000.0, 5000.0], [5100.0, 5000.0]])],
            tracks: vec![straight_track("ego", 50, 5.0)],
            ego_id: "ego".into(),
            observation_len: 40,
            horizon_len: 10,
        };
        assert!(matches!(
            vectorize(&scenario, 39, &ModelConfig::default()),
            Err(Error::EmptyMap)
        ));
    }

    #[test]
    fn resample_spacing_holds() {
        let pts = resample(&[[0.0, 0.0], [10.0, 0.0]], 2.0);
        assert_eq!(pts.len(), 6);
        for w in pts.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            assert!(d <= 2.0 + 1e-9);
        }
    }
}
