//! Minimal SVG rendering of a scenario: map polylines, observed and ground
//! truth tracks, and dreamed trajectories.

use std::fmt::Write;

use vrd_core::scene::{PolylineKind, Scenario};

const MARGIN: f64 = 10.0;
const SIZE: f64 = 800.0;

pub struct SvgScene {
    map: Vec<(PolylineKind, Vec<[f64; 2]>)>,
    gt: Vec<(String, Vec<[f64; 2]>)>,
    dreamed: Vec<(String, Vec<[f64; 2]>)>,
}

impl SvgScene {
    pub fn new(scenario: &Scenario) -> Self {
        let t0 = scenario.obs_end();
        let map = scenario.polylines.iter().map(|p| (p.kind, p.points.clone())).collect();
        let gt = scenario
            .tracks
            .iter()
            .map(|tr| {
                let end = (t0 + scenario.horizon_len + 1).min(tr.states.len());
                let pts = tr.states[..end]
                    .iter()
                    .zip(&tr.valid)
                    .filter(|(_, &v)| v)
                    .map(|(s, _)| [s.x, s.y])
                    .collect();
                (tr.agent_id.clone(), pts)
            })
            .collect();
        SvgScene { map, gt, dreamed: Vec::new() }
    }

    pub fn add_dreamed(&mut self, agent_id: &str, points: Vec<[f64; 2]>) {
        self.dreamed.push((agent_id.to_string(), points));
    }

    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        let all = self
            .map
            .iter()
            .flat_map(|(_, pts)| pts.iter())
            .chain(self.gt.iter().flat_map(|(_, pts)| pts.iter()))
            .chain(self.dreamed.iter().flat_map(|(_, pts)| pts.iter()));
        for p in all {
            for i in 0..2 {
                min[i] = min[i].min(p[i]);
                max[i] = max[i].max(p[i]);
            }
        }
        if !min[0].is_finite() {
            return ([0.0, 0.0], [1.0, 1.0]);
        }
        (min, max)
    }

    pub fn render(&self) -> String {
        let (min, max) = self.bounds();
        let span = (max[0] - min[0]).max(max[1] - min[1]).max(1.0);
        let scale = (SIZE - 2.0 * MARGIN) / span;
        // flip y so north is up
        let tx = |p: &[f64; 2]| (MARGIN + (p[0] - min[0]) * scale, SIZE - MARGIN - (p[1] - min[1]) * scale);

        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">"
        );
        let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
        for (kind, pts) in &self.map {
            let color = match kind {
                PolylineKind::LaneCenterline => "#bbbbbb",
                PolylineKind::Boundary => "#888888",
                PolylineKind::Crosswalk => "#c9a227",
            };
            polyline(&mut s, pts, color, 1.5, "none", &tx);
        }
        for (_, pts) in &self.gt {
            polyline(&mut s, pts, "#2e7d32", 2.0, "none", &tx);
        }
        for (_, pts) in &self.dreamed {
            polyline(&mut s, pts, "#c62828", 2.0, "4 3", &tx);
        }
        let _ = writeln!(s, "</svg>");
        s
    }
}

fn polyline<F: Fn(&[f64; 2]) -> (f64, f64)>(
    out: &mut String,
    pts: &[[f64; 2]],
    color: &str,
    width: f64,
    dash: &str,
    tx: &F,
) {
    if pts.len() < 2 {
        return;
    }
    let coords: Vec<String> = pts
        .iter()
        .map(|p| {
            let (x, y) = tx(p);
            format!("{:.1},{:.1}", x, y)
        })
        .collect();
    let _ = writeln!(
        out,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" stroke-dasharray=\"{}\"/>",
        coords.join(" "),
        color,
        width,
        dash
    );
}
