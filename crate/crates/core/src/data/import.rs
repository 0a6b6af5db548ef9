//! Import adapters for external recordings. These are documented stubs:
//! only the field mapping is specified, no parsing is implemented.
//!
//! Argoverse 2 motion forecasting (parquet per scenario):
//!   `track_id`        -> `AgentTrack.agent_id`
//!   `object_type`     -> `ObjectClass` (10 classes collapsed to 4)
//!   `position_x/y`    -> `KinematicState.x/y` (meters, city frame)
//!   `heading`         -> `KinematicState.heading`
//!   `velocity_x/y`    -> `KinematicState.speed` (norm)
//!   `focal_track_id`  -> `Scenario.ego_id`
//!   map lane segments -> `MapPolyline` (centerline points, kind lane)
//!
//! inD (CSV trio per recording):
//!   `trackId`               -> `AgentTrack.agent_id`
//!   `class`                 -> `ObjectClass`
//!   `xCenter/yCenter`       -> `KinematicState.x/y`
//!   `heading` (degrees)     -> `KinematicState.heading` (radians, wrapped)
//!   `lonVelocity` magnitude -> `KinematicState.speed`
//!   recording `frameRate`   -> `Scenario.sample_rate` (resampled to 10 Hz)
//!   long recordings are cut with `data::segment`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::Scenario;

pub fn load_argoverse2(_dir: &Path) -> Result<Vec<Scenario>> {
    Err(Error::Unsupported("argoverse2"))
}

pub fn load_ind(_dir: &Path) -> Result<Vec<Scenario>> {
    Err(Error::Unsupported("inD"))
}
