//! Scenario domain types, vectorization, and the representation model.

pub mod encoder;
pub mod types;
pub mod vectorize;

pub use encoder::SceneEncoder;
pub use types::{
    AgentTrack, LatentScene, MapPolyline, ObjectClass, PolylineKind, PolylineSource, SceneVector,
    Scenario, VectorPolyline, VectorSet, ATTR_DIM, VEC_FEAT,
};
pub use vectorize::{from_ego_frame, resample, state_to_ego_frame, to_ego_frame, vectorize};
