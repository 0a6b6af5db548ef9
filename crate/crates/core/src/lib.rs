//! World-model-based multi-agent motion forecasting: vectorized scene
//! encoding, a deterministic recurrent state-space model dreaming future
//! latents conditioned on ego actions, kinematic reconstruction, target-based
//! ego planning, combined open/closed-loop training, and metric evaluation.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod kinematics;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod planner;
pub mod rssm;
pub mod scene;
pub mod training;

pub use error::{Error, Result};
