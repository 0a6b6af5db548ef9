//! Model hyperparameters. Defaults are sized for desk-scale training.

use serde::{Deserialize, Serialize};

/// Which side of the transition loss has its gradient detached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetachSide {
    /// Detach the encoded latent z, so the transition predictor moves
    /// toward the representation model.
    #[default]
    Representation,
    /// Detach the predicted latent instead; kept as an ablation switch.
    Prediction,
}

/// What the recurrent model consumes as the dreamed ego action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EgoFeed {
    /// The re-planned trajectory's first state (default).
    #[default]
    Planner,
    /// The ego's own kinematic reconstruction.
    Reconstruction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Agent embedding width D.
    pub d_model: usize,
    /// Maximum agent slots per scene.
    pub n_max: usize,
    /// Subgraph MLP width in the polyline encoder.
    pub subgraph_hidden: usize,
    /// GRU hidden width.
    pub h_dim: usize,
    /// Transition predictor hidden width.
    pub pred_hidden: usize,
    /// Kinematic head hidden width.
    pub kin_hidden: usize,
    /// Target anchors N.
    pub n_anchors: usize,
    /// Trajectories kept for scoring M.
    pub m_targets: usize,
    /// Ego trajectory length in steps (at the model's dt).
    pub t_steps: usize,
    /// Planner MLP hidden widths.
    pub planner_hidden: usize,
    pub traj_hidden: usize,
    /// Map crop radius around the ego, meters.
    pub crop_radius: f64,
    /// Arc-length spacing for polyline resampling, meters.
    pub resample_spacing: f64,
    /// Extra reach beyond speed * horizon when sampling anchors, meters.
    pub anchor_margin: f64,
    /// Temperature for the ground-truth trajectory score softmax.
    pub score_alpha: f64,
    /// Forbid reversing by clamping speed at zero during integration.
    pub clamp_speed: bool,
    pub detach_side: DetachSide,
    pub ego_feed: EgoFeed,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_max: 16,
            subgraph_hidden: 64,
            h_dim: 256,
            pred_hidden: 256,
            kin_hidden: 64,
            n_anchors: 64,
            m_targets: 6,
            t_steps: 60,
            planner_hidden: 64,
            traj_hidden: 256,
            crop_radius: 100.0,
            resample_spacing: 2.0,
            anchor_margin: 20.0,
            score_alpha: 1.0,
            clamp_speed: true,
            detach_side: DetachSide::default(),
            ego_feed: EgoFeed::default(),
        }
    }
}

impl ModelConfig {
    /// Length of the flattened latent fed to the recurrent cell.
    pub fn latent_len(&self) -> usize {
        self.n_max * self.d_model
    }

    /// A small configuration for fast tests and gradient checks.
    pub fn micro() -> Self {
        ModelConfig {
            d_model: 4,
            n_max: 3,
            subgraph_hidden: 4,
            h_dim: 6,
            pred_hidden: 6,
            kin_hidden: 4,
            n_anchors: 8,
            m_targets: 2,
            t_steps: 4,
            planner_hidden: 4,
            traj_hidden: 6,
            ..ModelConfig::default()
        }
    }
}
