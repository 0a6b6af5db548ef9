//! Forecasting metrics: minADE_K, minFDE_K, and the 2 m actor miss rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Scenario;

pub const MISS_THRESHOLD_M: f64 = 2.0;

/// K candidate trajectories for one agent, positions at fixed steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentForecast {
    pub agent_id: String,
    pub trajectories: Vec<Vec<[f64; 2]>>,
}

fn check_lengths(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<()> {
    if pred.len() != gt.len() || gt.is_empty() {
        return Err(Error::Shape {
            op: "metrics",
            detail: format!("prediction length {} vs ground truth {}", pred.len(), gt.len()),
        });
    }
    Ok(())
}

/// Mean Euclidean displacement over the horizon for one trajectory.
pub fn ade(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<f64> {
    check_lengths(pred, gt)?;
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt())
        .sum();
    Ok(sum / gt.len() as f64)
}

/// Final displacement for one trajectory.
pub fn fde(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<f64> {
    check_lengths(pred, gt)?;
    let p = pred.last().unwrap();
    let g = gt.last().unwrap();
    Ok(((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt())
}

fn min_over_k<F>(preds: &[Vec<[f64; 2]>], gt: &[[f64; 2]], f: F) -> Result<f64>
where
    F: Fn(&[[f64; 2]], &[[f64; 2]]) -> Result<f64>,
{
    if preds.is_empty() {
        return Err(Error::Shape { op: "metrics", detail: "no predictions".into() });
    }
    let mut best = f64::INFINITY;
    for p in preds {
        best = best.min(f(p, gt)?);
    }
    Ok(best)
}

/// Best-of-K average displacement per agent, averaged over agents.
pub fn min_ade(per_agent: &[(Vec<Vec<[f64; 2]>>, Vec<[f64; 2]>)]) -> Result<f64> {
    let mut sum = 0.0;
    for (preds, gt) in per_agent {
        sum += min_over_k(preds, gt, ade)?;
    }
    Ok(sum / per_agent.len() as f64)
}

/// Best-of-K final displacement per agent, averaged over agents.
pub fn min_fde(per_agent: &[(Vec<Vec<[f64; 2]>>, Vec<[f64; 2]>)]) -> Result<f64> {
    let mut sum = 0.0;
    for (preds, gt) in per_agent {
        sum += min_over_k(preds, gt, fde)?;
    }
    Ok(sum / per_agent.len() as f64)
}

/// Fraction of agents whose best-of-K final displacement exceeds the
/// threshold. A final displacement of exactly 2.0 m counts as a hit.
pub fn actor_mr(per_agent: &[(Vec<Vec<[f64; 2]>>, Vec<[f64; 2]>)], threshold: f64) -> Result<f64> {
    let mut misses = 0usize;
    for (preds, gt) in per_agent {
        if min_over_k(preds, gt, fde)? > threshold {
            misses += 1;
        }
    }
    Ok(misses as f64 / per_agent.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioScore {
    pub scenario_id: String,
    pub num_agents: usize,
    pub min_ade: f64,
    pub min_fde: f64,
    pub actor_mr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub min_ade: f64,
    pub min_fde: f64,
    pub actor_mr: f64,
    pub num_agents: usize,
    pub per_scenario: Vec<ScenarioScore>,
    /// (scenario id, step index) for rollouts aborted on non-finite latents.
    pub aborted: Vec<(String, usize)>,
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario_id,num_agents,min_ade,min_fde,actor_mr\n");
        for row in &self.per_scenario {
            s.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                row.scenario_id, row.num_agents, row.min_ade, row.min_fde, row.actor_mr
            ));
        }
        s.push_str(&format!(
            "TOTAL,{},{:.6},{:.6},{:.6}\n",
            self.num_agents, self.min_ade, self.min_fde, self.actor_mr
        ));
        s
    }
}

/// Evaluate a forecaster over a dataset. The forecaster maps a scenario to
/// per-agent K-trajectory forecasts in any fixed frame, paired with the
/// matching ground truth in the same frame. Rollout aborts
/// (`Error::RolloutAbort`) are counted and excluded.
pub fn evaluate<F>(dataset: &[Scenario], k: usize, mut forecast: F) -> Result<MetricsReport>
where
    F: FnMut(&Scenario) -> Result<Vec<(AgentForecast, Vec<[f64; 2]>)>>,
{
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut per_scenario = Vec::new();
    let mut aborted = Vec::new();
    let mut all_agents: Vec<(Vec<Vec<[f64; 2]>>, Vec<[f64; 2]>)> = Vec::new();
    for sc in dataset {
        let pairs = match forecast(sc) {
            Ok(p) => p,
            Err(Error::RolloutAbort(step)) => {
                aborted.push((sc.id.clone(), step));
                continue;
            }
            Err(e) => return Err(e),
        };
        let scoped: Vec<(Vec<Vec<[f64; 2]>>, Vec<[f64; 2]>)> = pairs
            .into_iter()
            .map(|(f, gt)| (f.trajectories.into_iter().take(k).collect(), gt))
            .collect();
        if scoped.is_empty() {
            continue;
        }
        per_scenario.push(ScenarioScore {
            scenario_id: sc.id.clone(),
            num_agents: scoped.len(),
            min_ade: min_ade(&scoped)?,
            min_fde: min_fde(&scoped)?,
            actor_mr: actor_mr(&scoped, MISS_THRESHOLD_M)?,
        });
        all_agents.extend(scoped);
    }
    if all_agents.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(MetricsReport {
        k,
        min_ade: min_ade(&all_agents)?,
        min_fde: min_fde(&all_agents)?,
        actor_mr: actor_mr(&all_agents, MISS_THRESHOLD_M)?,
        num_agents: all_agents.len(),
        per_scenario,
        aborted,
    })
}
