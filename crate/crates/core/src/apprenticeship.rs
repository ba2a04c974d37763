//! Conditional gradient (Frank–Wolfe) over the SF polytope for the
//! "no expert" apprenticeship problem `min_π ‖ψ^π‖`.
//!
//! The linear minimization oracle is the MDP planner: minimizing `∇h(x)·y`
//! over SFs is planning for reward `w = -∇h(x) = -2x`. The result is a mixture
//! of deterministic policies, not a set-improving composition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{dot, solve_optimal_policy, DeterministicPolicy, FeatureMdp, RewardVector};
use crate::successor::compute_sf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CgConfig {
    pub max_iters: usize,
    /// Stop when the Frank–Wolfe gap `∇h(x)·(x - y)` falls below this.
    pub tol: f64,
    /// Exact line search instead of the `2 / (t + 2)` schedule.
    pub line_search: bool,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            max_iters: 500,
            tol: 1e-10,
            line_search: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub policy: DeterministicPolicy,
    pub sf: Vec<f64>,
}

/// A point of the SF polytope held as a convex combination of vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedSfPoint {
    pub point: Vec<f64>,
    pub weights: Vec<f64>,
    pub vertices: Vec<Vertex>,
    pub iterations: usize,
    pub gap: f64,
    /// `‖x_t‖²` after every iteration, starting with `x_0`.
    pub objective_history: Vec<f64>,
}

impl MixedSfPoint {
    pub fn norm(&self) -> f64 {
        dot(&self.point, &self.point).sqrt()
    }

    /// Worst-case value of the mixture: `w̄·x` with `w̄ = -x/‖x‖`, i.e. `-‖x‖`.
    pub fn worst_case_value(&self) -> f64 {
        -self.norm()
    }

    pub fn summary(&self) -> CgSummary {
        CgSummary {
            final_norm: self.norm(),
            worst_case_value: self.worst_case_value(),
            iterations: self.iterations,
            gap: self.gap,
            weights: self.weights.clone(),
            vertex_sfs: self.vertices.iter().map(|v| v.sf.clone()).collect(),
        }
    }
}

/// JSON output of the apprenticeship baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgSummary {
    pub final_norm: f64,
    pub worst_case_value: f64,
    pub iterations: usize,
    pub gap: f64,
    pub weights: Vec<f64>,
    pub vertex_sfs: Vec<Vec<f64>>,
}

pub fn cg_min_norm(mdp: &FeatureMdp, cfg: &CgConfig) -> Result<MixedSfPoint> {
    if cfg.max_iters == 0 {
        return Err(Error::invalid("CG needs at least one iteration"));
    }
    let start = DeterministicPolicy::constant(mdp.num_states(), 0);
    let start_sf = compute_sf(mdp, &start)?.aggregate().to_vec();
    let mut x = start_sf.clone();
    let mut weights = vec![1.0];
    let mut vertices = vec![Vertex {
        policy: start,
        sf: start_sf,
    }];
    let mut history = vec![dot(&x, &x)];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;

    for t in 1..=cfg.max_iters {
        iterations = t;
        let w = RewardVector::new(x.iter().map(|v| -2.0 * v).collect())?;
        let policy = solve_optimal_policy(mdp, &w)?;
        let y = compute_sf(mdp, &policy)?.aggregate().to_vec();
        let direction: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        gap = -2.0 * dot(&x, &direction);
        if gap < cfg.tol {
            break;
        }
        let alpha = if cfg.line_search {
            (-dot(&x, &direction) / dot(&direction, &direction)).clamp(0.0, 1.0)
        } else {
            2.0 / (t as f64 + 2.0)
        };
        x.iter_mut().zip(&direction).for_each(|(xi, di)| *xi += alpha * di);
        weights.iter_mut().for_each(|wt| *wt *= 1.0 - alpha);
        match vertices.iter().position(|v| v.policy == policy) {
            Some(i) => weights[i] += alpha,
            None => {
                vertices.push(Vertex { policy, sf: y });
                weights.push(alpha);
            }
        }
        history.push(dot(&x, &x));
    }

    Ok(MixedSfPoint {
        point: x,
        weights,
        vertices,
        iterations,
        gap,
        objective_history: history,
    })
}
