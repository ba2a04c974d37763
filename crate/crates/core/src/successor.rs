//! Successor features `ψ^π(s, a)` and their initial-distribution aggregate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::mdp::{dot, DeterministicPolicy, FeatureMdp, RewardVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessorFeatures {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    /// Shape S×A×d, row-major.
    per_sa: Vec<f64>,
    aggregate: Vec<f64>,
}

impl SuccessorFeatures {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn per_sa(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.dim;
        &self.per_sa[start..start + self.dim]
    }

    pub fn per_sa_table(&self) -> &[f64] {
        &self.per_sa
    }

    /// `ψ^π = E_{s∼D}[ψ^π(s, π(s))]`.
    pub fn aggregate(&self) -> &[f64] {
        &self.aggregate
    }

    /// `Q^π_w(s, a) = ψ^π(s, a) · w`.
    pub fn q_value(&self, s: usize, a: usize, w: &RewardVector) -> f64 {
        w.dot(self.per_sa(s, a))
    }
}

/// Exact SFs of `π`: one LU factorization of `I - γ P_π` solves all `d`
/// feature dimensions at once.
pub fn compute_sf(mdp: &FeatureMdp, policy: &DeterministicPolicy) -> Result<SuccessorFeatures> {
    policy.validate(mdp)?;
    let (s_n, a_n, d) = (mdp.num_states(), mdp.num_actions(), mdp.dim());
    let gamma = mdp.discount();
    let scale = 1.0 - gamma;

    let rhs = DMatrix::from_fn(s_n, d, |s, k| {
        scale * mdp.expected_feature(s, policy.action(s))[k]
    });
    // state_sf[s, k] = ψ^π(s, π(s))_k
    let state_sf = mdp.solve_policy_system(policy, rhs)?;

    let mut per_sa = vec![0.0; s_n * a_n * d];
    for s in 0..s_n {
        for a in 0..a_n {
            let out = &mut per_sa[(s * a_n + a) * d..(s * a_n + a + 1) * d];
            for (k, o) in out.iter_mut().enumerate() {
                *o = scale * mdp.expected_feature(s, a)[k];
            }
            for (next, p) in mdp.transition_row(s, a).iter().enumerate() {
                if *p == 0.0 {
                    continue;
                }
                for (k, o) in out.iter_mut().enumerate() {
                    *o += gamma * p * state_sf[(next, k)];
                }
            }
        }
    }

    let mut aggregate = vec![0.0; d];
    for (s, weight) in mdp.initial_dist().iter().enumerate() {
        if *weight == 0.0 {
            continue;
        }
        for (k, g) in aggregate.iter_mut().enumerate() {
            *g += weight * state_sf[(s, k)];
        }
    }

    Ok(SuccessorFeatures {
        num_states: s_n,
        num_actions: a_n,
        dim: d,
        per_sa,
        aggregate,
    })
}

/// `ψ^π · w`, the value of the policy under task `w`.
pub fn sf_value(sf: &[f64], w: &RewardVector) -> Result<f64> {
    check_dim("reward vector", sf.len(), w.dim())?;
    Ok(dot(sf, w.as_slice()))
}

/// CSV with one row per policy and `d` columns, headed by `labels`.
pub fn sf_matrix_csv(sfs: &[&[f64]], labels: &[String]) -> String {
    let mut out = String::from("policy");
    for label in labels {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for (i, sf) in sfs.iter().enumerate() {
        out.push_str(&i.to_string());
        for x in sf.iter() {
            out.push(',');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}
