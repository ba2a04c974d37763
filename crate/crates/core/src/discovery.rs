//! Iterative construction of a policy set with a strictly improving
//! worst-case SMP value, and the orthogonal/random baselines.
//!
//! Each worst-case iteration solves for the reward `w̄` on which the current
//! SMP does worst, plans an optimal policy for `w̄`, and keeps it only if it
//! beats the set's worst-case value `v̄`. When no policy can, the set is
//! optimal: no single addition improves `v̄`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::composition::{gpi_value, PolicySet};
use crate::error::{Error, Result};
use crate::mdp::{dot, solve_optimal_policy, FeatureMdp, RewardVector};
use crate::successor::compute_sf;
use crate::worst_case::{solve_worst_case, SolverConfig, WorstCaseSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    WorstCase,
    Orthogonal,
    Random,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::WorstCase, Method::Orthogonal, Method::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::WorstCase => "worst_case",
            Method::Orthogonal => "orthogonal",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "worst_case" => Ok(Method::WorstCase),
            "orthogonal" => Ok(Method::Orthogonal),
            "random" => Ok(Method::Random),
            other => Err(Error::invalid(format!(
                "unknown method {other:?} (expected worst_case, orthogonal or random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryConfig {
    pub max_policies: usize,
    pub improvement_tol: f64,
    pub rng_seed: u64,
    pub prune_inactive: bool,
    pub method: Method,
    pub solver: SolverConfig,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            max_policies: 12,
            improvement_tol: 1e-8,
            rng_seed: 0,
            prune_inactive: false,
            method: Method::WorstCase,
            solver: SolverConfig::default(),
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_policies == 0 {
            return Err(Error::invalid("max_policies must be at least 1"));
        }
        if !(self.improvement_tol >= 0.0 && self.improvement_tol.is_finite()) {
            return Err(Error::invalid("improvement_tol must be nonnegative"));
        }
        self.solver.validate()
    }
}

/// One iteration: the set `Π^t` and its worst-case solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryRecord {
    pub iteration: usize,
    pub set_size: usize,
    pub w_bar: Vec<f64>,
    pub v_bar: f64,
    /// `w̄·ψ` of the planner's best response to `w̄` (worst-case method only).
    pub new_policy_value: Option<f64>,
    pub active_count: usize,
    /// Value of the GPI policy on `Π^t` under `w̄`; upper end of the GPI bracket.
    pub gpi_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The best response to `w̄` did not beat `v̄`.
    NoImprovement,
    MaxPolicies,
    /// Baselines stop after their fixed number of iterations.
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryLog {
    pub method: Method,
    pub records: Vec<DiscoveryRecord>,
    pub termination: Termination,
}

pub const LOG_CSV_HEADER: &str =
    "iteration,set_size,v_bar,new_policy_value,active_count,gpi_value,w_bar";

impl DiscoveryLog {
    pub fn v_bars(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.v_bar).collect()
    }

    pub fn final_v_bar(&self) -> f64 {
        self.records.last().map(|r| r.v_bar).unwrap_or(f64::NAN)
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serialization cannot fail") + "\n")
            .collect()
    }

    /// CSV with [`LOG_CSV_HEADER`]; `w_bar` is a `;`-separated list.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let w: Vec<String> = r.w_bar.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.iteration,
                r.set_size,
                r.v_bar,
                r.new_policy_value.map(|v| v.to_string()).unwrap_or_default(),
                r.active_count,
                r.gpi_value,
                w.join(";")
            ));
        }
        out
    }
}

/// Restricts `set` to the solution's active policies.
pub fn prune_active(set: &PolicySet, solution: &WorstCaseSolution) -> PolicySet {
    set.subset(&solution.active_indices)
}

fn record(
    mdp: &FeatureMdp,
    set: &PolicySet,
    iteration: usize,
    solution: &WorstCaseSolution,
    new_policy_value: Option<f64>,
) -> Result<DiscoveryRecord> {
    Ok(DiscoveryRecord {
        iteration,
        set_size: set.len(),
        w_bar: solution.w_bar.as_slice().to_vec(),
        v_bar: solution.value,
        new_policy_value,
        active_count: solution.active_indices.len(),
        gpi_value: gpi_value(mdp, set, &solution.w_bar)?,
    })
}

/// Runs the configured method. Baselines dispatch to [`discover_baseline`].
pub fn discover(mdp: &FeatureMdp, cfg: &DiscoveryConfig) -> Result<(PolicySet, DiscoveryLog)> {
    cfg.validate()?;
    if cfg.method != Method::WorstCase {
        return discover_baseline(mdp, cfg);
    }
    let d = mdp.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let init: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let first = solve_optimal_policy(mdp, &RewardVector::new(init)?)?;

    let mut set = PolicySet::new(mdp);
    set.push(mdp, first)?;
    let mut records = Vec::new();
    // strict improvement bounds the loop; this cap only matters with pruning
    let max_records = 100 * cfg.max_policies.max(mdp.dim());
    let termination = loop {
        let solution = solve_worst_case(&set.aggregates(), &cfg.solver)?;
        let response = solve_optimal_policy(mdp, &solution.w_bar)?;
        let response_sf = compute_sf(mdp, &response)?;
        let response_value = dot(response_sf.aggregate(), solution.w_bar.as_slice());
        records.push(record(
            mdp,
            &set,
            records.len() + 1,
            &solution,
            Some(response_value),
        )?);

        if cfg.prune_inactive {
            set = prune_active(&set, &solution);
        }
        if response_value <= solution.value + cfg.improvement_tol {
            break Termination::NoImprovement;
        }
        if set.len() >= cfg.max_policies || records.len() >= max_records {
            break Termination::MaxPolicies;
        }
        set.push_with_sf(response, response_sf)?;
    };

    Ok((
        set,
        DiscoveryLog {
            method: Method::WorstCase,
            records,
            termination,
        },
    ))
}

/// Orthogonal (`w = e_t`) or random (unit-normalized Gaussian `w`) baseline.
/// `w̄` and `v̄` are logged for evaluation only; they never drive training.
pub fn discover_baseline(
    mdp: &FeatureMdp,
    cfg: &DiscoveryConfig,
) -> Result<(PolicySet, DiscoveryLog)> {
    cfg.validate()?;
    let d = mdp.dim();
    match cfg.method {
        Method::WorstCase => {
            return Err(Error::invalid("discover_baseline needs a baseline method"));
        }
        Method::Orthogonal if cfg.max_policies > d => {
            return Err(Error::invalid(format!(
                "orthogonal baseline runs at most d = {d} iterations, asked for {}",
                cfg.max_policies
            )));
        }
        _ => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut set = PolicySet::new(mdp);
    let mut records = Vec::with_capacity(cfg.max_policies);
    for t in 0..cfg.max_policies {
        let w = match cfg.method {
            Method::Orthogonal => RewardVector::basis(d, t),
            _ => random_unit_vector(&mut rng, d)?,
        };
        set.push(mdp, solve_optimal_policy(mdp, &w)?)?;
        let solution = solve_worst_case(&set.aggregates(), &cfg.solver)?;
        records.push(record(mdp, &set, t + 1, &solution, None)?);
    }
    Ok((
        set,
        DiscoveryLog {
            method: cfg.method,
            records,
            termination: Termination::Completed,
        },
    ))
}

fn random_unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Result<RewardVector> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 {
            return RewardVector::new(v.iter().map(|x| x / norm).collect());
        }
    }
}
