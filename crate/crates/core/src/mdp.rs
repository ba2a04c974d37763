//! Tabular MDPs whose reward is a linear function of a feature map, and exact
//! planners for any task vector `w`.
//!
//! Values are normalized by `(1 - γ)`, so a reward bounded in `[0, 1]` gives a
//! value bounded in `[0, 1]`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Task weights `w`; the reward is `w · φ(s, a, s')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RewardVector(Vec<f64>);

impl RewardVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(bad) = w.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("reward weight {bad} is not finite")));
        }
        Ok(RewardVector(w))
    }

    /// Like [`RewardVector::new`], additionally requiring `‖w‖₂ ≤ 1`.
    pub fn in_unit_ball(w: Vec<f64>) -> Result<Self> {
        let w = Self::new(w)?;
        if w.norm() > 1.0 + 1e-9 {
            return Err(Error::invalid(format!(
                "reward vector has norm {} > 1",
                w.norm()
            )));
        }
        Ok(w)
    }

    pub fn zeros(dim: usize) -> Self {
        RewardVector(vec![0.0; dim])
    }

    /// Standard basis vector `e_k`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut w = vec![0.0; dim];
        w[k] = 1.0;
        RewardVector(w)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn scaled(&self, c: f64) -> Self {
        RewardVector(self.0.iter().map(|x| c * x).collect())
    }
}

impl TryFrom<Vec<f64>> for RewardVector {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        RewardVector::new(w)
    }
}

impl From<RewardVector> for Vec<f64> {
    fn from(w: RewardVector) -> Vec<f64> {
        w.0
    }
}

/// A stationary deterministic policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeterministicPolicy(Vec<usize>);

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        DeterministicPolicy(actions)
    }

    pub fn constant(num_states: usize, action: usize) -> Self {
        DeterministicPolicy(vec![action; num_states])
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }

    pub fn validate(&self, mdp: &FeatureMdp) -> Result<()> {
        check_dim("policy length", mdp.num_states(), self.0.len())?;
        match self.0.iter().find(|&&a| a >= mdp.num_actions()) {
            Some(a) => Err(Error::invalid(format!(
                "policy action {a} out of range for {} actions",
                mdp.num_actions()
            ))),
            None => Ok(()),
        }
    }

    /// Every deterministic policy of an MDP, in lexicographic order of the
    /// action table. Only sensible for tiny instances.
    pub fn enumerate(num_states: usize, num_actions: usize) -> Vec<DeterministicPolicy> {
        let total = num_actions.pow(num_states as u32);
        (0..total)
            .map(|mut code| {
                let mut actions = vec![0; num_states];
                for slot in actions.iter_mut().rev() {
                    *slot = code % num_actions;
                    code /= num_actions;
                }
                DeterministicPolicy(actions)
            })
            .collect()
    }
}

/// Tabular MDP with a feature map `φ(s, a, s') ∈ [0, 1]^d` in place of a reward.
///
/// Tables are dense and row-major: `transitions[(s * A + a) * S + s']` and
/// `features[((s * A + a) * S + s') * d + k]`.
#[derive(Debug, Clone)]
pub struct FeatureMdp {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    discount: f64,
    transitions: Vec<f64>,
    features: Vec<f64>,
    initial_dist: Vec<f64>,
    // E_{s'}[φ(s, a, s')], shape S×A×d
    expected_features: Vec<f64>,
}

impl FeatureMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        dim: usize,
        discount: f64,
        transitions: Vec<f64>,
        features: Vec<f64>,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || dim == 0 {
            return Err(Error::invalid(
                "num_states, num_actions and feature dimension must be positive",
            ));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::invalid(format!("discount {discount} not in [0, 1)")));
        }
        let (s, a) = (num_states, num_actions);
        check_dim("transitions", s * a * s, transitions.len())?;
        check_dim("features", s * a * s * dim, features.len())?;
        check_dim("initial_dist", s, initial_dist.len())?;

        for (row_idx, row) in transitions.chunks(s).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::invalid(format!(
                    "transition row (s={}, a={}) has a negative or non-finite entry",
                    row_idx / a,
                    row_idx % a
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!(
                    "transition row (s={}, a={}) sums to {total}",
                    row_idx / a,
                    row_idx % a
                )));
            }
        }
        if let Some(bad) = features.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::invalid(format!("feature value {bad} outside [0, 1]")));
        }
        if initial_dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("initial distribution has a negative entry"));
        }
        let total: f64 = initial_dist.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::invalid(format!(
                "initial distribution sums to {total}"
            )));
        }

        let mut expected_features = vec![0.0; s * a * dim];
        for sa in 0..s * a {
            let out = &mut expected_features[sa * dim..(sa + 1) * dim];
            for next in 0..s {
                let p = transitions[sa * s + next];
                if p == 0.0 {
                    continue;
                }
                let phi = &features[(sa * s + next) * dim..(sa * s + next + 1) * dim];
                for (o, f) in out.iter_mut().zip(phi) {
                    *o += p * f;
                }
            }
        }

        Ok(FeatureMdp {
            num_states,
            num_actions,
            dim,
            discount,
            transitions,
            features,
            initial_dist,
            expected_features,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[(s * self.num_actions + a) * self.num_states + next]
    }

    /// Distribution over next states for `(s, a)`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    pub fn feature(&self, s: usize, a: usize, next: usize) -> &[f64] {
        let start = ((s * self.num_actions + a) * self.num_states + next) * self.dim;
        &self.features[start..start + self.dim]
    }

    /// `Σ_{s'} P(s'|s,a) φ(s,a,s')`.
    pub fn expected_feature(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.dim;
        &self.expected_features[start..start + self.dim]
    }

    pub fn check_reward(&self, w: &RewardVector) -> Result<()> {
        check_dim("reward vector", self.dim, w.dim())
    }

    /// `I - γ P_π`, the system matrix shared by every evaluation of `π`.
    pub(crate) fn evaluation_matrix(&self, policy: &DeterministicPolicy) -> DMatrix<f64> {
        let n = self.num_states;
        let mut m = DMatrix::<f64>::identity(n, n);
        for s in 0..n {
            for (next, p) in self.transition_row(s, policy.action(s)).iter().enumerate() {
                if *p != 0.0 {
                    m[(s, next)] -= self.discount * p;
                }
            }
        }
        m
    }

    /// Solves `(I - γ P_π) X = rhs` for every column of `rhs` with one LU factorization.
    pub(crate) fn solve_policy_system(
        &self,
        policy: &DeterministicPolicy,
        rhs: DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        let lu = self.evaluation_matrix(policy).lu();
        lu.solve(&rhs)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Numerical("policy evaluation system is singular".into()))
    }

    pub fn to_file(&self) -> MdpFile {
        let (s, a) = (self.num_states, self.num_actions);
        let transitions = (0..s)
            .map(|si| (0..a).map(|ai| self.transition_row(si, ai).to_vec()).collect())
            .collect();
        let features = (0..s)
            .map(|si| {
                (0..a)
                    .map(|ai| (0..s).map(|ni| self.feature(si, ai, ni).to_vec()).collect())
                    .collect()
            })
            .collect();
        MdpFile {
            num_states: s,
            num_actions: a,
            discount: self.discount,
            initial_dist: self.initial_dist.clone(),
            transitions,
            features,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("MDP serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MdpFile =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("MDP JSON: {e}")))?;
        file.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: MdpFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        file.try_into()
    }
}

/// On-disk MDP schema: nested arrays `transitions[s][a][s']` and
/// `features[s][a][s'][k]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
    pub initial_dist: Vec<f64>,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub features: Vec<Vec<Vec<Vec<f64>>>>,
}

impl TryFrom<MdpFile> for FeatureMdp {
    type Error = Error;

    fn try_from(file: MdpFile) -> Result<FeatureMdp> {
        let (s, a) = (file.num_states, file.num_actions);
        let dim = file
            .features
            .first()
            .and_then(|x| x.first())
            .and_then(|x| x.first())
            .map(Vec::len)
            .unwrap_or(0);
        let mut transitions = Vec::with_capacity(s * a * s);
        check_dim("transitions (states)", s, file.transitions.len())?;
        for per_state in &file.transitions {
            check_dim("transitions (actions)", a, per_state.len())?;
            for row in per_state {
                check_dim("transitions (next states)", s, row.len())?;
                transitions.extend_from_slice(row);
            }
        }
        let mut features = Vec::with_capacity(s * a * s * dim);
        check_dim("features (states)", s, file.features.len())?;
        for per_state in &file.features {
            check_dim("features (actions)", a, per_state.len())?;
            for per_action in per_state {
                check_dim("features (next states)", s, per_action.len())?;
                for phi in per_action {
                    check_dim("features (dimension)", dim, phi.len())?;
                    features.extend_from_slice(phi);
                }
            }
        }
        FeatureMdp::new(
            s,
            a,
            dim,
            file.discount,
            transitions,
            features,
            file.initial_dist,
        )
    }
}

/// Reward `r_w(s, a, s')` tabulated over all triples.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl RewardTable {
    pub fn get(&self, s: usize, a: usize, next: usize) -> f64 {
        self.values[(s * self.num_actions + a) * self.num_states + next]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn reward_of(mdp: &FeatureMdp, w: &RewardVector) -> Result<RewardTable> {
    mdp.check_reward(w)?;
    let values = mdp.features.chunks(mdp.dim).map(|phi| w.dot(phi)).collect();
    Ok(RewardTable {
        num_states: mdp.num_states,
        num_actions: mdp.num_actions,
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub state_values: Vec<f64>,
    /// `D · V^π`.
    pub value: f64,
}

/// Exact evaluation of `π` under reward `(1 - γ) r_w` by a direct linear solve.
pub fn evaluate_policy(
    mdp: &FeatureMdp,
    policy: &DeterministicPolicy,
    w: &RewardVector,
) -> Result<PolicyEvaluation> {
    mdp.check_reward(w)?;
    policy.validate(mdp)?;
    let scale = 1.0 - mdp.discount;
    let rhs = DMatrix::from_fn(mdp.num_states, 1, |s, _| {
        scale * w.dot(mdp.expected_feature(s, policy.action(s)))
    });
    let values = mdp.solve_policy_system(policy, rhs)?;
    let state_values: Vec<f64> = values.column(0).iter().copied().collect();
    let value = dot(&state_values, &mdp.initial_dist);
    Ok(PolicyEvaluation {
        state_values,
        value,
    })
}

/// Outcome of policy iteration, with the value vector of every sweep.
#[derive(Debug, Clone)]
pub struct PlannerResult {
    pub policy: DeterministicPolicy,
    pub state_values: Vec<f64>,
    pub value: f64,
    pub value_history: Vec<Vec<f64>>,
}

fn q_values(mdp: &FeatureMdp, w: &RewardVector, values: &DVector<f64>) -> Vec<f64> {
    let (s_n, a_n) = (mdp.num_states, mdp.num_actions);
    let scale = 1.0 - mdp.discount;
    let mut q = vec![0.0; s_n * a_n];
    for s in 0..s_n {
        for a in 0..a_n {
            let future: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(values.iter())
                .map(|(p, v)| p * v)
                .sum();
            q[s * a_n + a] = scale * w.dot(mdp.expected_feature(s, a)) + mdp.discount * future;
        }
    }
    q
}

/// Howard's policy iteration from the all-zeros policy. An action is only
/// replaced when another improves it by more than a small tolerance; the
/// returned policy takes, in every state, the lowest action whose optimal
/// Q-value is within that tolerance of the maximum.
pub fn policy_iteration(mdp: &FeatureMdp, w: &RewardVector) -> Result<PlannerResult> {
    mdp.check_reward(w)?;
    let (s_n, a_n) = (mdp.num_states, mdp.num_actions);
    let scale = 1.0 - mdp.discount;
    let magnitude = w.as_slice().iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-12 * magnitude;

    let mut policy = DeterministicPolicy::constant(s_n, 0);
    let mut history = Vec::new();
    // Policy iteration visits each policy at most once; the bound only
    // guards against floating-point cycling.
    let max_sweeps = 10_000;
    for _ in 0..max_sweeps {
        let rhs = DMatrix::from_fn(s_n, 1, |s, _| {
            scale * w.dot(mdp.expected_feature(s, policy.action(s)))
        });
        let values = mdp.solve_policy_system(&policy, rhs)?.column(0).into_owned();
        history.push(values.iter().copied().collect::<Vec<_>>());
        let q = q_values(mdp, w, &values);

        let mut changed = false;
        let mut next = policy.0.clone();
        for s in 0..s_n {
            let row = &q[s * a_n..(s + 1) * a_n];
            let current = row[policy.action(s)];
            let (best_a, best_q) = argmax_lowest(row);
            if best_q > current + tol {
                next[s] = best_a;
                changed = true;
            }
        }
        if !changed {
            let canonical: Vec<usize> = (0..s_n)
                .map(|s| {
                    let row = &q[s * a_n..(s + 1) * a_n];
                    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    row.iter().position(|&x| x >= best - tol).unwrap_or(0)
                })
                .collect();
            let canonical = DeterministicPolicy(canonical);
            let eval = if canonical == policy {
                let state_values: Vec<f64> = values.iter().copied().collect();
                let value = dot(&state_values, &mdp.initial_dist);
                PolicyEvaluation {
                    state_values,
                    value,
                }
            } else {
                evaluate_policy(mdp, &canonical, w)?
            };
            return Ok(PlannerResult {
                policy: canonical,
                state_values: eval.state_values,
                value: eval.value,
                value_history: history,
            });
        }
        policy = DeterministicPolicy(next);
    }
    Err(Error::Numerical(format!(
        "policy iteration did not converge in {max_sweeps} sweeps"
    )))
}

/// A deterministic policy optimal for `r_w`.
pub fn solve_optimal_policy(mdp: &FeatureMdp, w: &RewardVector) -> Result<DeterministicPolicy> {
    policy_iteration(mdp, w).map(|r| r.policy)
}

pub(crate) fn argmax_lowest(xs: &[f64]) -> (usize, f64) {
    let mut best = (0, xs[0]);
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Star MDP: a hub state whose `d` actions lead to `d` absorbing arms. Landing
/// in arm `k` emits feature `e_k`, so the arm policies have SFs `e_1 … e_d`.
pub fn star_mdp(dim: usize, discount: f64) -> Result<FeatureMdp> {
    if dim == 0 {
        return Err(Error::invalid("star MDP needs at least one arm"));
    }
    let s_n = dim + 1;
    let a_n = dim;
    let mut transitions = vec![0.0; s_n * a_n * s_n];
    let mut features = vec![0.0; s_n * a_n * s_n * dim];
    for s in 0..s_n {
        for a in 0..a_n {
            let next = if s == 0 { a + 1 } else { s };
            transitions[(s * a_n + a) * s_n + next] = 1.0;
            for landing in 1..s_n {
                features[((s * a_n + a) * s_n + landing) * dim + (landing - 1)] = 1.0;
            }
            // hub is never entered; give it the first feature so φ stays one-hot
            features[((s * a_n + a) * s_n) * dim] = 1.0;
        }
    }
    let mut initial = vec![0.0; s_n];
    initial[0] = 1.0;
    FeatureMdp::new(s_n, a_n, dim, discount, transitions, features, initial)
}

/// Random MDP for tests and benchmarks. Transition rows and the initial
/// distribution are normalized uniform draws; features are uniform in
/// `[0, 1]` or, with `one_hot`, a uniformly chosen basis vector per triple.
pub fn random_mdp<R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    dim: usize,
    discount: f64,
    one_hot: bool,
) -> Result<FeatureMdp> {
    let (s_n, a_n) = (num_states, num_actions);
    let mut transitions = Vec::with_capacity(s_n * a_n * s_n);
    for _ in 0..s_n * a_n {
        let row: Vec<f64> = (0..s_n).map(|_| rng.random::<f64>() + 1e-3).collect();
        transitions.extend(normalized(row));
    }
    let mut features = Vec::with_capacity(s_n * a_n * s_n * dim);
    for _ in 0..s_n * a_n * s_n {
        if one_hot {
            let k = rng.random_range(0..dim);
            features.extend((0..dim).map(|j| if j == k { 1.0 } else { 0.0 }));
        } else {
            features.extend((0..dim).map(|_| rng.random::<f64>()));
        }
    }
    let initial = normalized((0..s_n).map(|_| rng.random::<f64>() + 1e-3).collect());
    FeatureMdp::new(s_n, a_n, dim, discount, transitions, features, initial)
}

fn normalized(mut row: Vec<f64>) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= total);
    row
}
