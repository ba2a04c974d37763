//! Set-max (SMP) and generalized policy improvement (GPI) compositions of a
//! policy set.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mdp::{dot, evaluate_policy, DeterministicPolicy, FeatureMdp, RewardVector};
use crate::successor::{compute_sf, SuccessorFeatures};

/// Ordered policies together with their successor features.
#[derive(Debug, Clone)]
pub struct PolicySet {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    policies: Vec<DeterministicPolicy>,
    sfs: Vec<SuccessorFeatures>,
}

impl PolicySet {
    pub fn new(mdp: &FeatureMdp) -> Self {
        PolicySet {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            dim: mdp.dim(),
            policies: Vec::new(),
            sfs: Vec::new(),
        }
    }

    pub fn from_policies(mdp: &FeatureMdp, policies: Vec<DeterministicPolicy>) -> Result<Self> {
        let mut set = PolicySet::new(mdp);
        for pi in policies {
            set.push(mdp, pi)?;
        }
        Ok(set)
    }

    /// Appends `policy`, computing its SFs on `mdp`.
    pub fn push(&mut self, mdp: &FeatureMdp, policy: DeterministicPolicy) -> Result<()> {
        let sf = compute_sf(mdp, &policy)?;
        self.push_with_sf(policy, sf)
    }

    pub fn push_with_sf(&mut self, policy: DeterministicPolicy, sf: SuccessorFeatures) -> Result<()> {
        check_dim("policy length", self.num_states, policy.actions().len())?;
        check_dim("SF dimension", self.dim, sf.dim())?;
        check_dim("SF states", self.num_states, sf.num_states())?;
        check_dim("SF actions", self.num_actions, sf.num_actions())?;
        self.policies.push(policy);
        self.sfs.push(sf);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn policies(&self) -> &[DeterministicPolicy] {
        &self.policies
    }

    pub fn sfs(&self) -> &[SuccessorFeatures] {
        &self.sfs
    }

    /// The aggregate SF vector of every member, in order.
    pub fn aggregates(&self) -> Vec<Vec<f64>> {
        self.sfs.iter().map(|sf| sf.aggregate().to_vec()).collect()
    }

    /// Members at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> PolicySet {
        PolicySet {
            num_states: self.num_states,
            num_actions: self.num_actions,
            dim: self.dim,
            policies: indices.iter().map(|&i| self.policies[i].clone()).collect(),
            sfs: indices.iter().map(|&i| self.sfs[i].clone()).collect(),
        }
    }

    pub fn to_file(&self) -> PolicySetFile {
        PolicySetFile {
            num_states: self.num_states,
            num_actions: self.num_actions,
            dim: self.dim,
            policies: self.policies.clone(),
            sfs: self.aggregates(),
        }
    }

    /// Rebuilds a set from its file form, recomputing SFs on `mdp` and
    /// checking them against the stored aggregates.
    pub fn from_file(mdp: &FeatureMdp, file: &PolicySetFile) -> Result<Self> {
        check_dim("policy set states", mdp.num_states(), file.num_states)?;
        check_dim("policy set actions", mdp.num_actions(), file.num_actions)?;
        check_dim("policy set dimension", mdp.dim(), file.dim)?;
        check_dim("policy set SF count", file.policies.len(), file.sfs.len())?;
        let set = PolicySet::from_policies(mdp, file.policies.clone())?;
        for (i, (stored, sf)) in file.sfs.iter().zip(set.sfs()).enumerate() {
            let drift = stored
                .iter()
                .zip(sf.aggregate())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if stored.len() != sf.dim() || drift > 1e-9 {
                return Err(Error::invalid(format!(
                    "stored SF of policy {i} does not match the MDP"
                )));
            }
        }
        Ok(set)
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::invalid("policy set is empty"))
        } else {
            Ok(())
        }
    }
}

/// JSON form of a [`PolicySet`]: action arrays and aggregate SFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySetFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    pub policies: Vec<DeterministicPolicy>,
    pub sfs: Vec<Vec<f64>>,
}

/// Index of the member with the highest value `w·ψ_i` (lowest index on ties)
/// and that value.
pub fn smp_select(set: &PolicySet, w: &RewardVector) -> Result<(usize, f64)> {
    set.require_nonempty()?;
    check_dim("reward vector", set.dim, w.dim())?;
    let mut best = (0, f64::NEG_INFINITY);
    for (i, sf) in set.sfs.iter().enumerate() {
        let v = dot(sf.aggregate(), w.as_slice());
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best)
}

/// `max_i w·ψ_i`, the SMP's value for task `w`.
pub fn smp_value(set: &PolicySet, w: &RewardVector) -> Result<f64> {
    smp_select(set, w).map(|(_, v)| v)
}

/// Materializes the GPI policy for task `w`:
/// `π(s) = argmax_a max_i ψ_i(s, a)·w`, lowest action on ties.
pub fn gpi_policy(mdp: &FeatureMdp, set: &PolicySet, w: &RewardVector) -> Result<DeterministicPolicy> {
    set.require_nonempty()?;
    check_dim("reward vector", set.dim, w.dim())?;
    check_dim("policy set states", mdp.num_states(), set.num_states)?;
    check_dim("policy set actions", mdp.num_actions(), set.num_actions)?;
    let actions = (0..mdp.num_states())
        .map(|s| {
            let mut best = (0, f64::NEG_INFINITY);
            for a in 0..mdp.num_actions() {
                let q = set
                    .sfs
                    .iter()
                    .map(|sf| sf.q_value(s, a, w))
                    .fold(f64::NEG_INFINITY, f64::max);
                if q > best.1 {
                    best = (a, q);
                }
            }
            best.0
        })
        .collect();
    Ok(DeterministicPolicy::new(actions))
}

/// Exact value of the GPI policy under `w`.
pub fn gpi_value(mdp: &FeatureMdp, set: &PolicySet, w: &RewardVector) -> Result<f64> {
    let pi = gpi_policy(mdp, set, w)?;
    Ok(evaluate_policy(mdp, &pi, w)?.value)
}

/// Bracket on GPI's worst-case value, both ends measured under the SMP's
/// worst-case reward `w̄`: `w̄·ψ(π^SMP) ≤ worst-case GPI ≤ w̄·ψ(π^GPI)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpiBracket {
    pub smp: f64,
    pub gpi: f64,
}

pub fn gpi_bracket(mdp: &FeatureMdp, set: &PolicySet, w_bar: &RewardVector) -> Result<GpiBracket> {
    Ok(GpiBracket {
        smp: smp_value(set, w_bar)?,
        gpi: gpi_value(mdp, set, w_bar)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{random_mdp, solve_optimal_policy, star_mdp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A set whose aggregate SFs are exactly `sfs`, built on an absorbing
    /// single-state MDP per SF.
    fn set_with_aggregates(sfs: &[Vec<f64>]) -> PolicySet {
        let d = sfs[0].len();
        // one state, one action per SF, absorbing with constant features
        let a_n = sfs.len();
        let transitions = vec![1.0; a_n];
        let features: Vec<f64> = sfs.iter().flatten().copied().collect();
        let mdp = FeatureMdp::new(1, a_n, d, 0.5, transitions, features, vec![1.0]).unwrap();
        let policies = (0..a_n).map(|a| DeterministicPolicy::constant(1, a)).collect();
        PolicySet::from_policies(&mdp, policies).unwrap()
    }

    fn random_w(rng: &mut impl Rng, d: usize) -> RewardVector {
        RewardVector::new((0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap()
    }

    #[test]
    fn smp_select_examples() {
        let set = set_with_aggregates(&[vec![0.2, 0.5], vec![0.7, 0.1]]);
        let (k, v) = smp_select(&set, &RewardVector::basis(2, 0)).unwrap();
        assert_eq!(k, 1);
        assert!((v - 0.7).abs() < 1e-12);

        let single = set_with_aggregates(&[vec![0.3, 0.3]]);
        let w = RewardVector::new(vec![-4.0, 2.0]).unwrap();
        assert_eq!(smp_select(&single, &w).unwrap().0, 0);
    }

    #[test]
    fn smp_select_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let sfs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let set = set_with_aggregates(&sfs);
        for _ in 0..100 {
            let w = random_w(&mut rng, 3);
            let values: Vec<f64> = set.aggregates().iter().map(|sf| w.dot(sf)).collect();
            let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let expected = values.iter().position(|&v| v == best).unwrap();
            let (k, v) = smp_select(&set, &w).unwrap();
            assert_eq!(k, expected);
            assert_eq!(v, best);
            assert_eq!(smp_value(&set, &w).unwrap(), v);
            // argmax is invariant to positive rescaling
            assert_eq!(smp_select(&set, &w.scaled(3.7)).unwrap().0, k);
        }
    }

    #[test]
    fn smp_value_examples() {
        let set = set_with_aggregates(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let c = -1.0 / 2f64.sqrt();
        let v = smp_value(&set, &RewardVector::new(vec![c, c]).unwrap()).unwrap();
        assert!((v - c).abs() < 1e-12);
        assert_eq!(smp_value(&set, &RewardVector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn empty_set_is_an_error() {
        let mdp = star_mdp(2, 0.9).unwrap();
        let set = PolicySet::new(&mdp);
        assert!(smp_select(&set, &RewardVector::zeros(2)).is_err());
        assert!(gpi_policy(&mdp, &set, &RewardVector::zeros(2)).is_err());
    }

    #[test]
    fn gpi_of_single_policy_is_policy_improvement() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mdp = random_mdp(&mut rng, 6, 3, 3, 0.9, false).unwrap();
        for _ in 0..10 {
            let pi = DeterministicPolicy::new((0..6).map(|_| rng.random_range(0..3)).collect());
            let w = random_w(&mut rng, 3);
            let set = PolicySet::from_policies(&mdp, vec![pi.clone()]).unwrap();
            let improved = gpi_policy(&mdp, &set, &w).unwrap();
            let sf = &set.sfs()[0];
            for s in 0..6 {
                let best = (0..3)
                    .map(|a| sf.q_value(s, a, &w))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(sf.q_value(s, improved.action(s), &w), best);
            }
            let base = evaluate_policy(&mdp, &pi, &w).unwrap().value;
            assert!(gpi_value(&mdp, &set, &w).unwrap() >= base - 1e-12);
        }
    }

    #[test]
    fn gpi_on_two_arm_chooser() {
        let mdp = star_mdp(2, 0.9).unwrap();
        let arm0 = solve_optimal_policy(&mdp, &RewardVector::basis(2, 0)).unwrap();
        let arm1 = solve_optimal_policy(&mdp, &RewardVector::basis(2, 1)).unwrap();
        let set = PolicySet::from_policies(&mdp, vec![arm0, arm1]).unwrap();
        let c = 1.0 / 2f64.sqrt();
        let w = RewardVector::new(vec![c, c]).unwrap();
        let gpi = gpi_value(&mdp, &set, &w).unwrap();
        let best = DeterministicPolicy::enumerate(3, 2)
            .iter()
            .map(|pi| evaluate_policy(&mdp, pi, &w).unwrap().value)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((gpi - best).abs() < 1e-12);
        for sf in set.aggregates() {
            assert!(gpi >= w.dot(&sf) - 1e-12);
        }
    }

    #[test]
    fn gpi_dominates_smp() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mdp = random_mdp(&mut rng, 7, 3, 4, 0.9, false).unwrap();
        let policies = (0..4)
            .map(|_| DeterministicPolicy::new((0..7).map(|_| rng.random_range(0..3)).collect()))
            .collect();
        let set = PolicySet::from_policies(&mdp, policies).unwrap();
        for _ in 0..50 {
            let w = random_w(&mut rng, 4);
            let smp = smp_value(&set, &w).unwrap();
            assert!(gpi_value(&mdp, &set, &w).unwrap() >= smp - 1e-9);
            for sf in set.aggregates() {
                assert!(smp >= w.dot(&sf));
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let mdp = star_mdp(3, 0.9).unwrap();
        let set = PolicySet::from_policies(
            &mdp,
            vec![DeterministicPolicy::constant(4, 2), DeterministicPolicy::constant(4, 0)],
        )
        .unwrap();
        let text = serde_json::to_string(&set.to_file()).unwrap();
        let file: PolicySetFile = serde_json::from_str(&text).unwrap();
        let back = PolicySet::from_file(&mdp, &file).unwrap();
        assert_eq!(back.policies(), set.policies());

        let mut tampered = file.clone();
        tampered.sfs[0][0] += 0.1;
        assert!(PolicySet::from_file(&mdp, &tampered).is_err());
    }
}
