//! The worst-case reward of a set-max policy: the minimizer over the unit
//! ball of `max_i w·ψ_i`.
//!
//! [`solve_worst_case`] runs projected subgradient descent and then polishes
//! the result with an exact dual solve (the minimum-norm point of the SFs'
//! convex hull). [`solve_worst_case_qp`] is an independent route through the
//! per-candidate reformulation, where candidate `i` restricts `w` to the cone
//! on which `ψ_i` is the maximizer.

mod min_norm;
mod reformulation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{dot, RewardVector};

pub use reformulation::solve_worst_case_qp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// `c` in the step schedule `c / t^p`.
    pub initial_step: f64,
    /// `p` in the step schedule `c / t^p`.
    pub step_decay: f64,
    /// Subgradient descent stops once its certified duality gap drops below this.
    pub convergence_tol: f64,
    pub active_tol: f64,
    /// Restrict `w` to `Σ w_i = 0`.
    pub zero_mean: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 50_000,
            initial_step: 1.0,
            step_decay: 0.5,
            convergence_tol: 1e-9,
            active_tol: 1e-6,
            zero_mean: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("solver max_iterations must be at least 1"));
        }
        let positive = [
            ("initial_step", self.initial_step),
            ("convergence_tol", self.convergence_tol),
            ("active_tol", self.active_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("solver {name} must be positive")));
            }
        }
        if !(self.step_decay >= 0.0 && self.step_decay.is_finite()) {
            return Err(Error::invalid("solver step_decay must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseSolution {
    pub w_bar: RewardVector,
    pub value: f64,
    pub active_indices: Vec<usize>,
    pub solver_iterations: usize,
    /// Set when the minimizer is not unique (the origin lies in the SFs'
    /// hull, e.g. all SFs are zero).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl WorstCaseSolution {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serialization cannot fail")
    }
}

pub(crate) fn validate_sfs(sfs: &[Vec<f64>]) -> Result<usize> {
    let first = sfs
        .first()
        .ok_or_else(|| Error::invalid("worst-case solve needs at least one SF vector"))?;
    let dim = first.len();
    if dim == 0 {
        return Err(Error::invalid("SF vectors must have positive dimension"));
    }
    for (i, sf) in sfs.iter().enumerate() {
        if sf.len() != dim {
            return Err(Error::Dimension {
                what: "SF vector",
                expected: dim,
                got: sf.len(),
            });
        }
        if sf.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("SF vector {i} has a non-finite entry")));
        }
    }
    Ok(dim)
}

/// `max_i w·ψ_i`.
pub fn smp_objective(sfs: &[Vec<f64>], w: &[f64]) -> f64 {
    sfs.iter()
        .map(|sf| dot(sf, w))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Indices whose value under `w̄` is within `active_tol` of the solution value.
pub fn extract_active(sfs: &[Vec<f64>], solution: &WorstCaseSolution, active_tol: f64) -> Vec<usize> {
    active_set(sfs, solution.w_bar.as_slice(), solution.value, active_tol)
}

fn active_set(sfs: &[Vec<f64>], w: &[f64], value: f64, tol: f64) -> Vec<usize> {
    sfs.iter()
        .enumerate()
        .filter(|(_, sf)| dot(sf, w) >= value - tol)
        .map(|(i, _)| i)
        .collect()
}

fn project_zero_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn clip_to_ball(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    if norm > 1.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

pub(crate) fn project_feasible(v: &mut [f64], zero_mean: bool) {
    if zero_mean {
        project_zero_mean(v);
    }
    clip_to_ball(v);
}

struct SubgradientRun {
    best_w: Vec<f64>,
    best_value: f64,
    iterations: usize,
}

fn subgradient(sfs: &[Vec<f64>], cfg: &SolverConfig) -> SubgradientRun {
    let dim = sfs[0].len();
    let mut w = vec![0.0; dim];
    let mut best_w = w.clone();
    let mut best_value = smp_objective(sfs, &w);
    // step-weighted average of the subgradients; it lies in the hull, so
    // -‖x̄‖ (after projection onto the feasible subspace) is a lower bound
    let mut avg = vec![0.0; dim];
    let mut weight_total = 0.0;
    let mut iterations = 0;

    for t in 1..=cfg.max_iterations {
        iterations = t;
        let values: Vec<f64> = sfs.iter().map(|sf| dot(sf, &w)).collect();
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut g = vec![0.0; dim];
        let mut count = 0.0;
        for (sf, v) in sfs.iter().zip(&values) {
            if *v >= top - 1e-12 {
                g.iter_mut().zip(sf).for_each(|(gk, s)| *gk += s);
                count += 1.0;
            }
        }
        g.iter_mut().for_each(|gk| *gk /= count);

        let step = cfg.initial_step / (t as f64).powf(cfg.step_decay);
        avg.iter_mut().zip(&g).for_each(|(a, gk)| *a += step * gk);
        weight_total += step;

        w.iter_mut().zip(&g).for_each(|(wk, gk)| *wk -= step * gk);
        project_feasible(&mut w, cfg.zero_mean);

        let value = smp_objective(sfs, &w);
        if value < best_value {
            best_value = value;
            best_w.clone_from(&w);
        }

        if t % 64 == 0 {
            let mut lower: Vec<f64> = avg.iter().map(|a| a / weight_total).collect();
            if cfg.zero_mean {
                project_zero_mean(&mut lower);
            }
            let bound = -dot(&lower, &lower).sqrt();
            if best_value - bound <= cfg.convergence_tol {
                break;
            }
        }
    }
    SubgradientRun {
        best_w,
        best_value,
        iterations,
    }
}

/// Exact minimizer from the minimum-norm point of the (projected) SFs' hull.
fn dual_polish(sfs: &[Vec<f64>], zero_mean: bool) -> (Vec<f64>, usize, bool) {
    let dim = sfs[0].len();
    let points: Vec<Vec<f64>> = if zero_mean {
        sfs.iter()
            .map(|sf| {
                let mut p = sf.clone();
                project_zero_mean(&mut p);
                p
            })
            .collect()
    } else {
        sfs.to_vec()
    };
    let scale = points.iter().map(|p| dot(p, p)).fold(0.0, f64::max);
    let mnp = min_norm::min_norm_point(&points);
    let norm = dot(&mnp.point, &mnp.point).sqrt();
    if scale == 0.0 || norm <= 1e-10 * scale.sqrt() {
        // The origin is in the hull: the optimal value is 0 and the minimizer
        // is not unique. Prefer a unit-norm minimizer when one is at hand.
        let uniform = -1.0 / (dim as f64).sqrt();
        let w = if !zero_mean && sfs.iter().all(|sf| dot(sf, &vec![uniform; dim]) <= 0.0) {
            vec![uniform; dim]
        } else {
            vec![0.0; dim]
        };
        return (w, mnp.iterations, true);
    }
    let w = mnp.point.iter().map(|x| -x / norm).collect();
    (w, mnp.iterations, false)
}

/// Minimizes `max_i w·ψ_i` over `‖w‖₂ ≤ 1` (and `Σ w = 0` with `zero_mean`).
pub fn solve_worst_case(sfs: &[Vec<f64>], cfg: &SolverConfig) -> Result<WorstCaseSolution> {
    validate_sfs(sfs)?;
    cfg.validate()?;
    if cfg.zero_mean && sfs[0].len() < 2 {
        return Err(Error::invalid(
            "the zero-mean constraint needs at least two feature dimensions",
        ));
    }

    let run = subgradient(sfs, cfg);
    let (polished, polish_iters, degenerate) = dual_polish(sfs, cfg.zero_mean);
    let polished_value = smp_objective(sfs, &polished);

    let (w, value) = if polished_value <= run.best_value + 1e-12 {
        (polished, polished_value)
    } else {
        (run.best_w, run.best_value)
    };
    let active_indices = active_set(sfs, &w, value, cfg.active_tol);
    Ok(WorstCaseSolution {
        w_bar: RewardVector::new(w)?,
        value,
        active_indices,
        solver_iterations: run.iterations + polish_iters,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis(d: usize) -> Vec<Vec<f64>> {
        (0..d)
            .map(|k| (0..d).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    /// Dense angular grid on the unit circle.
    fn circle_oracle(sfs: &[Vec<f64>], samples: usize) -> f64 {
        (0..samples)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / samples as f64;
                smp_objective(sfs, &[t.cos(), t.sin()])
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn single_sf_points_away() {
        let sol = solve_worst_case(&[vec![0.6, 0.8]], &SolverConfig::default()).unwrap();
        assert!((sol.value + 1.0).abs() < 1e-12);
        assert!((sol.w_bar.as_slice()[0] + 0.6).abs() < 1e-12);
        assert!((sol.w_bar.as_slice()[1] + 0.8).abs() < 1e-12);
        assert_eq!(sol.active_indices, vec![0]);
    }

    #[test]
    fn simplex_vertices_d4() {
        let sol = solve_worst_case(&basis(4), &SolverConfig::default()).unwrap();
        assert!((sol.value + 0.5).abs() < 1e-12);
        for x in sol.w_bar.as_slice() {
            assert!((x + 0.5).abs() < 1e-12);
        }
        assert_eq!(sol.active_indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn simplex_d3_all_active() {
        let sfs = basis(3);
        let sol = solve_worst_case(&sfs, &SolverConfig::default()).unwrap();
        assert_eq!(extract_active(&sfs, &sol, 1e-6), vec![0, 1, 2]);
    }

    #[test]
    fn matches_circle_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let sfs: Vec<Vec<f64>> = (0..3)
                .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            let sol = solve_worst_case(&sfs, &SolverConfig::default()).unwrap();
            let oracle = circle_oracle(&sfs, 1_000_000);
            assert!((sol.value - oracle).abs() < 1e-4, "{} vs {oracle}", sol.value);
            assert!((sol.w_bar.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dominated_sf_is_inactive() {
        // w̄·ψ < 0 at the optimum, so the longer of two parallel SFs is the
        // dominated one: ψ_0 = 2 ψ_2 never attains the max.
        let half = vec![0.35, 0.1, 0.2];
        let long: Vec<f64> = half.iter().map(|x| 2.0 * x).collect();
        let sfs = vec![long.clone(), vec![0.1, 0.9, 0.3], half];
        let sol = solve_worst_case(&sfs, &SolverConfig::default()).unwrap();
        assert!(dot(&long, sol.w_bar.as_slice()) < sol.value);
        assert!(!extract_active(&sfs, &sol, 1e-6).contains(&0));
    }

    #[test]
    fn all_zero_sfs_are_degenerate() {
        let sol = solve_worst_case(&[vec![0.0; 3], vec![0.0; 3]], &SolverConfig::default()).unwrap();
        assert!(sol.degenerate);
        assert_eq!(sol.value, 0.0);
        let expected = -1.0 / 3f64.sqrt();
        assert!(sol.w_bar.as_slice().iter().all(|x| (x - expected).abs() < 1e-15));
    }

    #[test]
    fn zero_mean_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let sfs: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..5).map(|_| rng.random::<f64>()).collect())
                .collect();
            let free = solve_worst_case(&sfs, &SolverConfig::default()).unwrap();
            let cfg = SolverConfig {
                zero_mean: true,
                ..SolverConfig::default()
            };
            let constrained = solve_worst_case(&sfs, &cfg).unwrap();
            assert!(constrained.w_bar.as_slice().iter().sum::<f64>().abs() <= 1e-8);
            assert!(constrained.value >= free.value - 1e-9);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = SolverConfig::default();
        assert!(solve_worst_case(&[], &cfg).is_err());
        assert!(solve_worst_case(&[vec![f64::NAN, 0.0]], &cfg).is_err());
        assert!(solve_worst_case(&[vec![0.1, 0.2], vec![0.1]], &cfg).is_err());
        let bad = SolverConfig {
            max_iterations: 0,
            ..cfg
        };
        assert!(solve_worst_case(&[vec![0.1]], &bad).is_err());
    }

    #[test]
    fn solution_json_fields() {
        let sol = solve_worst_case(&[vec![0.6, 0.8]], &SolverConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&sol.to_json()).unwrap();
        for key in ["w_bar", "value", "active_indices", "solver_iterations"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v.get("degenerate").is_none());
    }
}
