//! Per-candidate reformulation: for each `i`, minimize `w·ψ_i` over the unit
//! ball intersected with the cone `{w : w·(ψ_j - ψ_i) ≤ 0 ∀j}` on which `ψ_i`
//! attains the max. The overall minimizer is the best candidate.
//!
//! Each candidate is solved by projected gradient; projection onto the
//! intersection uses Dykstra's alternating projections. With `zero_mean` the
//! SFs are first projected onto the zero-sum subspace, which then contains
//! every iterate.

use super::{active_set, project_feasible, project_zero_mean, smp_objective, validate_sfs, SolverConfig, WorstCaseSolution};
use crate::error::{Error, Result};
use crate::mdp::{dot, RewardVector};

const OUTER_ITERS: usize = 4_000;
const DYKSTRA_CYCLES: usize = 5_000;
const STEP_GAIN: f64 = 50.0;

enum ConvexSet {
    Ball,
    /// `{w : a·w ≤ 0}` with `‖a‖² = norm_sq`.
    HalfSpace { a: Vec<f64>, norm_sq: f64 },
}

impl ConvexSet {
    fn project(&self, v: &mut [f64]) {
        match self {
            ConvexSet::Ball => {
                let n = dot(v, v).sqrt();
                if n > 1.0 {
                    v.iter_mut().for_each(|x| *x /= n);
                }
            }
            ConvexSet::HalfSpace { a, norm_sq } => {
                let excess = dot(a, v);
                if excess > 0.0 {
                    let c = excess / norm_sq;
                    v.iter_mut().zip(a).for_each(|(x, ak)| *x -= c * ak);
                }
            }
        }
    }
}

fn dykstra(sets: &[ConvexSet], y: &[f64]) -> Vec<f64> {
    let mut x = y.to_vec();
    let mut increments = vec![vec![0.0; y.len()]; sets.len()];
    for _ in 0..DYKSTRA_CYCLES {
        let mut moved = 0.0;
        for (set, inc) in sets.iter().zip(increments.iter_mut()) {
            let mut z: Vec<f64> = x.iter().zip(inc.iter()).map(|(a, b)| a + b).collect();
            let before = z.clone();
            set.project(&mut z);
            for k in 0..z.len() {
                inc[k] = before[k] - z[k];
                moved += (z[k] - x[k]).abs();
            }
            x = z;
        }
        if moved < 1e-13 {
            break;
        }
    }
    x
}

fn solve_candidate(sfs: &[Vec<f64>], i: usize) -> (Vec<f64>, usize) {
    let dim = sfs[0].len();
    let target = &sfs[i];
    let mut sets = vec![ConvexSet::Ball];
    for (j, other) in sfs.iter().enumerate() {
        if j == i {
            continue;
        }
        let a: Vec<f64> = other.iter().zip(target).map(|(o, t)| o - t).collect();
        let norm_sq = dot(&a, &a);
        if norm_sq > 0.0 {
            sets.push(ConvexSet::HalfSpace { a, norm_sq });
        }
    }

    let norm = dot(target, target).sqrt();
    if norm == 0.0 {
        return (vec![0.0; dim], 0);
    }
    let step = STEP_GAIN / norm;
    let mut w = vec![0.0; dim];
    let mut iterations = 0;
    for t in 1..=OUTER_ITERS {
        iterations = t;
        let y: Vec<f64> = w.iter().zip(target).map(|(wk, g)| wk - step * g).collect();
        let next = dykstra(&sets, &y);
        let change: f64 = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum();
        w = next;
        if change < 1e-12 {
            break;
        }
    }
    (w, iterations)
}

/// Worst-case reward through the per-candidate reformulation. Honors
/// `cfg.zero_mean` and `cfg.active_tol`; the remaining fields only apply to
/// [`super::solve_worst_case`].
pub fn solve_worst_case_qp(sfs: &[Vec<f64>], cfg: &SolverConfig) -> Result<WorstCaseSolution> {
    validate_sfs(sfs)?;
    cfg.validate()?;
    if cfg.zero_mean && sfs[0].len() < 2 {
        return Err(Error::invalid("zero-mean rewards need at least two features"));
    }
    let work: Vec<Vec<f64>> = if cfg.zero_mean {
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
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut total_iterations = 0;
    for i in 0..work.len() {
        let (mut w, iters) = solve_candidate(&work, i);
        project_feasible(&mut w, cfg.zero_mean);
        total_iterations += iters;
        let value = smp_objective(sfs, &w);
        if best.as_ref().is_none_or(|(_, v)| value < *v) {
            best = Some((w, value));
        }
    }
    let (w, value) = best.expect("at least one candidate");
    let active_indices = active_set(sfs, &w, value, cfg.active_tol);
    let degenerate = dot(&w, &w) < 0.5;
    Ok(WorstCaseSolution {
        w_bar: RewardVector::new(w)?,
        value,
        active_indices,
        solver_iterations: total_iterations,
        degenerate,
    })
}
