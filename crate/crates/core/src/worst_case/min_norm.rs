//! Wolfe's minimum-norm-point algorithm over the convex hull of a point set.
//!
//! `min_{‖w‖≤1} max_i w·ψ_i = -min_{x ∈ conv ψ} ‖x‖`, and when the min-norm
//! point `x*` is nonzero the unique minimizer is `w* = -x*/‖x*‖`.

use nalgebra::{DMatrix, DVector};

use crate::mdp::dot;

#[derive(Debug, Clone)]
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct MinNormPoint {
    pub point: Vec<f64>,
    /// Convex weights over the input points.
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// `x·x - min_i x·p_i` at exit; `‖x‖ - ‖x*‖ ≤ gap / ‖x‖`.
    pub gap: f64,
}

const REL_TOL: f64 = 1e-15;
const WEIGHT_EPS: f64 = 1e-14;

fn combine(points: &[Vec<f64>], corral: &[usize], lambda: &[f64]) -> Vec<f64> {
    let dim = points[0].len();
    let mut x = vec![0.0; dim];
    for (&idx, &l) in corral.iter().zip(lambda) {
        for (xk, pk) in x.iter_mut().zip(&points[idx]) {
            *xk += l * pk;
        }
    }
    x
}

/// Minimizer of `‖Σ α_i p_i‖` over the affine hull of the corral (`Σ α = 1`).
fn affine_minimizer(points: &[Vec<f64>], corral: &[usize], scale: f64) -> Option<Vec<f64>> {
    let m = corral.len();
    if m == 1 {
        return Some(vec![1.0]);
    }
    let dim = points[0].len();
    let base = &points[corral[0]];
    // β minimizes ‖base + D β‖ with D's columns p_i - base
    let d = DMatrix::from_fn(dim, m - 1, |r, c| points[corral[c + 1]][r] - base[r]);
    let rhs = DVector::from_fn(dim, |r, _| -base[r]);
    let svd = d.svd(true, true);
    let beta = svd.solve(&rhs, 1e-13 * scale.sqrt()).ok()?;
    if beta.iter().any(|b| !b.is_finite()) {
        return None;
    }
    let mut alpha = Vec::with_capacity(m);
    alpha.push(1.0 - beta.sum());
    alpha.extend(beta.iter().copied());
    Some(alpha)
}

pub(crate) fn min_norm_point(points: &[Vec<f64>]) -> MinNormPoint {
    let n = points.len();
    let norms: Vec<f64> = points.iter().map(|p| dot(p, p)).collect();
    let scale = norms.iter().copied().fold(0.0, f64::max);
    let start = norms
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v < norms[best] { i } else { best });

    let mut corral = vec![start];
    let mut lambda = vec![1.0];
    let mut x = points[start].clone();
    let mut iterations = 0;
    let mut gap;

    let max_major = 100 + 50 * n;
    loop {
        iterations += 1;
        let (j, min_dot) = points
            .iter()
            .map(|p| dot(&x, p))
            .enumerate()
            .fold((0, f64::INFINITY), |b, (i, v)| if v < b.1 { (i, v) } else { b });
        gap = dot(&x, &x) - min_dot;
        if gap <= REL_TOL * scale || corral.contains(&j) || iterations > max_major {
            break;
        }
        corral.push(j);
        lambda.push(0.0);

        let mut stalled = false;
        loop {
            let Some(alpha) = affine_minimizer(points, &corral, scale) else {
                stalled = true;
                break;
            };
            if alpha.iter().all(|&a| a > WEIGHT_EPS) {
                lambda = alpha;
                break;
            }
            let mut theta = 1.0;
            for (&l, &a) in lambda.iter().zip(&alpha) {
                if a <= WEIGHT_EPS && l - a > 0.0 {
                    theta = f64::min(theta, l / (l - a));
                }
            }
            let mut next: Vec<f64> = lambda
                .iter()
                .zip(&alpha)
                .map(|(&l, &a)| theta * a + (1.0 - theta) * l)
                .collect();
            // drop at least the point that hit zero
            let drop_at = next
                .iter()
                .enumerate()
                .fold(0, |b, (i, &v)| if v < next[b] { i } else { b });
            next[drop_at] = 0.0;
            let keep: Vec<usize> = (0..corral.len()).filter(|&i| next[i] > WEIGHT_EPS).collect();
            corral = keep.iter().map(|&i| corral[i]).collect();
            lambda = keep.iter().map(|&i| next[i]).collect();
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
            if corral.len() == 1 {
                lambda = vec![1.0];
                break;
            }
        }
        if stalled {
            corral.pop();
            lambda.pop();
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
            x = combine(points, &corral, &lambda);
            break;
        }
        x = combine(points, &corral, &lambda);
    }

    let mut weights = vec![0.0; n];
    for (&idx, &l) in corral.iter().zip(&lambda) {
        weights[idx] += l;
    }
    let final_min = points
        .iter()
        .map(|p| dot(&x, p))
        .fold(f64::INFINITY, f64::min);
    gap = gap.max(dot(&x, &x) - final_min);
    MinNormPoint {
        point: x,
        weights,
        iterations,
        gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_vertices_give_barycenter() {
        for d in 1..=8 {
            let pts: Vec<Vec<f64>> = (0..d)
                .map(|k| (0..d).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
                .collect();
            let r = min_norm_point(&pts);
            for x in &r.point {
                assert!((x - 1.0 / d as f64).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn segment_projection() {
        // origin projects onto the interior of the segment [(1,0),(0,1)] at (0.5,0.5)
        let r = min_norm_point(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert!((r.point[0] - 0.5).abs() < 1e-15 && (r.point[1] - 0.5).abs() < 1e-15);
        assert_eq!(r.weights[2], 0.0);
    }

    #[test]
    fn vertex_solution() {
        let r = min_norm_point(&[vec![0.3, 0.4], vec![0.6, 0.9], vec![0.9, 0.5]]);
        assert_eq!(r.point, vec![0.3, 0.4]);
    }

    #[test]
    fn duplicate_points_are_harmless() {
        let p = vec![0.2, 0.7, 0.1];
        let q = vec![0.6, 0.1, 0.3];
        let r = min_norm_point(&[p.clone(), q.clone(), p.clone(), q]);
        assert!(r.gap <= 1e-14);
        let total: f64 = r.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
