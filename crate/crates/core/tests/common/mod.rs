//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use setmax::mdp::{evaluate_policy, DeterministicPolicy, FeatureMdp, RewardVector};
use setmax::successor::compute_sf;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn objective(points: &[Vec<f64>], w: &[f64]) -> f64 {
    points
        .iter()
        .map(|p| dot(p, w))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Orthonormal basis of the tangent space of the sphere at unit `w`.
fn tangent_basis(w: &[f64]) -> Vec<Vec<f64>> {
    let k = w.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for e in 0..k {
        let mut v: Vec<f64> = (0..k).map(|j| if j == e { 1.0 } else { 0.0 }).collect();
        for b in std::iter::once(w.to_vec()).chain(basis.iter().cloned()) {
            let c = dot(&v, &b);
            v.iter_mut().zip(&b).for_each(|(x, y)| *x -= c * y);
        }
        if norm(&v) > 1e-6 {
            basis.push(normalize(v));
        }
        if basis.len() == k - 1 {
            break;
        }
    }
    basis
}

/// `min_{‖w‖ ≤ 1} max_i w·p_i` for points in one to three dimensions: a
/// 10⁶-point grid on the unit sphere followed by repeated local grids around
/// the incumbent with halving radius.
pub fn ball_min_oracle(points: &[Vec<f64>]) -> f64 {
    let k = points[0].len();
    const N: usize = 1_000_000;
    let (mut best_w, mut best, spacing) = match k {
        1 => {
            let lo = objective(points, &[1.0]).min(objective(points, &[-1.0]));
            return lo.min(0.0);
        }
        2 => {
            let mut best = (vec![1.0, 0.0], f64::INFINITY);
            for i in 0..N {
                let t = std::f64::consts::TAU * i as f64 / N as f64;
                let w = [t.cos(), t.sin()];
                let v = objective(points, &w);
                if v < best.1 {
                    best = (w.to_vec(), v);
                }
            }
            (best.0, best.1, std::f64::consts::TAU / N as f64)
        }
        3 => {
            // Fibonacci lattice
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            let mut best = (vec![1.0, 0.0, 0.0], f64::INFINITY);
            for i in 0..N {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / N as f64;
                let r = (1.0 - z * z).sqrt();
                let t = golden * i as f64;
                let w = [r * t.cos(), r * t.sin(), z];
                let v = objective(points, &w);
                if v < best.1 {
                    best = (w.to_vec(), v);
                }
            }
            (best.0, best.1, (4.0 * std::f64::consts::PI / N as f64).sqrt())
        }
        _ => panic!("sphere oracle supports at most three dimensions"),
    };

    const STEPS: i32 = 20;
    let mut radius = 4.0 * spacing;
    for _ in 0..45 {
        let basis = tangent_basis(&best_w);
        let offsets: Vec<f64> = (-STEPS..=STEPS)
            .map(|j| radius * j as f64 / STEPS as f64)
            .collect();
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        if basis.len() == 1 {
            for &a in &offsets {
                candidates.push(best_w.iter().zip(&basis[0]).map(|(w, u)| w + a * u).collect());
            }
        } else {
            for &a in &offsets {
                for &b in &offsets {
                    candidates.push(
                        (0..k)
                            .map(|j| best_w[j] + a * basis[0][j] + b * basis[1][j])
                            .collect(),
                    );
                }
            }
        }
        for c in candidates {
            let c = normalize(c);
            let v = objective(points, &c);
            if v < best {
                best = v;
                best_w = c;
            }
        }
        radius *= 0.5;
    }
    best.min(0.0)
}

/// Orthonormal basis of `{x : Σ x_i = 0}` in `d` dimensions.
pub fn zero_sum_basis(d: usize) -> Vec<Vec<f64>> {
    let ones = normalize(vec![1.0; d]);
    let mut full = tangent_basis(&ones);
    full.truncate(d - 1);
    full
}

/// Same oracle restricted to zero-sum rewards, via coordinates in the
/// zero-sum subspace.
pub fn zero_sum_ball_min_oracle(points: &[Vec<f64>]) -> f64 {
    let basis = zero_sum_basis(points[0].len());
    let projected: Vec<Vec<f64>> = points
        .iter()
        .map(|p| basis.iter().map(|b| dot(p, b)).collect())
        .collect();
    ball_min_oracle(&projected)
}

/// Best normalized value over every deterministic policy.
pub fn enumerated_optimum(mdp: &FeatureMdp, w: &RewardVector) -> f64 {
    DeterministicPolicy::enumerate(mdp.num_states(), mdp.num_actions())
        .iter()
        .map(|pi| evaluate_policy(mdp, pi, w).unwrap().value)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Aggregate SFs of every deterministic policy, duplicates removed.
pub fn vertex_sfs(mdp: &FeatureMdp) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for pi in DeterministicPolicy::enumerate(mdp.num_states(), mdp.num_actions()) {
        let sf = compute_sf(mdp, &pi).unwrap().aggregate().to_vec();
        if !out.iter().any(|o| o.iter().zip(&sf).all(|(a, b)| (a - b).abs() < 1e-12)) {
            out.push(sf);
        }
    }
    out
}

/// Smallest norm over a barycentric grid on every triple of vertex SFs.
/// Exact up to grid resolution when the feature dimension is at most three,
/// since the min-norm point of a polytope then lies on a face spanned by at
/// most three vertices.
pub fn mixture_grid_oracle(vertices: &[Vec<f64>], resolution: usize) -> f64 {
    assert!(vertices[0].len() <= 3);
    let n = vertices.len();
    let mut best = f64::INFINITY;
    let mut point = vec![0.0; vertices[0].len()];
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                for a in 0..=resolution {
                    for b in 0..=resolution - a {
                        let (x, y) = (a as f64 / resolution as f64, b as f64 / resolution as f64);
                        let z = 1.0 - x - y;
                        for (m, p) in point.iter_mut().enumerate() {
                            *p = x * vertices[i][m] + y * vertices[j][m] + z * vertices[k][m];
                        }
                        best = best.min(dot(&point, &point));
                    }
                }
            }
        }
    }
    best.sqrt()
}

pub fn random_points<R: Rng>(rng: &mut R, n: usize, d: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(lo..hi)).collect())
        .collect()
}

pub fn random_policy<R: Rng>(rng: &mut R, mdp: &FeatureMdp) -> DeterministicPolicy {
    DeterministicPolicy::new(
        (0..mdp.num_states())
            .map(|_| rng.random_range(0..mdp.num_actions()))
            .collect(),
    )
}
